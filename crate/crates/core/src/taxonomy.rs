//! Credential categories, rule signatures, and the record type shared by
//! every stage of the pipeline.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight credential categories. Discriminants are the stable class ids
/// used by the classifier, checkpoints, and plot exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CredentialCategory {
    Passwords = 0,
    GenericSecrets = 1,
    PrivateKeys = 2,
    GenericTokens = 3,
    PredefinedPatterns = 4,
    AuthKeysTokens = 5,
    SeedsSaltsNonces = 6,
    Others = 7,
}

pub const NUM_CATEGORIES: usize = 8;

impl CredentialCategory {
    pub const ALL: [CredentialCategory; NUM_CATEGORIES] = [
        CredentialCategory::Passwords,
        CredentialCategory::GenericSecrets,
        CredentialCategory::PrivateKeys,
        CredentialCategory::GenericTokens,
        CredentialCategory::PredefinedPatterns,
        CredentialCategory::AuthKeysTokens,
        CredentialCategory::SeedsSaltsNonces,
        CredentialCategory::Others,
    ];

    /// Most specific first; used to pick one category when a line hits
    /// several signatures.
    pub const PRECEDENCE: [CredentialCategory; NUM_CATEGORIES] = [
        CredentialCategory::PrivateKeys,
        CredentialCategory::PredefinedPatterns,
        CredentialCategory::SeedsSaltsNonces,
        CredentialCategory::AuthKeysTokens,
        CredentialCategory::GenericTokens,
        CredentialCategory::GenericSecrets,
        CredentialCategory::Passwords,
        CredentialCategory::Others,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::domain(format!("category id {id} out of range 0..{NUM_CATEGORIES}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            CredentialCategory::Passwords => "Passwords",
            CredentialCategory::GenericSecrets => "GenericSecrets",
            CredentialCategory::PrivateKeys => "PrivateKeys",
            CredentialCategory::GenericTokens => "GenericTokens",
            CredentialCategory::PredefinedPatterns => "PredefinedPatterns",
            CredentialCategory::AuthKeysTokens => "AuthKeysTokens",
            CredentialCategory::SeedsSaltsNonces => "SeedsSaltsNonces",
            CredentialCategory::Others => "Others",
        }
    }

    /// Human-facing label, as used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            CredentialCategory::Passwords => "Passwords",
            CredentialCategory::GenericSecrets => "Generic Secrets",
            CredentialCategory::PrivateKeys => "Private Keys",
            CredentialCategory::GenericTokens => "Generic Tokens",
            CredentialCategory::PredefinedPatterns => "Predefined Patterns",
            CredentialCategory::AuthKeysTokens => "Authentication Keys and Tokens",
            CredentialCategory::SeedsSaltsNonces => "Seeds, Salts, Nonces",
            CredentialCategory::Others => "Others",
        }
    }

    /// Precedence rank: 0 is the most specific category.
    pub fn precedence(self) -> usize {
        Self::PRECEDENCE.iter().position(|&c| c == self).unwrap_or(NUM_CATEGORIES)
    }
}

impl fmt::Display for CredentialCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CredentialCategory {
    type Err = Error;

    /// Accepts canonical names, human labels, common singular/alias spellings
    /// (case and punctuation insensitive), and numeric ids.
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if let Ok(id) = trimmed.parse::<usize>() {
            return Self::from_id(id);
        }
        let norm: String = trimmed
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let cat = match norm.as_str() {
            "passwords" | "password" => CredentialCategory::Passwords,
            "genericsecrets" | "genericsecret" => CredentialCategory::GenericSecrets,
            "privatekeys" | "privatekey" => CredentialCategory::PrivateKeys,
            "generictokens" | "generictoken" => CredentialCategory::GenericTokens,
            "predefinedpatterns" | "predefinedpattern" => CredentialCategory::PredefinedPatterns,
            "authkeystokens" | "authkeyandtoken" | "authkeysandtokens" | "authenticationkeysandtokens"
            | "authenticationkeyandtoken" | "authenticationkeytoken" => CredentialCategory::AuthKeysTokens,
            "seedssaltsnonces" | "seedsaltnonce" | "saltsseedsandnonces" | "seedssaltsandnonces" => {
                CredentialCategory::SeedsSaltsNonces
            }
            "others" | "other" => CredentialCategory::Others,
            _ => return Err(Error::domain(format!("unknown credential category {s:?}"))),
        };
        Ok(cat)
    }
}

/// One labeled (or candidate) credential-bearing line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredentialRecord {
    pub text: String,
    pub category: CredentialCategory,
    pub is_true: bool,
    pub source_path: String,
    pub line_number: usize,
    pub language_tag: String,
}

impl CredentialRecord {
    /// Trims `text` and enforces the record invariants.
    pub fn new(
        text: &str,
        category: CredentialCategory,
        is_true: bool,
        source_path: impl Into<String>,
        line_number: usize,
        language_tag: impl Into<String>,
    ) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::domain("credential text is empty after trimming"));
        }
        if line_number == 0 {
            return Err(Error::domain("line numbers start at 1"));
        }
        Ok(CredentialRecord {
            text: text.to_string(),
            category,
            is_true,
            source_path: source_path.into(),
            line_number,
            language_tag: language_tag.into(),
        })
    }
}

/// Characters allowed after a prefix in a [`Pattern::Prefixed`] rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailCharset {
    /// `A-Z0-9`
    UpperAlnum,
    /// `A-Za-z0-9`
    Alnum,
    /// `A-Za-z0-9_-`
    Base64Url,
}

impl TailCharset {
    fn accepts(self, b: u8) -> bool {
        match self {
            TailCharset::UpperAlnum => b.is_ascii_uppercase() || b.is_ascii_digit(),
            TailCharset::Alnum => b.is_ascii_alphanumeric(),
            TailCharset::Base64Url => b.is_ascii_alphanumeric() || b == b'_' || b == b'-',
        }
    }
}

/// A literal substring, or a literal prefix followed by a run of characters
/// from a fixed charset. Patterns match case-sensitively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pattern {
    Literal(String),
    Prefixed {
        prefix: String,
        tail: TailCharset,
        min_tail: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_tail: Option<usize>,
    },
}

impl Pattern {
    pub fn prefixed(prefix: &str, tail: TailCharset, min_tail: usize, max_tail: Option<usize>) -> Self {
        Pattern::Prefixed {
            prefix: prefix.to_string(),
            tail,
            min_tail,
            max_tail,
        }
    }

    /// Byte offset of the first match in `line`.
    pub fn find(&self, line: &str) -> Option<usize> {
        match self {
            Pattern::Literal(lit) => line.find(lit.as_str()),
            Pattern::Prefixed {
                prefix,
                tail,
                min_tail,
                max_tail,
            } => {
                let bytes = line.as_bytes();
                let mut from = 0;
                while let Some(rel) = line[from..].find(prefix.as_str()) {
                    let start = from + rel;
                    let tail_start = start + prefix.len();
                    let run = bytes[tail_start..].iter().take_while(|&&b| tail.accepts(b)).count();
                    let within_max = max_tail.is_none_or(|m| run <= m);
                    if run >= *min_tail && within_max {
                        return Some(start);
                    }
                    from = start + 1;
                    while !line.is_char_boundary(from) {
                        from += 1;
                    }
                }
                None
            }
        }
    }
}

/// Lexical cues that identify one credential category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSignature {
    pub category: CredentialCategory,
    pub keywords: Vec<String>,
    #[serde(default)]
    pub patterns: Vec<Pattern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_floor: Option<f64>,
}

impl RuleSignature {
    pub fn validate(&self) -> Result<()> {
        for kw in &self.keywords {
            if kw.is_empty() {
                return Err(Error::Schema(format!("{}: empty keyword", self.category)));
            }
            if kw.chars().any(char::is_uppercase) {
                return Err(Error::Schema(format!("{}: keyword {kw:?} is not lowercase", self.category)));
            }
        }
        if let Some(floor) = self.entropy_floor {
            if !(0.0..=8.0).contains(&floor) {
                return Err(Error::Schema(format!("{}: entropy_floor {floor} outside [0, 8]", self.category)));
            }
        }
        Ok(())
    }

    /// True if the line contains one of the keywords (given the lowercased
    /// line) or one of the patterns (given the original line).
    pub fn matches(&self, line: &str, lowered: &str) -> bool {
        self.keywords.iter().any(|k| lowered.contains(k.as_str()))
            || self.patterns.iter().any(|p| p.find(line).is_some())
    }
}

/// The built-in rule table: one signature per category.
pub fn default_rules() -> Vec<RuleSignature> {
    use CredentialCategory::*;
    let kw = |words: &[&str]| words.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    let lit = |s: &str| Pattern::Literal(s.to_string());
    vec![
        RuleSignature {
            category: Passwords,
            keywords: kw(&["password", "passwd", "pwd"]),
            patterns: vec![],
            entropy_floor: Some(3.5),
        },
        RuleSignature {
            category: GenericSecrets,
            keywords: kw(&["secret"]),
            patterns: vec![],
            entropy_floor: None,
        },
        RuleSignature {
            category: PrivateKeys,
            keywords: kw(&["private_key", "privatekey"]),
            patterns: vec![
                lit("BEGIN RSA PRIVATE KEY"),
                lit("BEGIN DSA PRIVATE KEY"),
                lit("BEGIN EC PRIVATE KEY"),
                lit("BEGIN OPENSSH PRIVATE KEY"),
                lit("BEGIN ENCRYPTED PRIVATE KEY"),
                lit("BEGIN PRIVATE KEY"),
                lit("BEGIN PGP PRIVATE KEY BLOCK"),
            ],
            entropy_floor: None,
        },
        RuleSignature {
            category: GenericTokens,
            keywords: kw(&["token"]),
            patterns: vec![],
            entropy_floor: None,
        },
        RuleSignature {
            category: PredefinedPatterns,
            keywords: kw(&["accesskeyid", "access_key_id"]),
            patterns: vec![
                // AWS access key id
                Pattern::prefixed("AKIA", TailCharset::UpperAlnum, 16, Some(16)),
                // Google API key
                Pattern::prefixed("AIza", TailCharset::Base64Url, 35, Some(35)),
                // JWT header
                Pattern::prefixed("eyJ", TailCharset::Base64Url, 10, None),
            ],
            entropy_floor: None,
        },
        RuleSignature {
            category: AuthKeysTokens,
            keywords: kw(&["auth"]),
            patterns: vec![],
            entropy_floor: None,
        },
        RuleSignature {
            category: SeedsSaltsNonces,
            keywords: kw(&["seed", "salt", "nonce"]),
            patterns: vec![],
            entropy_floor: None,
        },
        RuleSignature {
            category: Others,
            keywords: kw(&["credential"]),
            patterns: vec![],
            entropy_floor: None,
        },
    ]
}

/// Returns the most specific category among the signatures the line hits.
pub fn best_match(rules: &[RuleSignature], line: &str) -> Option<CredentialCategory> {
    let lowered = line.to_lowercase();
    rules
        .iter()
        .filter(|r| r.matches(line, &lowered))
        .map(|r| r.category)
        .min_by_key(|c| c.precedence())
}

pub fn validate_rules(rules: &[RuleSignature]) -> Result<()> {
    rules.iter().try_for_each(RuleSignature::validate)
}

pub fn rules_from_json(json: &str) -> Result<Vec<RuleSignature>> {
    let rules: Vec<RuleSignature> = serde_json::from_str(json)?;
    validate_rules(&rules)?;
    Ok(rules)
}

pub fn rules_to_json(rules: &[RuleSignature]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rules)?)
}

pub fn load_rules(path: &Path) -> Result<Vec<RuleSignature>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    rules_from_json(&text)
}
