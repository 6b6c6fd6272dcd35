//! Directory scanning: rule and entropy based candidate extraction, and
//! optional embedding + classification of each candidate line.
//!
//! A line becomes a candidate when it hits a rule signature (keyword,
//! case-insensitive; pattern, case-sensitive) or contains a token of at
//! least `min_token_length` bytes whose entropy reaches the floor. Tokens
//! are the pieces left after splitting on whitespace, quotes and `=:,`.
//! Lines inside a PEM private-key block are folded into the header line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::classifier::Mlp;
use crate::embedder::{embed_batch_lenient, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::taxonomy::{best_match, CredentialCategory, Pattern, RuleSignature};

pub const DEFAULT_MAX_FILE_BYTES: u64 = 1 << 20;
pub const DEFAULT_ENTROPY_FLOOR: f64 = 3.5;
pub const DEFAULT_MIN_TOKEN_LENGTH: usize = 8;
/// Bytes inspected for a NUL when deciding whether a file is binary.
pub const BINARY_SNIFF_BYTES: usize = 8192;

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Shannon entropy in bits per byte. Empty input gives 0.
pub fn shannon_entropy(s: &str) -> f64 {
    let bytes = s.as_bytes();
    if bytes.is_empty() {
        return 0.0;
    }
    let mut counts = [0usize; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '=' | ':' | ',')
}

/// Byte ranges of the tokens of `line`.
pub fn token_spans(line: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (is_delimiter(c), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, line.len()));
    }
    spans
}

/// Keeps the first and last two characters and stars the rest; tokens of
/// four characters or fewer are starred entirely.
pub fn mask_token(token: &str) -> String {
    let chars: Vec<char> = token.chars().collect();
    if chars.len() <= 4 {
        return "*".repeat(chars.len());
    }
    let n = chars.len();
    chars
        .iter()
        .enumerate()
        .map(|(i, &c)| if i < 2 || i >= n - 2 { c } else { '*' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub root: PathBuf,
    /// Relative-path globs; empty means every file.
    pub include_globs: Vec<String>,
    pub exclude_globs: Vec<String>,
    pub max_file_bytes: u64,
    pub binary_skip: bool,
    pub entropy_floor_default: f64,
    pub min_token_length: usize,
    pub mask: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            root: PathBuf::from("."),
            include_globs: Vec::new(),
            exclude_globs: vec![".git/**".to_string()],
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
            binary_skip: true,
            entropy_floor_default: DEFAULT_ENTROPY_FLOOR,
            min_token_length: DEFAULT_MIN_TOKEN_LENGTH,
            mask: true,
        }
    }
}

impl ScanConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ScanConfig {
            root: root.into(),
            ..ScanConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_file_bytes == 0 {
            return Err(Error::domain("max_file_bytes must be positive"));
        }
        if !(0.0..=8.0).contains(&self.entropy_floor_default) {
            return Err(Error::domain("entropy floor must lie in [0, 8]"));
        }
        if self.min_token_length == 0 {
            return Err(Error::domain("min_token_length must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    Rule,
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Path relative to the scan root, `/`-separated.
    pub source_path: String,
    pub line_number: usize,
    /// The trimmed line.
    pub text: String,
    pub matched_rule: CredentialCategory,
    /// Highest token entropy on the line (whole-line entropy if it has no tokens).
    pub entropy_bits: f64,
    pub trigger: Trigger,
    pub language_tag: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub files_scanned: usize,
    pub files_skipped_binary: usize,
    pub files_skipped_size: usize,
    pub files_unreadable: usize,
    pub candidates: usize,
    pub embed_errors: usize,
}

pub fn language_tag(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "py" => "Python",
        "go" => "Go",
        "js" | "mjs" | "cjs" => "JavaScript",
        "ts" | "tsx" => "TypeScript",
        "java" => "Java",
        "kt" | "kts" => "Kotlin",
        "rb" => "Ruby",
        "php" => "PHP",
        "cs" => "C#",
        "c" | "h" => "C",
        "cc" | "cpp" | "cxx" | "hpp" => "C++",
        "rs" => "Rust",
        "swift" => "Swift",
        "scala" => "Scala",
        "sh" | "bash" | "zsh" => "Shell",
        "ps1" => "PowerShell",
        "yaml" | "yml" => "YAML",
        "json" => "JSON",
        "xml" => "XML",
        "toml" => "TOML",
        "ini" | "cfg" | "conf" => "Config",
        "properties" => "Properties",
        "env" => "Env",
        "sql" => "SQL",
        "md" | "markdown" => "Markdown",
        "txt" => "Text",
        "html" | "htm" => "HTML",
        "pem" | "key" => "Key",
        "" => "None",
        _ => "Other",
    }
}

fn build_globs(patterns: &[String]) -> Result<Option<GlobSet>> {
    if patterns.is_empty() {
        return Ok(None);
    }
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        b.add(Glob::new(p).map_err(|e| Error::domain(format!("bad glob {p:?}: {e}")))?);
    }
    b.build()
        .map(Some)
        .map_err(|e| Error::domain(format!("bad glob set: {e}")))
}

fn relative_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let rel = if rel.as_os_str().is_empty() {
        Path::new(path.file_name().unwrap_or(path.as_os_str()))
    } else {
        rel
    };
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// The file list a scan visits, in lexicographic relative-path order.
pub fn list_files(config: &ScanConfig) -> Result<Vec<(PathBuf, String)>> {
    config.validate()?;
    let root = &config.root;
    std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    let include = build_globs(&config.include_globs)?;
    let exclude = build_globs(&config.exclude_globs)?;
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) if e.depth() == 0 => {
                let err = e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk failed"));
                return Err(Error::io(root, err));
            }
            Err(e) => {
                log::warn!("skipping unreadable entry: {e}");
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = relative_name(root, entry.path());
        if include.as_ref().is_some_and(|g| !g.is_match(&rel)) {
            continue;
        }
        if exclude.as_ref().is_some_and(|g| g.is_match(&rel)) {
            continue;
        }
        files.push((entry.into_path(), rel));
    }
    files.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(files)
}

struct Counters {
    scanned: AtomicUsize,
    binary: AtomicUsize,
    size: AtomicUsize,
    unreadable: AtomicUsize,
}

fn max_token_entropy(line: &str) -> f64 {
    let spans = token_spans(line);
    if spans.is_empty() {
        return shannon_entropy(line);
    }
    spans
        .iter()
        .map(|&(s, e)| shannon_entropy(&line[s..e]))
        .fold(0.0, f64::max)
}

fn has_high_entropy_token(line: &str, config: &ScanConfig) -> bool {
    token_spans(line).iter().any(|&(s, e)| {
        e - s >= config.min_token_length && shannon_entropy(&line[s..e]) >= config.entropy_floor_default
    })
}

/// Candidates from one file's text, in line order.
pub fn extract_candidates(
    text: &str,
    rel_path: &str,
    language: &str,
    rules: &[RuleSignature],
    config: &ScanConfig,
) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut in_pem = false;
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.trim();
        if in_pem {
            if line.contains("-----END") {
                in_pem = false;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (category, trigger) = match best_match(rules, line) {
            Some(c) => (c, Trigger::Rule),
            None if has_high_entropy_token(line, config) => (CredentialCategory::Others, Trigger::Entropy),
            None => continue,
        };
        if category == CredentialCategory::PrivateKeys && line.contains("BEGIN") && !line.contains("-----END") {
            in_pem = true;
        }
        out.push(Candidate {
            source_path: rel_path.to_string(),
            line_number: i + 1,
            text: line.to_string(),
            matched_rule: category,
            entropy_bits: max_token_entropy(line),
            trigger,
            language_tag: language.to_string(),
        });
    }
    out
}

fn scan_file(
    path: &Path,
    rel: &str,
    rules: &[RuleSignature],
    config: &ScanConfig,
    counters: &Counters,
) -> Vec<Candidate> {
    let skip = |counter: &AtomicUsize| {
        counter.fetch_add(1, Ordering::Relaxed);
        Vec::new()
    };
    match std::fs::metadata(path) {
        Ok(m) if m.len() > config.max_file_bytes => return skip(&counters.size),
        Ok(_) => {}
        Err(_) => return skip(&counters.unreadable),
    }
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("cannot read {}: {e}", path.display());
            return skip(&counters.unreadable);
        }
    };
    if config.binary_skip && bytes.iter().take(BINARY_SNIFF_BYTES).any(|&b| b == 0) {
        return skip(&counters.binary);
    }
    counters.scanned.fetch_add(1, Ordering::Relaxed);
    let text = String::from_utf8_lossy(&bytes);
    extract_candidates(&text, rel, language_tag(path), rules, config)
}

/// All candidates under `config.root`, ordered by path then line.
pub fn walk_candidates(config: &ScanConfig, rules: &[RuleSignature]) -> Result<(Vec<Candidate>, ScanSummary)> {
    let files = list_files(config)?;
    let counters = Counters {
        scanned: AtomicUsize::new(0),
        binary: AtomicUsize::new(0),
        size: AtomicUsize::new(0),
        unreadable: AtomicUsize::new(0),
    };
    let per_file: Vec<Vec<Candidate>> = files
        .par_iter()
        .map(|(path, rel)| scan_file(path, rel, rules, config, &counters))
        .collect();
    let candidates: Vec<Candidate> = per_file.into_iter().flatten().collect();
    let summary = ScanSummary {
        files_scanned: counters.scanned.into_inner(),
        files_skipped_binary: counters.binary.into_inner(),
        files_skipped_size: counters.size.into_inner(),
        files_unreadable: counters.unreadable.into_inner(),
        candidates: candidates.len(),
        embed_errors: 0,
    };
    Ok((candidates, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFinding {
    pub source_path: String,
    pub line_number: usize,
    pub snippet: String,
    pub matched_rule: CredentialCategory,
    pub entropy_bits: f64,
    pub predicted_category: Option<CredentialCategory>,
    pub probability: Option<f64>,
}

/// Masks the secret-looking parts of a line: any token that follows an
/// `=` or `:` delimiter, starts with a quote, is a long high-entropy
/// token, or contains a prefixed-pattern hit (literal patterns such as key
/// armor headers are not secret). Tokens naming a rule keyword (the
/// variable name) stay readable.
pub fn mask_line(line: &str, rules: &[RuleSignature], config: &ScanConfig) -> String {
    let pattern_starts: Vec<usize> = rules
        .iter()
        .flat_map(|r| r.patterns.iter())
        .filter(|p| matches!(p, Pattern::Prefixed { .. }))
        .filter_map(|p| p.find(line))
        .collect();
    let keywords: Vec<&str> = rules.iter().flat_map(|r| r.keywords.iter().map(String::as_str)).collect();
    let mut out = String::with_capacity(line.len());
    let mut last = 0;
    for (s, e) in token_spans(line) {
        let token = &line[s..e];
        let lowered = token.to_lowercase();
        let before = line[..s].trim_end_matches(char::is_whitespace);
        let after_assign = before.ends_with(['=', ':']);
        let quoted = line[..s].ends_with(['"', '\'', '`']);
        let high_entropy =
            e - s >= config.min_token_length && shannon_entropy(token) >= config.entropy_floor_default;
        let has_pattern = pattern_starts.iter().any(|&p| p >= s && p < e);
        let names_keyword = keywords.iter().any(|k| lowered.contains(k));
        let secret = has_pattern || (!names_keyword && (after_assign || quoted || high_entropy));
        out.push_str(&line[last..s]);
        if secret {
            out.push_str(&mask_token(token));
        } else {
            out.push_str(token);
        }
        last = e;
    }
    out.push_str(&line[last..]);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub findings: Vec<ScanFinding>,
    pub summary: ScanSummary,
}

impl ScanReport {
    pub fn exit_code(&self) -> i32 {
        if self.findings.is_empty() {
            EXIT_CLEAN
        } else {
            EXIT_FINDINGS
        }
    }

    /// One JSON object per finding, newline-terminated.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for f in &self.findings {
            out.push_str(&serde_json::to_string(f)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<40} {:<20} {:>7} {:<20} {:>6}  SNIPPET",
            "LOCATION", "RULE", "ENTROPY", "PREDICTED", "PROB"
        );
        for f in &self.findings {
            let loc = format!("{}:{}", f.source_path, f.line_number);
            let predicted = f.predicted_category.map_or("-".to_string(), |c| c.name().to_string());
            let prob = f.probability.map_or("-".to_string(), |p| format!("{p:.3}"));
            let _ = writeln!(
                out,
                "{loc:<40} {:<20} {:>7.3} {predicted:<20} {prob:>6}  {}",
                f.matched_rule.name(),
                f.entropy_bits,
                f.snippet
            );
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "{} finding(s) in {} file(s); skipped {} binary, {} oversized, {} unreadable; {} embedding error(s)",
            self.findings.len(),
            s.files_scanned,
            s.files_skipped_binary,
            s.files_skipped_size,
            s.files_unreadable,
            s.embed_errors
        );
        out
    }
}

/// Exit status for a scan outcome: 0 clean, 1 findings, 2 operational error.
pub fn exit_code(result: &Result<ScanReport>) -> i32 {
    match result {
        Ok(r) => r.exit_code(),
        Err(_) => EXIT_ERROR,
    }
}

/// Walks the tree and, when both a classifier and an embedder are given,
/// attaches the argmax category and its probability to each finding.
/// Candidates whose embedding fails keep empty prediction fields and are
/// counted in `summary.embed_errors`.
pub fn scan_and_classify(
    config: &ScanConfig,
    rules: &[RuleSignature],
    classifier: Option<&Mlp>,
    embedder: Option<&dyn EmbeddingProvider>,
) -> Result<ScanReport> {
    let model_and_embedder = match (classifier, embedder) {
        (Some(m), Some(e)) => {
            if m.arch.input_dim != e.dimension() {
                return Err(Error::domain(format!(
                    "classifier expects {}-dim input but the embedder produces {}",
                    m.arch.input_dim,
                    e.dimension()
                )));
            }
            Some((m, e))
        }
        (Some(_), None) => return Err(Error::domain("a classifier needs an embedding provider")),
        _ => None,
    };
    let (candidates, mut summary) = walk_candidates(config, rules)?;
    let mut predictions: Vec<(Option<CredentialCategory>, Option<f64>)> = vec![(None, None); candidates.len()];
    if let Some((model, provider)) = model_and_embedder {
        let texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
        let (vectors, _failed_chunks) = embed_batch_lenient(&texts, provider);
        for (slot, v) in predictions.iter_mut().zip(vectors) {
            match v.map(|v| model.predict(&v)) {
                Some(Ok((cat, probs))) => *slot = (Some(cat), Some(probs[cat.id()])),
                Some(Err(e)) => {
                    log::warn!("classification failed: {e}");
                    summary.embed_errors += 1;
                }
                None => summary.embed_errors += 1,
            }
        }
    }
    let findings = candidates
        .into_iter()
        .zip(predictions)
        .map(|(c, (predicted_category, probability))| ScanFinding {
            snippet: if config.mask {
                mask_line(&c.text, rules, config)
            } else {
                c.text.clone()
            },
            source_path: c.source_path,
            line_number: c.line_number,
            matched_rule: c.matched_rule,
            entropy_bits: c.entropy_bits,
            predicted_category,
            probability,
        })
        .collect();
    Ok(ScanReport { findings, summary })
}
