use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Characters that always form their own pre-token.
pub const PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_{|}~`";

pub fn is_split_punct(c: char) -> bool {
    PUNCTUATION.contains(c)
}

/// Splits on whitespace and emits each punctuation character as its own word.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let mut words = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() || is_split_punct(c) {
            if let Some(s) = start.take() {
                words.push(&text[s..i]);
            }
            if !c.is_whitespace() {
                words.push(&text[i..i + c.len_utf8()]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        words.push(&text[s..]);
    }
    words
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordPieceVocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    pub unk_token: String,
    pub continuation_prefix: String,
    pub max_chars_per_word: usize,
}

impl WordPieceVocab {
    /// Builds a vocabulary with ids in iteration order. The unknown token is
    /// appended if absent.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_options(tokens, "[UNK]", "##", 100)
    }

    pub fn with_options<I, S>(tokens: I, unk: &str, prefix: &str, max_chars_per_word: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if max_chars_per_word == 0 {
            return Err(Error::domain("max_chars_per_word must be positive"));
        }
        let mut token_to_id = HashMap::new();
        let mut id_to_token = Vec::new();
        for t in tokens {
            let t = t.into();
            if token_to_id.contains_key(&t) {
                return Err(Error::domain(format!("duplicate vocabulary token {t:?}")));
            }
            token_to_id.insert(t.clone(), id_to_token.len());
            id_to_token.push(t);
        }
        if !token_to_id.contains_key(unk) {
            token_to_id.insert(unk.to_string(), id_to_token.len());
            id_to_token.push(unk.to_string());
        }
        Ok(WordPieceVocab {
            token_to_id,
            id_to_token,
            unk_token: unk.to_string(),
            continuation_prefix: prefix.to_string(),
            max_chars_per_word,
        })
    }

    /// Reads a vocab file: one token per line, id = zero-based line index.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()))
    }

    pub fn to_file_string(&self) -> String {
        let mut s = self.id_to_token.join("\n");
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Greedy longest-match-first decomposition of a single word.
    pub fn tokenize_word(&self, word: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.len() > self.max_chars_per_word {
            return vec![self.unk_token.clone()];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let lo = chars[start].0;
                let hi = chars.get(end).map_or(word.len(), |c| c.0);
                let piece = if start == 0 {
                    word[lo..hi].to_string()
                } else {
                    format!("{}{}", self.continuation_prefix, &word[lo..hi])
                };
                if self.token_to_id.contains_key(&piece) {
                    found = Some(piece);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(p) => {
                    pieces.push(p);
                    start = end;
                }
                None => return vec![self.unk_token.clone()],
            }
        }
        pieces
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        pre_tokenize(text)
            .into_iter()
            .flat_map(|w| self.tokenize_word(w))
            .collect()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.tokenize(text)
            .iter()
            .map(|t| self.token_to_id[t.as_str()])
            .collect()
    }

    /// Joins continuation pieces onto the previous word and separates words
    /// with single spaces.
    pub fn detokenize<S: AsRef<str>>(&self, tokens: &[S]) -> Result<String> {
        let mut out = String::new();
        for (i, t) in tokens.iter().enumerate() {
            let t = t.as_ref();
            if !self.contains(t) {
                return Err(Error::domain(format!("token {t:?} not in vocabulary")));
            }
            match t.strip_prefix(self.continuation_prefix.as_str()) {
                Some(rest) if i > 0 && !self.continuation_prefix.is_empty() => out.push_str(rest),
                _ => {
                    if i > 0 {
                        out.push(' ');
                    }
                    out.push_str(t);
                }
            }
        }
        Ok(out)
    }
}

pub fn wordpiece_tokenize(text: &str, vocab: &WordPieceVocab) -> Vec<String> {
    vocab.tokenize(text)
}
