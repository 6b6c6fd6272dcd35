use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const MERGES_HEADER: &str = "#version: 0.2";

/// Byte-to-symbol bijection used to write byte-level tokens as printable text.
///
/// Bytes in `!`..=`~`, `¡`..=`¬` and `®`..=`ÿ` map to the code point of the
/// same value. The remaining 68 bytes (controls, space, DEL, the C1 range,
/// NBSP and the soft hyphen) map, in ascending byte order, to U+0100,
/// U+0101, and so on. Space (0x20) therefore becomes `Ġ` (U+0120).
pub fn byte_symbols() -> &'static [char; 256] {
    static TABLE: OnceLock<[char; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = ['\0'; 256];
        let mut next = 256u32;
        for b in 0..=255u32 {
            let printable = (0x21..=0x7E).contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b);
            table[b as usize] = if printable {
                char::from_u32(b).unwrap()
            } else {
                let c = char::from_u32(next).unwrap();
                next += 1;
                c
            };
        }
        table
    })
}

fn symbol_bytes() -> &'static HashMap<char, u8> {
    static INV: OnceLock<HashMap<char, u8>> = OnceLock::new();
    INV.get_or_init(|| byte_symbols().iter().enumerate().map(|(b, &c)| (c, b as u8)).collect())
}

/// Chunks text at whitespace boundaries. A single whitespace character that
/// precedes a word is attached to the front of that word; longer whitespace
/// runs keep all but their last character as a separate chunk. The chunks
/// concatenate back to the input.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let pos = |i: usize| chars.get(i).map_or(text.len(), |c| c.0);
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < n {
        if chars[i].1.is_whitespace() {
            let mut j = i;
            while j < n && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j < n {
                // last whitespace char leads the following word
                if j - 1 > i {
                    chunks.push(&text[pos(i)..pos(j - 1)]);
                }
                let start = j - 1;
                let mut k = j;
                while k < n && !chars[k].1.is_whitespace() {
                    k += 1;
                }
                chunks.push(&text[pos(start)..pos(k)]);
                i = k;
            } else {
                chunks.push(&text[pos(i)..]);
                i = n;
            }
        } else {
            let mut k = i;
            while k < n && !chars[k].1.is_whitespace() {
                k += 1;
            }
            chunks.push(&text[pos(i)..pos(k)]);
            i = k;
        }
    }
    chunks
}

fn bytes_to_symbols(bytes: &[u8]) -> Vec<String> {
    let table = byte_symbols();
    bytes.iter().map(|&b| table[b as usize].to_string()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl BpeModel {
    /// Ids 0..256 are the byte symbols in byte order; merge `r` yields id
    /// `256 + r` unless its result already exists.
    pub fn new(merges: Vec<(String, String)>) -> Result<Self> {
        let mut id_to_token: Vec<String> = byte_symbols().iter().map(|c| c.to_string()).collect();
        let mut token_to_id: HashMap<String, usize> =
            id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut ranks = HashMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            if !token_to_id.contains_key(l) || !token_to_id.contains_key(r) {
                return Err(Error::domain(format!(
                    "merge {rank} ({l:?}, {r:?}) uses a symbol not derivable from earlier merges"
                )));
            }
            if ranks.insert((l.clone(), r.clone()), rank).is_some() {
                return Err(Error::domain(format!("duplicate merge ({l:?}, {r:?})")));
            }
            let merged = format!("{l}{r}");
            if !token_to_id.contains_key(&merged) {
                token_to_id.insert(merged.clone(), id_to_token.len());
                id_to_token.push(merged);
            }
        }
        Ok(BpeModel {
            merges,
            ranks,
            token_to_id,
            id_to_token,
        })
    }

    pub fn bytes_only() -> Self {
        Self::new(Vec::new()).expect("empty merge list is valid")
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    /// Parses a merges file: one header line, then one `left right` pair per
    /// line with rank equal to the pair's position.
    pub fn parse_merges(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().is_none() {
            return Err(Error::domain("merges file is missing its header line"));
        }
        let mut merges = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => {
                    return Err(Error::Parse {
                        path: "<merges>".into(),
                        line: i + 2,
                        message: format!("expected `left right`, got {line:?}"),
                    })
                }
            }
        }
        Self::new(merges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_merges(&text)
    }

    pub fn to_merges_string(&self) -> String {
        let mut s = String::from(MERGES_HEADER);
        s.push('\n');
        for (l, r) in &self.merges {
            s.push_str(l);
            s.push(' ');
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn merge_chunk(&self, mut symbols: Vec<String>) -> Vec<String> {
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).copied())
                .min();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == l && &symbols[i + 1] == r {
                    merged.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        pre_tokenize(text)
            .into_iter()
            .flat_map(|chunk| self.merge_chunk(bytes_to_symbols(chunk.as_bytes())))
            .collect()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.tokenize(text).iter().map(|t| self.token_to_id[t.as_str()]).collect()
    }

    /// Exact inverse of [`BpeModel::tokenize`].
    pub fn detokenize<S: AsRef<str>>(&self, tokens: &[S]) -> Result<String> {
        let inv = symbol_bytes();
        let mut bytes = Vec::new();
        for t in tokens {
            let t = t.as_ref();
            if !self.token_to_id.contains_key(t) {
                return Err(Error::domain(format!("token {t:?} not in vocabulary")));
            }
            for c in t.chars() {
                bytes.push(inv[&c]);
            }
        }
        String::from_utf8(bytes).map_err(|e| Error::domain(format!("tokens do not decode to UTF-8: {e}")))
    }

    /// Learns up to `num_merges` merges from a corpus by repeatedly merging
    /// the most frequent adjacent pair (ties: lexicographically smallest
    /// pair). Stops early when no pair occurs at least `min_frequency` times.
    pub fn learn<S: AsRef<str>>(corpus: &[S], num_merges: usize, min_frequency: usize) -> Self {
        let mut words: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for doc in corpus {
            for chunk in pre_tokenize(doc.as_ref()) {
                *words.entry(bytes_to_symbols(chunk.as_bytes())).or_default() += 1;
            }
        }
        let mut merges: Vec<(String, String)> = Vec::new();
        for _ in 0..num_merges {
            let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for (w, &freq) in &words {
                for p in w.windows(2) {
                    *pairs.entry((p[0].as_str(), p[1].as_str())).or_default() += freq;
                }
            }
            // BTreeMap iterates in lexicographic order, so the first max wins ties
            let mut best: Option<((&str, &str), usize)> = None;
            for (&pair, &freq) in &pairs {
                if best.is_none_or(|(_, f)| freq > f) {
                    best = Some((pair, freq));
                }
            }
            let Some(((l, r), freq)) = best else { break };
            if freq < min_frequency.max(1) {
                break;
            }
            let (l, r) = (l.to_string(), r.to_string());
            let merged = format!("{l}{r}");
            words = words
                .into_iter()
                .map(|(w, f)| {
                    let mut out = Vec::with_capacity(w.len());
                    let mut i = 0;
                    while i < w.len() {
                        if i + 1 < w.len() && w[i] == l && w[i + 1] == r {
                            out.push(merged.clone());
                            i += 2;
                        } else {
                            out.push(w[i].clone());
                            i += 1;
                        }
                    }
                    (out, f)
                })
                .fold(BTreeMap::new(), |mut acc, (w, f)| {
                    *acc.entry(w).or_default() += f;
                    acc
                });
            merges.push((l, r));
        }
        Self::new(merges).expect("learned merges are derivable by construction")
    }
}

pub fn byte_bpe_tokenize(text: &str, model: &BpeModel) -> Vec<String> {
    model.tokenize(text)
}
