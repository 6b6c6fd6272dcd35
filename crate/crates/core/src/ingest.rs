//! Dataset loading (JSONL, CSV) and deterministic train/valid/test splits.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{CredentialCategory, CredentialRecord, NUM_CATEGORIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    pub records: Vec<CredentialRecord>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, records: Vec<CredentialRecord>) -> Self {
        LabeledDataset {
            name: name.into(),
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record count per category id.
    pub fn category_counts(&self) -> [usize; NUM_CATEGORIES] {
        let mut counts = [0; NUM_CATEGORIES];
        for r in &self.records {
            counts[r.category.id()] += 1;
        }
        counts
    }

    /// Keeps only ground-truth credentials.
    pub fn only_true(&self) -> LabeledDataset {
        LabeledDataset {
            name: self.name.clone(),
            records: self.records.iter().filter(|r| r.is_true).cloned().collect(),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CategoryField {
    Id(usize),
    Name(String),
}

#[derive(Deserialize)]
struct JsonlRow {
    text: String,
    category: CategoryField,
    is_true: bool,
    source_path: Option<String>,
    line_number: Option<usize>,
    language_tag: Option<String>,
}

/// Loads one record per non-blank line. Missing `source_path` defaults to the
/// dataset path, missing `line_number` to the 1-based line in the file.
pub fn load_jsonl(path: &Path) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let display = path.display().to_string();
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: display.clone(),
            line: line_no,
            message,
        };
        let row: JsonlRow = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let category = match row.category {
            CategoryField::Id(id) => CredentialCategory::from_id(id)?,
            CategoryField::Name(name) => name.parse()?,
        };
        let record = CredentialRecord::new(
            &row.text,
            category,
            row.is_true,
            row.source_path.unwrap_or_else(|| display.clone()),
            row.line_number.unwrap_or(line_no),
            row.language_tag.unwrap_or_else(|| "unknown".to_string()),
        )
        .map_err(|e| parse_err(e.to_string()))?;
        records.push(record);
    }
    Ok(LabeledDataset::new(dataset_name(path), records))
}

/// Maps record fields to CSV header names. Only `text`, `category` and
/// `is_true` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub text: String,
    pub category: String,
    pub is_true: String,
    pub source_path: Option<String>,
    pub line_number: Option<String>,
    pub language_tag: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            text: "text".into(),
            category: "category".into(),
            is_true: "is_true".into(),
            source_path: Some("source_path".into()),
            line_number: Some("line_number".into()),
            language_tag: Some("language_tag".into()),
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "t" | "yes" | "y" | "1" => Some(true),
        "false" | "f" | "no" | "n" | "0" => Some(false),
        _ => None,
    }
}

pub fn load_csv(path: &Path, mapping: &ColumnMapping) -> Result<LabeledDataset> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{display}: {other:?}")),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{display}: {e}")))?
        .clone();
    let required = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{display}: missing column {name:?}")))
    };
    // Optional columns that are absent from the header are simply skipped,
    // but an explicitly mapped name must exist.
    let optional = |name: &Option<String>, default: &str| -> Result<Option<usize>> {
        match name {
            Some(n) => match headers.iter().position(|h| h == n) {
                Some(i) => Ok(Some(i)),
                None if n == default => Ok(None),
                None => Err(Error::Schema(format!("{display}: missing column {n:?}"))),
            },
            None => Ok(None),
        }
    };
    let text_col = required(&mapping.text)?;
    let cat_col = required(&mapping.category)?;
    let true_col = required(&mapping.is_true)?;
    let path_col = optional(&mapping.source_path, "source_path")?;
    let line_col = optional(&mapping.line_number, "line_number")?;
    let lang_col = optional(&mapping.language_tag, "language_tag")?;

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        // header is line 1
        let line_no = idx + 2;
        let parse_err = |message: String| Error::Parse {
            path: display.clone(),
            line: line_no,
            message,
        };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let category: CredentialCategory = field(cat_col).parse()?;
        let is_true = parse_bool(field(true_col))
            .ok_or_else(|| parse_err(format!("invalid boolean {:?}", field(true_col))))?;
        let line_number = match line_col.map(field) {
            Some(s) if !s.trim().is_empty() => s
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(format!("invalid line_number: {e}")))?,
            _ => line_no,
        };
        let record = CredentialRecord::new(
            field(text_col),
            category,
            is_true,
            path_col.map(field).unwrap_or(&display),
            line_number,
            lang_col.map(field).unwrap_or("unknown"),
        )
        .map_err(|e| parse_err(e.to_string()))?;
        records.push(record);
    }
    Ok(LabeledDataset::new(dataset_name(path), records))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 42,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.valid_fraction, self.test_fraction];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::domain("split fractions must lie in [0, 1]"));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::domain("split fractions must sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    pub test: LabeledDataset,
}

/// Index-level split: which record positions land in each partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Allocates `floor(total * fraction)` across groups so that each group gets
/// the floor or ceiling of its proportional share, without exceeding the
/// group's remaining capacity.
fn allocate(group_sizes: &[usize], capacity: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let target = (total as f64 * fraction + 1e-9).floor() as usize;
    let quotas: Vec<f64> = group_sizes.iter().map(|&n| n as f64 * fraction).collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(capacity)
        .map(|(q, &cap)| ((q + 1e-9).floor() as usize).min(cap))
        .collect();
    let mut assigned: usize = alloc.iter().sum();
    // largest remainder first, ties to the lower group index
    let mut order: Vec<usize> = (0..group_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for pass in 0..2 {
        for &g in &order {
            if assigned >= target {
                return alloc;
            }
            let has_remainder = quotas[g] - quotas[g].floor() > 1e-9;
            // first pass: only groups below their ceiling; second pass: anyone with room
            if alloc[g] < capacity[g] && (pass == 1 || (has_remainder && alloc[g] < quotas[g].ceil() as usize)) {
                alloc[g] += 1;
                assigned += 1;
            }
        }
    }
    alloc
}

/// Computes split membership. Partition sizes are `floor(n * fraction)` for
/// valid and test, with the remainder in train. With `stratified`, each
/// category contributes the floor or ceiling of its proportional share.
///
/// The shuffle is a Fisher–Yates pass driven by ChaCha8 seeded from
/// `spec.seed`, so results reproduce across platforms.
pub fn split_indices(categories: &[CredentialCategory], spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n = categories.len();
    if n == 0 {
        return Err(Error::domain("cannot split an empty dataset"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = crate::seeded_rng(spec.seed);
    order.shuffle(&mut rng);

    let groups: Vec<usize> = if spec.stratified {
        let mut sizes = vec![0usize; NUM_CATEGORIES];
        for c in categories {
            sizes[c.id()] += 1;
        }
        sizes
    } else {
        vec![n]
    };
    let group_of = |i: usize| if spec.stratified { categories[i].id() } else { 0 };

    let valid_alloc = allocate(&groups, &groups, spec.valid_fraction, n);
    let remaining: Vec<usize> = groups.iter().zip(&valid_alloc).map(|(g, v)| g - v).collect();
    let test_alloc = allocate(&groups, &remaining, spec.test_fraction, n);

    let mut seen = vec![0usize; groups.len()];
    let mut out = SplitIndices {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for i in order {
        let g = group_of(i);
        let k = seen[g];
        seen[g] += 1;
        if k < valid_alloc[g] {
            out.valid.push(i);
        } else if k < valid_alloc[g] + test_alloc[g] {
            out.test.push(i);
        } else {
            out.train.push(i);
        }
    }
    Ok(out)
}

pub fn split_dataset(dataset: &LabeledDataset, spec: &SplitSpec) -> Result<Split> {
    let categories: Vec<CredentialCategory> = dataset.records.iter().map(|r| r.category).collect();
    let idx = split_indices(&categories, spec)?;
    let pick = |ids: &[usize], suffix: &str| {
        LabeledDataset::new(
            format!("{}-{suffix}", dataset.name),
            ids.iter().map(|&i| dataset.records[i].clone()).collect(),
        )
    };
    Ok(Split {
        train: pick(&idx.train, "train"),
        valid: pick(&idx.valid, "valid"),
        test: pick(&idx.test, "test"),
    })
}

/// Per-category counts keyed by category name, for reports.
pub fn distribution(dataset: &LabeledDataset) -> BTreeMap<String, usize> {
    dataset
        .category_counts()
        .iter()
        .enumerate()
        .map(|(id, &n)| (CredentialCategory::ALL[id].name().to_string(), n))
        .collect()
}
