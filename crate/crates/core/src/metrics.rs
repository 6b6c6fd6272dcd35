//! Confusion matrices and classification metrics.
//!
//! Per-class values come from one-vs-rest binarization of the matrix.
//! A 0/0 ratio is reported as `None` rather than NaN or zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::CredentialCategory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[actual][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn zeros(class_count: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; class_count]; class_count],
        }
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count()).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    pub fn binarize(&self, c: usize) -> BinaryCounts {
        let tp = self.counts[c][c];
        let fp = self.col_sum(c) - tp;
        let fn_ = self.row_sum(c) - tp;
        BinaryCounts {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    /// Element-wise sum, for merging shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.class_count() != self.class_count() {
            return Err(Error::domain("cannot merge confusion matrices of different sizes"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }
}

pub fn confusion(labels: &[usize], predictions: &[usize], class_count: usize) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::domain(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(class_count);
    for (&a, &p) in labels.iter().zip(predictions) {
        if a >= class_count || p >= class_count {
            return Err(Error::domain(format!("class id out of range 0..{class_count}: ({a}, {p})")));
        }
        cm.counts[a][p] += 1;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("accuracy of an empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// F1 from precision and recall; undefined when either is undefined or both are zero.
pub fn f1_score(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

pub fn precision_recall_f1(cm: &ConfusionMatrix, class: usize) -> (Option<f64>, Option<f64>, Option<f64>) {
    let b = cm.binarize(class);
    let precision = ratio(b.tp, b.tp + b.fp);
    let recall = ratio(b.tp, b.tp + b.fn_);
    (precision, recall, f1_score(precision, recall))
}

/// Mean over defined values, with the number of skipped (undefined) entries.
pub fn macro_average(values: &[Option<f64>]) -> Result<(f64, usize)> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric("every per-class value is undefined".into()));
    }
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok((mean, values.len() - defined.len()))
}

fn sqrt_product(a: u128, b: u128) -> f64 {
    match a.checked_mul(b) {
        Some(p) => (p as f64).sqrt(),
        None => (a as f64).sqrt() * (b as f64).sqrt(),
    }
}

/// Binary MCC, `(TP·TN − FP·FN) / √((TP+FP)(TP+FN)(TN+FP)(TN+FN))`.
pub fn mcc_binary(tp: u64, tn: u64, fp: u64, fn_: u64) -> Option<f64> {
    let (tp, tn, fp, fn_) = (tp as u128, tn as u128, fp as u128, fn_ as u128);
    let num = (tp * tn) as i128 - (fp * fn_) as i128;
    let den = sqrt_product((tp + fp) * (tp + fn_), (tn + fp) * (tn + fn_));
    (den > 0.0).then(|| num as f64 / den)
}

/// Multiclass correlation from marginals; agrees with [`mcc_binary`] for two classes.
pub fn mcc_multiclass(cm: &ConfusionMatrix) -> Option<f64> {
    let k = cm.class_count();
    let n = cm.total() as u128;
    let trace = cm.trace() as u128;
    let rows: Vec<u128> = (0..k).map(|c| cm.row_sum(c) as u128).collect();
    let cols: Vec<u128> = (0..k).map(|c| cm.col_sum(c) as u128).collect();
    let cross: u128 = rows.iter().zip(&cols).map(|(r, c)| r * c).sum();
    let num = (n * trace) as i128 - cross as i128;
    let var_true = n * n - rows.iter().map(|r| r * r).sum::<u128>();
    let var_pred = n * n - cols.iter().map(|c| c * c).sum::<u128>();
    let den = sqrt_product(var_true, var_pred);
    (den > 0.0).then(|| num as f64 / den)
}

/// MCC: the binary formula for two classes (class 1 positive), the marginal
/// form otherwise. `Ok(None)` means a zero denominator.
pub fn mcc(cm: &ConfusionMatrix) -> Result<Option<f64>> {
    if cm.total() == 0 {
        return Err(Error::UndefinedMetric("MCC of an empty confusion matrix".into()));
    }
    if cm.class_count() == 2 {
        let b = cm.binarize(1);
        Ok(mcc_binary(b.tp, b.tn, b.fp, b.fn_))
    } else {
        Ok(mcc_multiclass(cm))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub name: String,
    pub support: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub total: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
    /// Classes skipped by each macro average, as (precision, recall, f1).
    pub skipped: (usize, usize, usize),
    pub mcc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

fn class_name(c: usize, class_count: usize) -> String {
    match CredentialCategory::from_id(c) {
        Ok(cat) if class_count == crate::taxonomy::NUM_CATEGORIES => cat.name().to_string(),
        _ => format!("class_{c}"),
    }
}

fn macro_or_none(values: &[Option<f64>]) -> (Option<f64>, usize) {
    match macro_average(values) {
        Ok((m, skipped)) => (Some(m), skipped),
        Err(_) => (None, values.len()),
    }
}

impl MetricReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let accuracy = accuracy(&cm)?;
        let k = cm.class_count();
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|c| {
                let (precision, recall, f1) = precision_recall_f1(&cm, c);
                ClassMetrics {
                    class_id: c,
                    name: class_name(c, k),
                    support: cm.row_sum(c),
                    precision,
                    recall,
                    f1,
                }
            })
            .collect();
        let column = |f: fn(&ClassMetrics) -> Option<f64>| per_class.iter().map(f).collect::<Vec<_>>();
        let (macro_precision, sp) = macro_or_none(&column(|m| m.precision));
        let (macro_recall, sr) = macro_or_none(&column(|m| m.recall));
        let (macro_f1, sf) = macro_or_none(&column(|m| m.f1));
        Ok(MetricReport {
            total: cm.total(),
            accuracy,
            macro_precision,
            macro_recall,
            macro_f1,
            skipped: (sp, sr, sf),
            mcc: mcc(&cm)?,
            per_class,
            confusion: cm,
        })
    }

    pub fn from_predictions(labels: &[usize], predictions: &[usize], class_count: usize) -> Result<Self> {
        Self::from_confusion(confusion(labels, predictions, class_count)?)
    }

    /// Headline metrics keyed by name (defined values only), for aggregation.
    pub fn summary(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("accuracy".to_string(), self.accuracy);
        for (name, v) in [
            ("f1", self.macro_f1),
            ("precision", self.macro_precision),
            ("recall", self.macro_recall),
            ("mcc", self.mcc),
        ] {
            if let Some(v) = v {
                m.insert(name.to_string(), v);
            }
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Metric rows (Accuracy, F1, Precision, Recall, MCC) followed by the
    /// per-class breakdown.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>10}", "Metric", "Value");
        for (name, v) in [
            ("Accuracy", Some(self.accuracy)),
            ("F1", self.macro_f1),
            ("Precision", self.macro_precision),
            ("Recall", self.macro_recall),
            ("MCC", self.mcc),
        ] {
            let _ = writeln!(out, "{name:<10} {:>10}", fmt(v));
        }
        let _ = writeln!(out, "(P/R/F1 are macro averages over {} samples)", self.total);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<20} {:>8} {:>10} {:>10} {:>10}",
            "Class", "Support", "Precision", "Recall", "F1"
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:<20} {:>8} {:>10} {:>10} {:>10}",
                c.name,
                c.support,
                fmt(c.precision),
                fmt(c.recall),
                fmt(c.f1)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m.trace(), 3);
        assert_eq!(confusion(&[], &[], 2).unwrap(), ConfusionMatrix::zeros(2));
        let m = confusion(&[0, 1], &[1, 0], 2).unwrap();
        assert_eq!(m.counts, vec![vec![0, 1], vec![1, 0]]);
        assert!(confusion(&[0], &[], 2).is_err());
        assert!(confusion(&[2], &[0], 2).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&cm(&[&[2, 0], &[0, 3]])).unwrap(), 1.0);
        assert_eq!(accuracy(&cm(&[&[0, 2], &[3, 0]])).unwrap(), 0.0);
        assert_eq!(accuracy(&cm(&[&[1, 1], &[1, 1]])).unwrap(), 0.5);
        assert!(matches!(accuracy(&ConfusionMatrix::zeros(2)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn per_class_examples() {
        let f1 = f1_score(Some(0.5), Some(1.0)).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        let (p, _, f) = precision_recall_f1(&cm(&[&[0, 1], &[0, 1]]), 0);
        assert_eq!((p, f), (None, None));
        let (p, r, f) = precision_recall_f1(&cm(&[&[2, 0, 0], &[1, 1, 0], &[0, 0, 1]]), 0);
        assert!((p.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r, Some(1.0));
        assert!((f.unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn macro_examples() {
        assert_eq!(macro_average(&[Some(1.0), Some(0.5)]).unwrap(), (0.75, 0));
        assert_eq!(macro_average(&[Some(1.0), None]).unwrap(), (1.0, 1));
        assert!(macro_average(&[None, None]).is_err());
    }

    #[test]
    fn mcc_examples() {
        assert_eq!(mcc_binary(3, 3, 0, 0), Some(1.0));
        assert_eq!(mcc_binary(0, 0, 3, 3), Some(-1.0));
        let v = mcc_binary(2, 1, 1, 0).unwrap();
        assert!((v - 2.0 / 12f64.sqrt()).abs() < 1e-15);
        // [[TN, FP], [FN, TP]] with class 1 positive
        let m = cm(&[&[1, 1], &[0, 2]]);
        assert!((mcc(&m).unwrap().unwrap() - v).abs() < 1e-15);
        assert!((mcc_multiclass(&m).unwrap() - v).abs() < 1e-12);
        assert_eq!(mcc(&cm(&[&[4, 0], &[0, 0]])).unwrap(), None);
        assert!(mcc(&ConfusionMatrix::zeros(3)).is_err());
    }

    #[test]
    fn large_counts_do_not_overflow() {
        let big = 3_000_000_000u64;
        let v = mcc_binary(big, big, 0, 0).unwrap();
        assert_eq!(v, 1.0);
        let m = cm(&[&[big, 1, 0], &[0, big, 0], &[0, 0, big]]);
        assert!(mcc_multiclass(&m).unwrap() > 0.999);
    }

    #[test]
    fn report_text_and_json() {
        let r = MetricReport::from_predictions(&[0, 0, 1, 2], &[0, 1, 1, 2], 8).unwrap();
        assert_eq!(r.per_class[0].name, "Passwords");
        assert_eq!(r.skipped.0, 5);
        let text = r.to_text();
        assert!(text.contains("Accuracy") && text.contains("MCC") && text.contains("undefined"));
        let back: MetricReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.summary()["accuracy"], 0.75);
    }
}
