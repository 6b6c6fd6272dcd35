//! Timing with uncertainty, multi-run aggregation and the tool comparison table.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;

pub const DEFAULT_WARMUP: usize = 1;
pub const DEFAULT_REPEATS: usize = 10;
/// Normal-approximation critical value for a 95% interval.
pub const Z_95: f64 = 1.96;

/// Source of timestamps in seconds.
pub trait Clock {
    fn now(&mut self) -> f64;
}

pub struct MonotonicClock {
    origin: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Replays a fixed list of timestamps. Panics when exhausted.
#[derive(Debug, Clone, Default)]
pub struct FakeClock {
    ticks: VecDeque<f64>,
}

impl FakeClock {
    pub fn new(ticks: impl IntoIterator<Item = f64>) -> Self {
        FakeClock {
            ticks: ticks.into_iter().collect(),
        }
    }

    /// A clock whose consecutive measured iterations last `durations` seconds.
    pub fn from_durations(durations: &[f64]) -> Self {
        let mut t = 0.0;
        let mut ticks = Vec::with_capacity(2 * durations.len());
        for d in durations {
            ticks.push(t);
            t += d;
            ticks.push(t);
        }
        FakeClock::new(ticks)
    }
}

impl Clock for FakeClock {
    fn now(&mut self) -> f64 {
        self.ticks.pop_front().expect("fake clock ran out of ticks")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub ci95_seconds: f64,
    pub repeats: usize,
    /// Set when `repeats == 1`, in which case std and ci95 are reported as 0.
    pub single_sample: bool,
    pub samples: Vec<f64>,
}

impl TimingStats {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("timing needs at least one sample"));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = if samples.len() > 1 {
            (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(TimingStats {
            mean_seconds: mean,
            std_seconds: std,
            ci95_seconds: Z_95 * std / n.sqrt(),
            repeats: samples.len(),
            single_sample: samples.len() == 1,
            samples,
        })
    }
}

/// Runs `warmup` unmeasured iterations then `repeats` timed ones. The
/// operation receives the iteration index (warmup iterations included).
pub fn time_op<F, C>(mut op: F, repeats: usize, warmup: usize, clock: &mut C) -> Result<TimingStats>
where
    F: FnMut(usize) -> Result<()>,
    C: Clock + ?Sized,
{
    if repeats == 0 {
        return Err(Error::domain("repeats must be at least 1"));
    }
    let fail = |iteration, e: Error| Error::Timing {
        iteration,
        message: e.to_string(),
    };
    for i in 0..warmup {
        op(i).map_err(|e| fail(i, e))?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for i in warmup..warmup + repeats {
        let start = clock.now();
        op(i).map_err(|e| fail(i, e))?;
        samples.push(clock.now() - start);
    }
    TimingStats::from_samples(samples)
}

/// Batch timing for one category with the per-item reading alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTiming {
    pub category: String,
    pub items: usize,
    pub batch: TimingStats,
    pub per_item_mean_seconds: f64,
}

impl CategoryTiming {
    pub fn new(category: &str, items: usize, batch: TimingStats) -> Self {
        CategoryTiming {
            category: category.to_string(),
            items,
            per_item_mean_seconds: batch.mean_seconds / items.max(1) as f64,
            batch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub mean: f64,
    /// Unbiased std; undefined for a single run.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub k: usize,
    pub metrics: BTreeMap<String, MetricAggregate>,
}

impl AggregateStats {
    /// `name  mean ± std` lines, three decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "aggregated over {} runs", self.k);
        for (name, a) in &self.metrics {
            match a.std {
                Some(s) => writeln!(out, "{name:<10} {:.3} ± {:.3}", a.mean, s),
                None => writeln!(out, "{name:<10} {:.3}", a.mean),
            }
            .ok();
        }
        out
    }
}

pub fn aggregate_runs(runs: &[BTreeMap<String, f64>]) -> Result<AggregateStats> {
    let first = runs.first().ok_or_else(|| Error::domain("no runs to aggregate"))?;
    if runs.iter().any(|r| !r.keys().eq(first.keys())) {
        return Err(Error::domain("runs report different metric sets"));
    }
    let k = runs.len() as f64;
    let metrics = first
        .keys()
        .map(|name| {
            let values: Vec<f64> = runs.iter().map(|r| r[name]).collect();
            let mean = values.iter().sum::<f64>() / k;
            let std = (runs.len() > 1)
                .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt());
            (name.clone(), MetricAggregate { mean, std })
        })
        .collect();
    Ok(AggregateStats { k: runs.len(), metrics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSource {
    Measured,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub tool_name: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub source: RowSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub citation: Option<String>,
}

impl ComparisonRow {
    /// A measured row from macro-averaged metrics; an undefined macro value ranks as 0.
    pub fn measured(tool_name: &str, report: &MetricReport) -> Self {
        ComparisonRow {
            tool_name: tool_name.to_string(),
            accuracy: report.accuracy,
            precision: report.macro_precision.unwrap_or(0.0),
            recall: report.macro_recall.unwrap_or(0.0),
            f1: report.macro_f1.unwrap_or(0.0),
            source: RowSource::Measured,
            citation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = [self.accuracy, self.precision, self.recall, self.f1]
            .iter()
            .all(|v| (0.0..=1.0).contains(v));
        if !in_range {
            return Err(Error::domain(format!("{}: metrics must lie in [0, 1]", self.tool_name)));
        }
        if self.source == RowSource::Imported && self.citation.as_deref().is_none_or(str::is_empty) {
            return Err(Error::domain(format!("{}: imported rows need a citation", self.tool_name)));
        }
        Ok(())
    }
}

const PUBLISHED_TOOLS: &str = include_str!("../data/published_tools.json");

pub fn parse_tool_rows(json: &str) -> Result<Vec<ComparisonRow>> {
    let rows: Vec<ComparisonRow> = serde_json::from_str(json)?;
    rows.iter().try_for_each(ComparisonRow::validate)?;
    Ok(rows)
}

/// Published results for third-party scanners on the CredData benchmark.
pub fn published_tool_rows() -> Vec<ComparisonRow> {
    parse_tool_rows(PUBLISHED_TOOLS).expect("bundled tool fixture is valid")
}

pub fn load_tool_rows(path: &Path) -> Result<Vec<ComparisonRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tool_rows(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Ranks the measured row (if any) among imported rows by F1, descending,
/// ties by tool name.
pub fn comparison_report(measured: Option<ComparisonRow>, imported: Vec<ComparisonRow>) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> = measured.into_iter().chain(imported).collect();
    rows.sort_by(|a, b| b.f1.total_cmp(&a.f1).then_with(|| a.tool_name.cmp(&b.tool_name)));
    ComparisonTable { rows }
}

impl ComparisonTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows)?)
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.tool_name.len()).max().unwrap_or(4).max(4) + 2;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<4} {:<width$} {:>9} {:>9} {:>9} {:>9}",
            "Rank", "Tool", "Accuracy", "Precision", "Recall", "F1"
        );
        for (i, r) in self.rows.iter().enumerate() {
            let name = match r.source {
                RowSource::Measured => format!("{} *", r.tool_name),
                RowSource::Imported => r.tool_name.clone(),
            };
            let _ = writeln!(
                out,
                "{:<4} {:<width$} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                i + 1,
                name,
                r.accuracy,
                r.precision,
                r.recall,
                r.f1
            );
        }
        if self.rows.iter().any(|r| r.source == RowSource::Measured) {
            let _ = writeln!(out, "* measured by this tool; other rows are imported");
        }
        out
    }
}
