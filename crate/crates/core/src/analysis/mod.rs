//! Embedding-space statistics: pairwise distances, intra/inter-class
//! separation with Welch's t-test, and a 2-D projection for plotting.

pub mod pca;
pub mod stats;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};
use crate::taxonomy::CredentialCategory;

pub use pca::{project_2d, Projection};
pub use stats::{ln_gamma, regularized_incomplete_beta, student_t_sf, welch_t_test, WelchResult, P_UNDERFLOW};

pub const DEFAULT_PAIR_BUDGET: usize = 2_000_000;

pub fn euclidean(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationOptions {
    /// Above this many pairs, a seeded uniform sample of this size is used.
    pub pair_budget: usize,
    pub seed: u64,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions {
            pair_budget: DEFAULT_PAIR_BUDGET,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub mean_intra: f64,
    pub mean_inter: f64,
    /// `None` when the test is undefined (zero variance or fewer than 2 pairs on a side).
    pub t_statistic: Option<f64>,
    pub degrees_freedom: Option<f64>,
    pub p_value: Option<f64>,
    pub p_underflow: bool,
    pub n_intra: usize,
    pub n_inter: usize,
    pub total_pairs: u64,
    pub sampled: bool,
    pub sample_seed: Option<u64>,
}

fn all_pairs(points: &[(EmbeddingVector, CredentialCategory)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let (mut intra, mut inter) = (Vec::new(), Vec::new());
            for j in i + 1..points.len() {
                let d = euclidean(&points[i].0, &points[j].0)?;
                if points[i].1 == points[j].1 {
                    intra.push(d);
                } else {
                    inter.push(d);
                }
            }
            Ok((intra, inter))
        })
        .collect();
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for r in rows {
        let (a, b) = r?;
        intra.extend(a);
        inter.extend(b);
    }
    Ok((intra, inter))
}

/// Uniform unordered pairs drawn with replacement.
fn sampled_pairs(
    points: &[(EmbeddingVector, CredentialCategory)],
    budget: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = crate::seeded_rng(seed);
    let n = points.len();
    let pairs: Vec<(usize, usize)> = (0..budget)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect();
    let dists: Vec<Result<(bool, f64)>> = pairs
        .par_iter()
        .map(|&(i, j)| Ok((points[i].1 == points[j].1, euclidean(&points[i].0, &points[j].0)?)))
        .collect();
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for d in dists {
        let (same, d) = d?;
        if same {
            intra.push(d);
        } else {
            inter.push(d);
        }
    }
    Ok((intra, inter))
}

pub fn separation(points: &[(EmbeddingVector, CredentialCategory)]) -> Result<SeparationReport> {
    separation_with(points, &SeparationOptions::default())
}

pub fn separation_with(
    points: &[(EmbeddingVector, CredentialCategory)],
    options: &SeparationOptions,
) -> Result<SeparationReport> {
    if points.len() < 2 {
        return Err(Error::domain("separation needs at least 2 samples"));
    }
    let n = points.len() as u64;
    let total_pairs = n * (n - 1) / 2;
    let sampled = total_pairs > options.pair_budget as u64;
    let (intra, inter) = if sampled {
        sampled_pairs(points, options.pair_budget, options.seed)?
    } else {
        all_pairs(points)?
    };
    if intra.is_empty() {
        return Err(Error::domain("no same-category pairs"));
    }
    if inter.is_empty() {
        return Err(Error::domain("no cross-category pairs"));
    }
    let test = welch_t_test(&intra, &inter).ok();
    Ok(SeparationReport {
        mean_intra: stats::mean(&intra),
        mean_inter: stats::mean(&inter),
        t_statistic: test.map(|w| w.t),
        degrees_freedom: test.map(|w| w.df),
        p_value: test.map(|w| w.p),
        p_underflow: test.is_some_and(|w| w.p < P_UNDERFLOW),
        n_intra: intra.len(),
        n_inter: inter.len(),
        total_pairs,
        sampled,
        sample_seed: sampled.then_some(options.seed),
    })
}

/// Writes `x,y,category_id` rows, one per point, in input order.
pub fn write_projection_csv<W: Write>(
    out: W,
    points: &[(f64, f64)],
    categories: &[CredentialCategory],
) -> Result<()> {
    if points.len() != categories.len() {
        return Err(Error::domain("one category per projected point is required"));
    }
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::domain(format!("csv write failed: {e}"));
    w.write_record(["x", "y", "category_id"]).map_err(wrap)?;
    for ((x, y), c) in points.iter().zip(categories) {
        w.write_record([x.to_string(), y.to_string(), c.id().to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::domain(format!("csv write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use CredentialCategory::{Passwords as A, PrivateKeys as B};

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(&ev(&[0.0, 0.0]), &ev(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(euclidean(&ev(&[1.5, 2.0]), &ev(&[1.5, 2.0])).unwrap(), 0.0);
        assert!(euclidean(&ev(&[1.0]), &ev(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn two_point_classes() {
        let pts = vec![
            (ev(&[0.0, 0.0]), A),
            (ev(&[0.0, 0.0]), A),
            (ev(&[3.0, 4.0]), B),
            (ev(&[3.0, 4.0]), B),
        ];
        let r = separation(&pts).unwrap();
        assert_eq!((r.mean_intra, r.mean_inter), (0.0, 5.0));
        assert_eq!((r.n_intra, r.n_inter), (2, 4));
        // both samples are constant: the test is undefined
        assert_eq!(r.t_statistic, None);
    }

    #[test]
    fn hand_enumerated_pairs() {
        // intra: |a1-a2| = 1, |b1-b2| = 2; inter: 10, 11, 9, 12 (on a line)
        let pts = vec![(ev(&[0.0]), A), (ev(&[1.0]), A), (ev(&[10.0]), B), (ev(&[12.0]), B)];
        let r = separation(&pts).unwrap();
        assert_eq!(r.mean_intra, 1.5);
        assert_eq!(r.mean_inter, (10.0 + 12.0 + 9.0 + 11.0) / 4.0);
        let w = welch_t_test(&[1.0, 2.0], &[10.0, 12.0, 9.0, 11.0]).unwrap();
        assert!((r.t_statistic.unwrap() - w.t).abs() < 1e-12);
        assert!(r.t_statistic.unwrap() < 0.0);
    }

    #[test]
    fn errors_without_both_pair_kinds() {
        assert!(separation(&[(ev(&[0.0]), A), (ev(&[1.0]), B)]).is_err());
        assert!(separation(&[(ev(&[0.0]), A), (ev(&[1.0]), A)]).is_err());
        assert!(separation(&[(ev(&[0.0]), A)]).is_err());
    }

    #[test]
    fn identical_points_have_undefined_test() {
        let pts: Vec<_> = (0..6).map(|i| (ev(&[1.0, 1.0]), if i % 2 == 0 { A } else { B })).collect();
        let r = separation(&pts).unwrap();
        assert_eq!((r.mean_intra, r.mean_inter), (0.0, 0.0));
        assert!(r.t_statistic.is_none() && r.p_value.is_none());
    }

    #[test]
    fn budget_triggers_seeded_sampling() {
        let pts: Vec<_> = (0..60)
            .map(|i| (ev(&[(i % 2) as f64 * 10.0 + (i as f64) * 0.01]), if i % 2 == 0 { A } else { B }))
            .collect();
        let opts = SeparationOptions {
            pair_budget: 500,
            seed: 7,
        };
        let r = separation_with(&pts, &opts).unwrap();
        assert!(r.sampled);
        assert_eq!(r.n_intra + r.n_inter, 500);
        assert_eq!(r.total_pairs, 60 * 59 / 2);
        assert_eq!(r, separation_with(&pts, &opts).unwrap());
        assert!(!separation(&pts).unwrap().sampled);
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_projection_csv(&mut buf, &[(1.0, -2.5), (0.0, 0.0)], &[A, B]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y,category_id\n1,-2.5,0\n0,0,2\n");
    }
}
