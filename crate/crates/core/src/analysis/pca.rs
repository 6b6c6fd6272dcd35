//! Two-component PCA by power iteration with deflation.
//!
//! The covariance is never formed: each step computes `Xᵀ(X v)` on the
//! centred data. The start vector is drawn from a fixed seed, iteration
//! stops when the direction changes by less than [`TOLERANCE`] or after
//! [`MAX_ITERATIONS`], and each component's sign is fixed so that its
//! largest-magnitude coordinate is positive.

use rand::Rng;

use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 5_000;
pub const TOLERANCE: f64 = 1e-13;
pub const START_SEED: u64 = 0x5043_4131;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<(f64, f64)>,
    pub components: [Vec<f64>; 2],
    /// Variance (eigenvalue of the covariance) along each component.
    pub explained_variance: [f64; 2],
    pub total_variance: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for u in against {
        let p = dot(v, u);
        v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
    }
}

/// `Xᵀ(X v)` for centred rows X.
fn gram_apply(rows: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for r in rows {
        let s = dot(r, v);
        out.iter_mut().zip(r).for_each(|(o, x)| *o += s * x);
    }
    out
}

fn fix_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn leading_direction(rows: &[Vec<f64>], found: &[Vec<f64>], rng: &mut impl Rng) -> Vec<f64> {
    let dim = rows[0].len();
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    orthogonalize(&mut v, found);
    normalize(&mut v);
    for _ in 0..MAX_ITERATIONS {
        let mut w = gram_apply(rows, &v);
        orthogonalize(&mut w, found);
        if normalize(&mut w) <= f64::EPSILON * 1e-3 {
            // no variance left outside `found`; any orthogonal direction will do
            break;
        }
        // undo a sign flip before measuring the change
        if dot(&w, &v) < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        let change = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if change < TOLERANCE {
            break;
        }
    }
    fix_sign(&mut v);
    v
}

pub fn project_2d(embeddings: &[EmbeddingVector]) -> Result<Projection> {
    if embeddings.len() < 2 {
        return Err(Error::domain("projection needs at least 2 vectors"));
    }
    let dim = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != dim) {
        return Err(Error::domain("projection needs vectors of equal dimension"));
    }
    let n = embeddings.len() as f64;
    let mut centre = vec![0.0; dim];
    for e in embeddings {
        centre.iter_mut().zip(e.as_slice()).for_each(|(c, x)| *c += x / n);
    }
    let rows: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.as_slice().iter().zip(&centre).map(|(x, c)| x - c).collect())
        .collect();
    let total_variance = rows.iter().map(|r| dot(r, r)).sum::<f64>() / (n - 1.0);
    if total_variance.is_nan() || total_variance <= 0.0 {
        return Err(Error::domain("projection of zero-variance data"));
    }
    let mut rng = crate::seeded_rng(START_SEED);
    let first = leading_direction(&rows, &[], &mut rng);
    let second = leading_direction(&rows, std::slice::from_ref(&first), &mut rng);
    let variance = |v: &[f64]| dot(v, &gram_apply(&rows, v)) / (n - 1.0);
    let explained_variance = [variance(&first), variance(&second)];
    let points = rows.iter().map(|r| (dot(r, &first), dot(r, &second))).collect();
    Ok(Projection {
        points,
        explained_variance,
        total_variance,
        components: [first, second],
    })
}
