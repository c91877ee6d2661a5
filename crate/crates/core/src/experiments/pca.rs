//! Principal components by power iteration with deflation.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use rand::Rng;

pub const PCA_TOLERANCE: f64 = 1e-10;
pub const PCA_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// `N x k'` projections of the centred data, `k' <= k`.
    pub projections: Vec<Vec<f64>>,
    /// Unit-norm components, one per row.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Share of the total variance per component.
    pub explained_ratio: Vec<f64>,
    /// Set when fewer than `k` components carry variance.
    pub rank_warning: Option<String>,
}

/// Sample covariance `X^T X / (N - 1)` of mean-centred rows, plus the mean.
pub fn covariance(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    let denom = (n.max(2) - 1) as f64;
    let mut c = vec![0.0; d];
    for r in rows {
        for (ci, (v, m)) in c.iter_mut().zip(r.iter().zip(&mean)) {
            *ci = v - m;
        }
        for i in 0..d {
            let ci = c[i] / denom;
            if ci == 0.0 {
                continue;
            }
            for (j, cj) in c.iter().enumerate().skip(i) {
                cov[i][j] += ci * cj;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i][j] = cov[j][i];
        }
    }
    (cov, mean)
}

fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
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

/// Top-`k` eigenpairs of a symmetric matrix. Stops early, with a warning, when
/// the remaining spectrum is numerically zero.
pub fn top_eigenpairs(cov: &[Vec<f64>], k: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>, Option<String>) {
    let d = cov.len();
    let mut a: Vec<Vec<f64>> = cov.to_vec();
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    let floor = trace.abs().max(f64::MIN_POSITIVE) * 1e-12;
    let mut r = rng::stream(seed, &[]);
    let mut values = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let mut warning = None;
    for j in 0..k.min(d) {
        let mut v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        for u in &vectors {
            let p = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITERATIONS {
            let mut w = matvec(&a, &v);
            // Re-orthogonalize against accepted components to stop round-off
            // from reintroducing them.
            for u in &vectors {
                let p = dot(&w, u);
                w.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
            }
            let norm = normalize(&mut w);
            if norm <= floor {
                lambda = 0.0;
                break;
            }
            if dot(&w, &v) < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            let change = w.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            v = w;
            lambda = dot(&v, &matvec(&a, &v));
            if change < PCA_TOLERANCE {
                break;
            }
        }
        if lambda <= floor {
            warning = Some(format!("covariance rank {j} is below the requested {k} components"));
            break;
        }
        for (x, row) in a.iter_mut().enumerate() {
            for (y, e) in row.iter_mut().enumerate() {
                *e -= lambda * v[x] * v[y];
            }
        }
        values.push(lambda);
        vectors.push(v);
    }
    (values, vectors, warning)
}

/// Projects frames, flattened to `2L` vectors and mean-centred, onto their
/// top `k` principal components.
pub fn pca_project<T: Scalar>(ds: &Dataset<T>, k: usize) -> Result<PcaResult> {
    let rows: Vec<Vec<f64>> = ds
        .frames
        .iter()
        .map(|f| f.iq.iter().map(|v| v.as_f64()).collect())
        .collect();
    pca_rows(&rows, k)
}

pub fn pca_rows(rows: &[Vec<f64>], k: usize) -> Result<PcaResult> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if rows.len() <= k {
        return Err(Error::Config(format!(
            "PCA needs more samples ({}) than components ({k})",
            rows.len()
        )));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Length("PCA rows differ in length".into()));
    }
    let (cov, mean) = covariance(rows);
    let total: f64 = (0..d).map(|i| cov[i][i]).sum();
    let (values, components, rank_warning) = top_eigenpairs(&cov, k, 0x0050_4341);
    let projections = rows
        .iter()
        .map(|r| {
            let c: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
            components.iter().map(|u| dot(&c, u)).collect()
        })
        .collect();
    Ok(PcaResult {
        projections,
        explained_ratio: values.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect(),
        explained_variance: values,
        components,
        rank_warning,
    })
}
