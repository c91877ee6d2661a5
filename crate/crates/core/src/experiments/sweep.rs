//! Harmonic-noise-resilience θ-sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::MetricRow;
use super::{build_pools, RunConfig};
use crate::data::{filter_by_snr, subsample, Dataset};
use crate::error::Result;
use crate::nn::{evaluate, init_model, train_with_state, OptimizerState};
use crate::rng::{self, domain};
use crate::scalar::Scalar;
use crate::signal::{snr_grid, SNR_MAX_DB};

/// Every even threshold from -20 to 18 dB.
pub fn theta_candidates() -> Vec<i32> {
    snr_grid()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: i32,
    pub repeat: usize,
    pub seed: u64,
    pub train_size: usize,
    pub max_train_accuracy: f64,
    pub max_test_accuracy: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub theta: i32,
    pub mean_max_train_accuracy: f64,
    pub mean_max_test_accuracy: f64,
    /// Population standard deviation of the per-repeat maxima.
    pub std_max_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
    /// θ with the highest mean max test accuracy (lowest θ on ties).
    pub best_theta: i32,
    pub curves: Vec<MetricRow>,
}

/// Seed of one sweep repeat.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    rng::derive_seed(seed, &[domain::SWEEP, repeat as u64])
}

/// Trains one centralized model per (θ, repeat) on the pool filtered to
/// `snr >= θ` and subsampled to the size of the top-SNR subset, then tests on
/// every SNR. Repeat `k` uses the same initialization for every θ.
pub fn run_theta_sweep<T: Scalar>(cfg: &RunConfig, thetas: &[i32]) -> Result<SweepResult> {
    let (pool, test) = build_pools::<T>(cfg)?;
    run_theta_sweep_on(cfg, thetas, &pool, &test)
}

pub fn run_theta_sweep_on<T: Scalar>(
    cfg: &RunConfig,
    thetas: &[i32],
    pool: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<SweepResult> {
    let arch = cfg.architecture();
    let top = cfg.snr_max.min(SNR_MAX_DB);
    let size = filter_by_snr(pool, top).len();
    let cells: Vec<(i32, usize)> = thetas
        .iter()
        .flat_map(|&t| (0..cfg.repeats).map(move |k| (t, k)))
        .collect();
    let run_cell = |&(theta, k): &(i32, usize)| -> Result<(SweepRow, Vec<MetricRow>)> {
        let seed = repeat_seed(cfg.seed, k);
        let train = subsample(&filter_by_snr(pool, theta), size, seed, &[theta as i64 as u64]);
        let mut params = init_model::<T>(&arch, rng::derive_seed(seed, &[domain::INIT]))?;
        let tc = cfg.train_config(1);
        let mut opt = OptimizerState::new(tc.optimizer);
        let run_id = format!("{}-{seed}", cfg.hash());
        let mut row = SweepRow {
            theta,
            repeat: k,
            seed,
            train_size: train.len(),
            max_train_accuracy: 0.0,
            max_test_accuracy: 0.0,
            best_epoch: 0,
        };
        let mut curve = Vec::with_capacity(cfg.sweep_epochs);
        for e in 1..=cfg.sweep_epochs {
            let mut r = rng::stream(seed, &[domain::TRAIN, theta as i64 as u64, e as u64]);
            train_with_state(&arch, &mut params, &train.frames, &tc, &mut opt, &mut r)?;
            let tr = evaluate(&arch, &params, &train.frames)?;
            let te = evaluate(&arch, &params, &test.frames)?;
            row.max_train_accuracy = row.max_train_accuracy.max(tr.accuracy);
            if te.accuracy > row.max_test_accuracy {
                row.max_test_accuracy = te.accuracy;
                row.best_epoch = e;
            }
            curve.push(MetricRow {
                run_id: run_id.clone(),
                algorithm: "central".into(),
                scenario: "iid".into(),
                round: e,
                theta,
                clusters: "-".into(),
                queue: 0,
                accuracy: te.accuracy,
                loss: te.loss,
                per_snr: te.per_snr,
            });
        }
        Ok((row, curve))
    };
    let results: Vec<(SweepRow, Vec<MetricRow>)> = if cfg.parallel {
        cells.par_iter().map(run_cell).collect::<Result<_>>()?
    } else {
        cells.iter().map(run_cell).collect::<Result<_>>()?
    };
    let mut rows = Vec::with_capacity(results.len());
    let mut curves = Vec::new();
    for (r, c) in results {
        rows.push(r);
        curves.extend(c);
    }
    let summary: Vec<SweepSummary> = thetas
        .iter()
        .map(|&t| {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.theta == t).collect();
            let n = sel.len() as f64;
            let mean = sel.iter().map(|r| r.max_test_accuracy).sum::<f64>() / n;
            let var = sel.iter().map(|r| (r.max_test_accuracy - mean).powi(2)).sum::<f64>() / n;
            SweepSummary {
                theta: t,
                mean_max_train_accuracy: sel.iter().map(|r| r.max_train_accuracy).sum::<f64>() / n,
                mean_max_test_accuracy: mean,
                std_max_test_accuracy: var.sqrt(),
            }
        })
        .collect();
    let best_theta = summary
        .iter()
        .fold(None::<&SweepSummary>, |best, s| match best {
            Some(b) if b.mean_max_test_accuracy >= s.mean_max_test_accuracy => Some(b),
            _ => Some(s),
        })
        .map_or(cfg.theta, |s| s.theta);
    Ok(SweepResult {
        rows,
        summary,
        best_theta,
        curves,
    })
}
