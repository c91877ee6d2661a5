//! Desk-scale reproductions of the experimental protocols.

mod config;
mod federated;
mod output;
mod pca;
mod sweep;

pub use config::{parse_config, RunConfig, CONFIG_KEYS};
pub use federated::{
    band_pool, rounds_to_reach, run_ablation, run_iid_comparison, run_noniid_benchmark, run_single,
    AblationKind, AblationRow, Curve, RunSummary, CLUSTER_SETTINGS, QUEUE_SETTINGS, SNR_BANDS,
};
pub use output::{
    csv_header, output_dir, render_csv, resolved_config, write_outputs, ExperimentOutput, MetricRow,
};
pub use pca::{covariance, pca_project, pca_rows, top_eigenpairs, PcaResult, PCA_MAX_ITERATIONS, PCA_TOLERANCE};
pub use sweep::{
    repeat_seed, run_theta_sweep, run_theta_sweep_on, theta_candidates, SweepResult, SweepRow,
    SweepSummary,
};

use crate::data::{generate_dataset, Dataset, GenerateSpec};
use crate::error::Result;
use crate::scalar::Scalar;

/// Training pool and disjoint test set for `cfg`. Test frames use per-cell
/// indices after the training ones, so the two never share a frame.
pub fn build_pools<T: Scalar>(cfg: &RunConfig) -> Result<(Dataset<T>, Dataset<T>)> {
    let mut spec = GenerateSpec::new(cfg.schemes.clone(), cfg.snr_list(), cfg.train_per_cell);
    spec.frame = cfg.frame_config();
    spec.impairments = cfg.impairment_spec();
    let train = generate_dataset(cfg.seed, &spec)?;
    spec.first_index = cfg.train_per_cell as u64;
    spec.frames_per_cell = cfg.test_per_cell;
    let test = generate_dataset(cfg.seed, &spec)?;
    Ok((train, test))
}
