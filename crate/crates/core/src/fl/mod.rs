//! Federated rounds: cluster planning, local training, aggregation and the
//! round drivers for FedVaccine, its chained variant and the baselines.

mod aggregate;
mod cluster;
mod sim;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_fedavg, aggregate_fedvaccine};
pub use cluster::{partition_clusters, ClusterPlan};
pub use sim::{client_stream, run_federation, Federation};

use crate::data::{ReplayQueue, ScenarioSpec};
use crate::error::{Error, Result};
use crate::nn::{train, Architecture, ModelParams, TrainConfig};
use crate::scalar::Scalar;
use crate::signal::{is_grid_snr, SignalFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmKind {
    FedVaccine,
    FedVaccineChain,
    FedAvg,
    FedSgd,
    FedProx,
    Gl,
    Cl,
    DistL,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 8] = [
        AlgorithmKind::FedVaccine,
        AlgorithmKind::FedVaccineChain,
        AlgorithmKind::FedAvg,
        AlgorithmKind::FedSgd,
        AlgorithmKind::FedProx,
        AlgorithmKind::Gl,
        AlgorithmKind::Cl,
        AlgorithmKind::DistL,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::FedVaccine => "fedvaccine",
            AlgorithmKind::FedVaccineChain => "chain",
            AlgorithmKind::FedAvg => "fedavg",
            AlgorithmKind::FedSgd => "fedsgd",
            AlgorithmKind::FedProx => "fedprox",
            AlgorithmKind::Gl => "gl",
            AlgorithmKind::Cl => "cl",
            AlgorithmKind::DistL => "distl",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Whether the algorithm keeps per-client replay queues.
    pub fn uses_queue(self) -> bool {
        matches!(self, AlgorithmKind::FedVaccine | AlgorithmKind::FedVaccineChain)
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a federation run needs besides data and architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlConfig {
    pub seed: u64,
    pub clients: usize,
    /// Global epochs `T`.
    pub rounds: usize,
    /// Local epochs `t`, batch size and optimizer.
    pub train: TrainConfig,
    /// FedProx coefficient.
    pub prox_mu: f64,
    /// Cluster count for FedVaccine.
    pub clusters: usize,
    /// SNR threshold applied to every client's training data.
    pub theta: i32,
    /// Replay queue capacity in samples (FedVaccine only).
    pub queue_capacity: usize,
    pub scenario: ScenarioSpec,
    /// Train clients of a cluster on the rayon pool.
    pub parallel: bool,
}

impl FlConfig {
    pub fn validate(&self, kind: AlgorithmKind) -> Result<()> {
        if self.clients == 0 || self.rounds == 0 || self.train.batch_size == 0 {
            return Err(Error::Config("clients, rounds and batch size must be positive".into()));
        }
        if !is_grid_snr(self.theta) {
            return Err(Error::Config(format!("theta {} is not on the SNR grid", self.theta)));
        }
        if kind == AlgorithmKind::FedVaccine && (self.clusters == 0 || self.clusters > self.clients) {
            return Err(Error::Config(format!(
                "cluster count {} must be in 1..={}",
                self.clusters, self.clients
            )));
        }
        if kind == AlgorithmKind::FedProx && !(self.prox_mu >= 0.0) {
            return Err(Error::Config("FedProx mu must be nonnegative".into()));
        }
        self.scenario.validate()
    }
}

/// One participant.
#[derive(Debug, Clone)]
pub struct ClientState<T> {
    pub id: usize,
    /// Persistent model, used only when clients never synchronize.
    pub model: Option<ModelParams<T>>,
    pub queue: ReplayQueue<T>,
    /// Training set of the current round, after filtering and queue append.
    pub current: Vec<SignalFrame<T>>,
    /// Samples trained on this round.
    pub delta: usize,
}

/// Per-round results. `wall_seconds` is informational and is not written to
/// the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub algorithm: AlgorithmKind,
    pub accuracy: f64,
    pub loss: f64,
    pub per_snr: BTreeMap<i32, f64>,
    pub deltas: Vec<usize>,
    /// Clients skipped because they had no data.
    pub skipped_clients: Vec<usize>,
    /// Clusters in which every member was skipped.
    pub skipped_clusters: Vec<usize>,
    pub client_accuracy: Option<Vec<f64>>,
    /// Total samples trained on this round.
    pub samples_seen: usize,
    /// Hash of every client's raw round draw, for pairing checks.
    pub data_hash: String,
    pub wall_seconds: f64,
}

/// Copies `init` and trains it on `frames`. Returns `None` (a skip) when there
/// is no data; `delta` is the number of frames trained on.
pub fn local_train<T: Scalar, R: Rng + ?Sized>(
    arch: &Architecture,
    init: &ModelParams<T>,
    frames: &[SignalFrame<T>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Option<(ModelParams<T>, usize)>> {
    if frames.is_empty() {
        return Ok(None);
    }
    let mut p = init.clone();
    train(arch, &mut p, frames, cfg, rng)?;
    Ok(Some((p, frames.len())))
}
