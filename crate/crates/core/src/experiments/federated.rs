//! FL protocols: IID comparison, non-IID benchmark and ablations.

use serde::{Deserialize, Serialize};

use super::output::MetricRow;
use super::RunConfig;
use crate::data::{Dataset, DatasetMeta, ScenarioKind};
use crate::error::{Error, Result};
use crate::fl::{run_federation, AlgorithmKind, FlConfig, RoundMetrics};
use crate::scalar::Scalar;
use crate::signal::SNR_MIN_DB;

/// Headline numbers of one algorithm run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: AlgorithmKind,
    pub scenario: ScenarioKind,
    pub theta: i32,
    pub max_accuracy: f64,
    /// Round at which the maximum was first reached.
    pub best_round: usize,
    pub final_accuracy: f64,
    pub min_loss: f64,
}

impl RunSummary {
    pub fn from_curve(algorithm: AlgorithmKind, scenario: ScenarioKind, theta: i32, curve: &[RoundMetrics]) -> Self {
        let mut best = (0.0, 0);
        for m in curve {
            if m.accuracy > best.0 {
                best = (m.accuracy, m.round);
            }
        }
        Self {
            algorithm,
            scenario,
            theta,
            max_accuracy: best.0,
            best_round: best.1,
            final_accuracy: curve.last().map_or(0.0, |m| m.accuracy),
            min_loss: curve.iter().map(|m| m.loss).fold(f64::INFINITY, f64::min),
        }
    }
}

/// First round whose accuracy reaches `target`, if any.
pub fn rounds_to_reach(curve: &[RoundMetrics], target: f64) -> Option<usize> {
    curve.iter().find(|m| m.accuracy >= target).map(|m| m.round)
}

/// One algorithm run with its full curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub summary: RunSummary,
    pub rounds: Vec<RoundMetrics>,
}

fn clusters_label(kind: AlgorithmKind, fl: &FlConfig) -> String {
    match kind {
        AlgorithmKind::FedVaccine => fl.clusters.to_string(),
        AlgorithmKind::FedVaccineChain => "none".into(),
        _ => "-".into(),
    }
}

fn run_one<T: Scalar>(
    cfg: &RunConfig,
    kind: AlgorithmKind,
    fl: &FlConfig,
    pool: &Dataset<T>,
    test: &Dataset<T>,
    rows: &mut Vec<MetricRow>,
) -> Result<Curve> {
    let arch = cfg.architecture();
    let (rounds, _) = run_federation(kind, fl, &arch, pool, &test.frames)?;
    let queue = if kind.uses_queue() { fl.queue_capacity } else { 0 };
    let label = clusters_label(kind, fl);
    let run_id = cfg.run_id();
    rows.extend(rounds.iter().map(|m| {
        MetricRow::from_round(&run_id, m, fl.scenario.kind.name(), fl.theta, label.clone(), queue)
    }));
    Ok(Curve {
        summary: RunSummary::from_curve(kind, fl.scenario.kind, fl.theta, &rounds),
        rounds,
    })
}

/// A single configured run (`cfg.algo` under `cfg.scenario`).
pub fn run_single<T: Scalar>(
    cfg: &RunConfig,
    pool: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Curve, Vec<MetricRow>)> {
    let mut rows = Vec::new();
    let curve = run_one(cfg, cfg.algo, &cfg.fl_config(), pool, test, &mut rows)?;
    Ok((curve, rows))
}

/// FedAvg and FedVaccine under IID sampling for each θ; the threshold applies
/// to both algorithms.
pub fn run_iid_comparison<T: Scalar>(
    cfg: &RunConfig,
    thetas: &[i32],
    pool: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Vec<Curve>, Vec<MetricRow>)> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &theta in thetas {
        for kind in [AlgorithmKind::FedAvg, AlgorithmKind::FedVaccine] {
            let mut fl = cfg.fl_config();
            fl.scenario.kind = ScenarioKind::Iid;
            fl.theta = theta;
            curves.push(run_one(cfg, kind, &fl, pool, test, &mut rows)?);
        }
    }
    Ok((curves, rows))
}

/// Every algorithm on every listed non-IID scenario. Baselines train on all
/// SNRs; the FedVaccine variants use the configured θ and a queue extended by
/// `queue_extension` samples. All runs share the per-round data draws.
pub fn run_noniid_benchmark<T: Scalar>(
    cfg: &RunConfig,
    scenarios: &[ScenarioKind],
    algorithms: &[AlgorithmKind],
    pool: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Vec<Curve>, Vec<MetricRow>)> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &scenario in scenarios {
        for &kind in algorithms {
            let mut fl = cfg.fl_config();
            fl.scenario.kind = scenario;
            fl.queue_capacity = cfg.queue + cfg.queue_extension;
            if !kind.uses_queue() {
                fl.theta = SNR_MIN_DB;
            }
            curves.push(run_one(cfg, kind, &fl, pool, test, &mut rows)?);
        }
    }
    Ok((curves, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationKind {
    Cluster,
    Queue,
    SnrRange,
}

impl AblationKind {
    pub fn name(self) -> &'static str {
        match self {
            AblationKind::Cluster => "cluster",
            AblationKind::Queue => "queue",
            AblationKind::SnrRange => "snr-range",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [AblationKind::Cluster, AblationKind::Queue, AblationKind::SnrRange]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// Cluster counts of the cluster ablation; `None` is the chained mode.
pub const CLUSTER_SETTINGS: [Option<usize>; 7] = [Some(1), Some(2), Some(3), Some(4), Some(5), Some(10), None];

/// Queue sizes, in units of `queue_unit` samples.
pub const QUEUE_SETTINGS: [usize; 7] = [0, 1, 2, 3, 4, 5, 10];

/// Disjoint training bands of the SNR-range ablation, inclusive.
pub const SNR_BANDS: [(i32, i32); 4] = [(-20, -12), (-10, -2), (0, 8), (10, 18)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    /// Queue memory, one KB per stored 2x128 float frame.
    pub memory: Option<String>,
    pub max_accuracy: f64,
    pub min_loss: f64,
}

/// Restricts a pool to SNRs in `[lo, hi]`.
pub fn band_pool<T: Scalar>(pool: &Dataset<T>, lo: i32, hi: i32) -> Dataset<T> {
    Dataset::new(
        pool.frames
            .iter()
            .filter(|f| (lo..=hi).contains(&f.snr_db))
            .cloned()
            .collect(),
        DatasetMeta {
            snrs: pool.meta.snrs.iter().copied().filter(|s| (lo..=hi).contains(s)).collect(),
            ..pool.meta.clone()
        },
    )
}

/// FedVaccine under IID sampling with one setting varied at a time.
pub fn run_ablation<T: Scalar>(
    kind: AblationKind,
    cfg: &RunConfig,
    pool: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Vec<AblationRow>, Vec<Curve>, Vec<MetricRow>)> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut table = Vec::new();
    let mut base = cfg.fl_config();
    base.scenario.kind = ScenarioKind::Iid;
    let mut push = |setting: String, memory: Option<String>, curve: Curve, table: &mut Vec<AblationRow>| {
        table.push(AblationRow {
            setting,
            memory,
            max_accuracy: curve.summary.max_accuracy,
            min_loss: curve.summary.min_loss,
        });
        curves.push(curve);
    };
    match kind {
        AblationKind::Cluster => {
            for c in CLUSTER_SETTINGS {
                let (algo, label) = match c {
                    Some(c) if c > cfg.clients => {
                        return Err(Error::Config(format!(
                            "cluster ablation needs at least {c} clients, have {}",
                            cfg.clients
                        )))
                    }
                    Some(c) => (AlgorithmKind::FedVaccine, c.to_string()),
                    None => (AlgorithmKind::FedVaccineChain, "None".into()),
                };
                let mut fl = base.clone();
                fl.clusters = c.unwrap_or(1);
                let curve = run_one(cfg, algo, &fl, pool, test, &mut rows)?;
                push(label, None, curve, &mut table);
            }
        }
        AblationKind::Queue => {
            for k in QUEUE_SETTINGS {
                let mut fl = base.clone();
                fl.queue_capacity = k * cfg.queue_unit;
                let curve = run_one(cfg, AlgorithmKind::FedVaccine, &fl, pool, test, &mut rows)?;
                push(k.to_string(), Some(format!("+{}KB", fl.queue_capacity)), curve, &mut table);
            }
        }
        AblationKind::SnrRange => {
            for (lo, hi) in SNR_BANDS {
                let band = band_pool(pool, lo, hi);
                if band.meta.snrs.is_empty() {
                    return Err(Error::Config(format!("pool has no SNRs in {lo}..{hi}")));
                }
                let mut fl = base.clone();
                fl.theta = lo;
                let curve = run_one(cfg, AlgorithmKind::FedVaccine, &fl, &band, test, &mut rows)?;
                push(format!("{lo}..{hi}"), None, curve, &mut table);
            }
        }
    }
    Ok((table, curves, rows))
}
