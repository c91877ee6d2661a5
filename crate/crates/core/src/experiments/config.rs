//! Line-oriented `key=value` run configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ScenarioKind, ScenarioSpec};
use crate::error::{Error, Result};
use crate::fl::{AlgorithmKind, FlConfig};
use crate::nn::{ArchWidths, Architecture, OptimizerConfig, OptimizerKind, TrainConfig};
use crate::signal::{is_grid_snr, FrameConfig, ImpairmentSpec, ModulationScheme};

/// Full experiment configuration. Defaults follow the full-scale protocol;
/// desk-scale runs override sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub clients: usize,
    /// Global epochs `T`.
    pub rounds: usize,
    /// Local epochs `t`.
    pub local_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub theta: i32,
    /// Queue capacity in samples.
    pub queue: usize,
    /// Extra queue capacity for the non-IID benchmark.
    pub queue_extension: usize,
    /// Samples per unit of the queue ablation.
    pub queue_unit: usize,
    pub clusters: usize,
    pub prox_mu: f64,
    pub scenario: ScenarioKind,
    pub algo: AlgorithmKind,
    /// θ-sweep repeats `K`.
    pub repeats: usize,
    /// Training epochs of each θ-sweep cell.
    pub sweep_epochs: usize,
    pub schemes: Vec<ModulationScheme>,
    pub snr_min: i32,
    pub snr_max: i32,
    pub train_per_cell: usize,
    pub test_per_cell: usize,
    /// Base per-client sample count `n`.
    pub samples: usize,
    pub fv_min: usize,
    pub fv_max: usize,
    pub frame_len: usize,
    /// Samples per symbol.
    pub sps: usize,
    pub impairments: bool,
    /// Largest carrier frequency offset, cycles per sample.
    pub max_cfo: f64,
    pub conv1: usize,
    pub conv2: usize,
    pub dense: usize,
    pub dropout: f64,
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            clients: 10,
            rounds: 100,
            local_epochs: 10,
            batch: 400,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            theta: -12,
            queue: 1500,
            queue_extension: 500,
            queue_unit: 1000,
            clusters: 2,
            prox_mu: 0.01,
            scenario: ScenarioKind::Iid,
            algo: AlgorithmKind::FedVaccine,
            repeats: 4,
            sweep_epochs: 30,
            schemes: ModulationScheme::ALL.to_vec(),
            snr_min: -20,
            snr_max: 18,
            train_per_cell: 60,
            test_per_cell: 20,
            samples: 1000,
            fv_min: 400,
            fv_max: 600,
            frame_len: 128,
            sps: 8,
            impairments: true,
            max_cfo: 0.01,
            conv1: 16,
            conv2: 32,
            dense: 128,
            dropout: 0.5,
            parallel: false,
        }
    }
}

/// Keys in the order they are written to `config.resolved`.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "clients",
    "rounds",
    "local_epochs",
    "batch",
    "lr",
    "optimizer",
    "theta",
    "queue",
    "queue_extension",
    "queue_unit",
    "clusters",
    "prox_mu",
    "scenario",
    "algo",
    "repeats",
    "sweep_epochs",
    "schemes",
    "snr_min",
    "snr_max",
    "train_per_cell",
    "test_per_cell",
    "samples",
    "fv_min",
    "fv_max",
    "frame_len",
    "sps",
    "impairments",
    "max_cfo",
    "conv1",
    "conv2",
    "dense",
    "dropout",
    "parallel",
];

fn parse_num<N: std::str::FromStr>(v: &str) -> std::result::Result<N, String> {
    v.parse::<N>().map_err(|_| format!("cannot parse `{v}` as a number"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(v)?,
            "clients" => self.clients = parse_num(v)?,
            "rounds" => self.rounds = parse_num(v)?,
            "local_epochs" => self.local_epochs = parse_num(v)?,
            "batch" => self.batch = parse_num(v)?,
            "lr" => self.lr = parse_num(v)?,
            "optimizer" => {
                self.optimizer = match v {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(format!("unknown optimizer `{v}`")),
                }
            }
            "theta" => self.theta = parse_num(v)?,
            "queue" => self.queue = parse_num(v)?,
            "queue_extension" => self.queue_extension = parse_num(v)?,
            "queue_unit" => self.queue_unit = parse_num(v)?,
            "clusters" => self.clusters = parse_num(v)?,
            "prox_mu" => self.prox_mu = parse_num(v)?,
            "scenario" => {
                self.scenario =
                    ScenarioKind::from_name(v).ok_or_else(|| format!("unknown scenario `{v}`"))?
            }
            "algo" => {
                self.algo =
                    AlgorithmKind::from_name(v).ok_or_else(|| format!("unknown algorithm `{v}`"))?
            }
            "repeats" => self.repeats = parse_num(v)?,
            "sweep_epochs" => self.sweep_epochs = parse_num(v)?,
            "schemes" => {
                self.schemes = v
                    .split(',')
                    .map(|s| {
                        ModulationScheme::from_name(s.trim())
                            .ok_or_else(|| format!("unknown scheme `{}`", s.trim()))
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
            "snr_min" => self.snr_min = parse_num(v)?,
            "snr_max" => self.snr_max = parse_num(v)?,
            "train_per_cell" => self.train_per_cell = parse_num(v)?,
            "test_per_cell" => self.test_per_cell = parse_num(v)?,
            "samples" => self.samples = parse_num(v)?,
            "fv_min" => self.fv_min = parse_num(v)?,
            "fv_max" => self.fv_max = parse_num(v)?,
            "frame_len" => self.frame_len = parse_num(v)?,
            "sps" => self.sps = parse_num(v)?,
            "impairments" => self.impairments = parse_bool(v)?,
            "max_cfo" => self.max_cfo = parse_num(v)?,
            "conv1" => self.conv1 = parse_num(v)?,
            "conv2" => self.conv2 = parse_num(v)?,
            "dense" => self.dense = parse_num(v)?,
            "dropout" => self.dropout = parse_num(v)?,
            "parallel" => self.parallel = parse_bool(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Textual value of one key, as written to `config.resolved`.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "clients" => self.clients.to_string(),
            "rounds" => self.rounds.to_string(),
            "local_epochs" => self.local_epochs.to_string(),
            "batch" => self.batch.to_string(),
            "lr" => self.lr.to_string(),
            "optimizer" => match self.optimizer {
                OptimizerKind::Adam => "adam".into(),
                OptimizerKind::Sgd => "sgd".into(),
            },
            "theta" => self.theta.to_string(),
            "queue" => self.queue.to_string(),
            "queue_extension" => self.queue_extension.to_string(),
            "queue_unit" => self.queue_unit.to_string(),
            "clusters" => self.clusters.to_string(),
            "prox_mu" => self.prox_mu.to_string(),
            "scenario" => self.scenario.name().into(),
            "algo" => self.algo.name().into(),
            "repeats" => self.repeats.to_string(),
            "sweep_epochs" => self.sweep_epochs.to_string(),
            "schemes" => self
                .schemes
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(","),
            "snr_min" => self.snr_min.to_string(),
            "snr_max" => self.snr_max.to_string(),
            "train_per_cell" => self.train_per_cell.to_string(),
            "test_per_cell" => self.test_per_cell.to_string(),
            "samples" => self.samples.to_string(),
            "fv_min" => self.fv_min.to_string(),
            "fv_max" => self.fv_max.to_string(),
            "frame_len" => self.frame_len.to_string(),
            "sps" => self.sps.to_string(),
            "impairments" => self.impairments.to_string(),
            "max_cfo" => self.max_cfo.to_string(),
            "conv1" => self.conv1.to_string(),
            "conv2" => self.conv2.to_string(),
            "dense" => self.dense.to_string(),
            "dropout" => self.dropout.to_string(),
            "parallel" => self.parallel.to_string(),
            _ => return None,
        })
    }

    /// Constraint check; returns the offending key and reason.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive: [(&'static str, usize); 14] = [
            ("clients", self.clients),
            ("rounds", self.rounds),
            ("batch", self.batch),
            ("clusters", self.clusters),
            ("repeats", self.repeats),
            ("train_per_cell", self.train_per_cell),
            ("test_per_cell", self.test_per_cell),
            ("samples", self.samples),
            ("fv_min", self.fv_min),
            ("frame_len", self.frame_len),
            ("conv1", self.conv1),
            ("conv2", self.conv2),
            ("dense", self.dense),
            ("queue_unit", self.queue_unit),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err((k, "must be positive".into()));
            }
        }
        for (k, v) in [("theta", self.theta), ("snr_min", self.snr_min), ("snr_max", self.snr_max)] {
            if !is_grid_snr(v) {
                return Err((k, format!("{v} is not an even dB value in [-20, 18]")));
            }
        }
        if self.snr_min > self.snr_max {
            return Err(("snr_max", "must be at least snr_min".into()));
        }
        if self.clusters > self.clients {
            return Err(("clusters", format!("exceeds client count {}", self.clients)));
        }
        if self.fv_max < self.fv_min {
            return Err(("fv_max", "must be at least fv_min".into()));
        }
        if self.schemes.is_empty() {
            return Err(("schemes", "at least one scheme is required".into()));
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(("schemes", "duplicate scheme".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(("lr", "must be positive".into()));
        }
        if !(self.prox_mu >= 0.0) {
            return Err(("prox_mu", "must be nonnegative".into()));
        }
        if self.frame_len < 8 {
            return Err(("frame_len", "must be at least 8".into()));
        }
        if self.sps < 2 || !self.frame_len.is_multiple_of(self.sps) {
            return Err(("sps", "must be at least 2 and divide frame_len".into()));
        }
        if !(0.0..=0.5).contains(&self.max_cfo) {
            return Err(("max_cfo", "must be in [0, 0.5]".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(("dropout", "must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Canonical `key=value` rendering; parsing it yields this config.
    pub fn render(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Short hash of the canonical rendering.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.render().as_bytes());
        d.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// Identifier carried by every emitted row.
    pub fn run_id(&self) -> String {
        format!("{}-{}", self.hash(), self.seed)
    }

    pub fn snr_list(&self) -> Vec<i32> {
        (self.snr_min..=self.snr_max).step_by(2).collect()
    }

    pub fn widths(&self) -> ArchWidths {
        ArchWidths {
            conv1: self.conv1,
            conv2: self.conv2,
            dense: self.dense,
            dropout: self.dropout,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::amc(self.frame_len, self.schemes.len(), &self.widths())
    }

    pub fn frame_config(&self) -> FrameConfig {
        FrameConfig {
            frame_len: self.frame_len,
            sps: self.sps,
            ..FrameConfig::default()
        }
    }

    pub fn impairment_spec(&self) -> ImpairmentSpec {
        if self.impairments {
            ImpairmentSpec {
                max_cfo: self.max_cfo,
                ..ImpairmentSpec::default()
            }
        } else {
            ImpairmentSpec::disabled()
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            ..OptimizerConfig::adam(self.lr)
        }
    }

    pub fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch,
            optimizer: self.optimizer_config(),
            prox_mu: 0.0,
        }
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            kind: self.scenario,
            n: self.samples,
            fv_min: self.fv_min,
            fv_max: self.fv_max,
        }
    }

    pub fn fl_config(&self) -> FlConfig {
        FlConfig {
            seed: self.seed,
            clients: self.clients,
            rounds: self.rounds,
            train: self.train_config(self.local_epochs),
            prox_mu: self.prox_mu,
            clusters: self.clusters,
            theta: self.theta,
            queue_capacity: self.queue,
            scenario: self.scenario_spec(),
            parallel: self.parallel,
        }
    }
}

/// Parses config text, then applies `overrides` (each `key=value`), then
/// checks constraints. Errors name the key and the line (overrides are
/// numbered from 1 after the file's last line).
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut origin: std::collections::HashMap<&'static str, usize> = Default::default();
    let file_lines = text.lines().count();
    let lines = text
        .lines()
        .map(str::to_string)
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .chain(overrides.iter().enumerate().map(|(i, o)| (file_lines + i + 1, o.clone())));
    for (line, raw) in lines {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(Error::Parse {
                line,
                key: body.to_string(),
                reason: "expected key=value".into(),
            });
        };
        let k = k.trim();
        let key = CONFIG_KEYS.iter().find(|c| **c == k).copied().ok_or_else(|| Error::Parse {
            line,
            key: k.to_string(),
            reason: "unknown key".into(),
        })?;
        cfg.set(key, v).map_err(|reason| Error::Parse {
            line,
            key: key.to_string(),
            reason,
        })?;
        origin.insert(key, line);
    }
    cfg.check().map_err(|(key, reason)| Error::Parse {
        line: origin.get(key).copied().unwrap_or(0),
        key: key.to_string(),
        reason,
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_protocol_defaults() {
        let c = parse_config("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.clients, c.local_epochs, c.rounds, c.batch), (10, 10, 100, 400));
        assert_eq!((c.queue, c.clusters, c.theta), (1500, 2, -12));
        assert_eq!(c.lr, 0.001);
    }

    #[test]
    fn overrides_win() {
        let c = parse_config("clusters=2\n", &["clusters=3".into()]).unwrap();
        assert_eq!(c.clusters, 3);
    }

    #[test]
    fn malformed_value_names_line_and_key() {
        match parse_config("# comment\nclients=4\ntheta=banana\n", &[]) {
            Err(Error::Parse { line, key, .. }) => assert_eq!((line, key.as_str()), (3, "theta")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config("colour=red", &[]),
            Err(Error::Parse { line: 1, .. })
        ));
        match parse_config("clients=4\nclusters=5 # too many\n", &[]) {
            Err(Error::Parse { line, key, .. }) => assert_eq!((line, key.as_str()), (2, "clusters")),
            other => panic!("{other:?}"),
        }
        assert!(parse_config("theta=-11", &[]).is_err());
    }

    #[test]
    fn render_round_trips() {
        let c = parse_config("schemes=bpsk,qam16\nlr=0.0005\nalgo=chain\nscenario=feat-var\n", &[]).unwrap();
        assert_eq!(parse_config(&c.render(), &[]).unwrap(), c);
        assert_ne!(c.hash(), RunConfig::default().hash());
    }
}
