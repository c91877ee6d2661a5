use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

/// How client data is drawn each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    Iid,
    ClassImbalance,
    VolumeImbalance,
    FeatureVariance,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Iid,
        ScenarioKind::ClassImbalance,
        ScenarioKind::VolumeImbalance,
        ScenarioKind::FeatureVariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Iid => "iid",
            ScenarioKind::ClassImbalance => "class-imb",
            ScenarioKind::VolumeImbalance => "vol-imb",
            ScenarioKind::FeatureVariance => "feat-var",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Base per-client sample count.
    pub n: usize,
    /// Inclusive sample-count bounds for feature variance.
    pub fv_min: usize,
    pub fv_max: usize,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: usize) -> Self {
        Self {
            kind,
            n,
            fv_min: 400,
            fv_max: 600,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.fv_min == 0 || self.fv_min > self.fv_max {
            return Err(Error::Config(format!(
                "scenario bounds must be positive with min <= max (n={}, [{}, {}])",
                self.n, self.fv_min, self.fv_max
            )));
        }
        Ok(())
    }
}

/// The random per-round choice that defines a scenario draw, before frames
/// are picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioDraw {
    Iid,
    /// Unnormalized per-class inclusion weights in `[0, 1]`.
    ClassWeights(Vec<f64>),
    /// Keep probability `p`; `floor(p * n)` frames are returned.
    Volume(f64),
    /// One SNR and a sample count.
    SingleSnr { snr_db: i32, count: usize },
}

/// Index of a pool by (class, SNR) cell.
#[derive(Debug, Clone)]
pub struct StratifiedPool<'a, T> {
    pool: &'a Dataset<T>,
    cells: BTreeMap<(u8, i32), Vec<usize>>,
    classes: usize,
    snrs: Vec<i32>,
}

impl<'a, T: Scalar> StratifiedPool<'a, T> {
    /// Indexes `pool`, requiring a nonempty cell for every class and every SNR
    /// listed in its metadata.
    pub fn new(pool: &'a Dataset<T>) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::Empty("scenario pool is empty".into()));
        }
        let mut cells: BTreeMap<(u8, i32), Vec<usize>> = BTreeMap::new();
        for (i, f) in pool.frames.iter().enumerate() {
            cells.entry((f.label, f.snr_db)).or_default().push(i);
        }
        let classes = pool.class_count();
        let snrs = pool.meta.snrs.clone();
        for c in 0..classes {
            for &s in &snrs {
                if !cells.contains_key(&(c as u8, s)) {
                    return Err(Error::Stratification { class: c, snr_db: s });
                }
            }
        }
        Ok(Self {
            pool,
            cells,
            classes,
            snrs,
        })
    }

    pub fn snrs(&self) -> &[i32] {
        &self.snrs
    }

    fn pick<R: Rng + ?Sized>(&self, class: usize, snr: i32, rng: &mut R) -> usize {
        let cell = &self.cells[&(class as u8, snr)];
        cell[rng.random_range(0..cell.len())]
    }

    fn pick_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let c = rng.random_range(0..self.classes);
        let s = self.snrs[rng.random_range(0..self.snrs.len())];
        self.pick(c, s, rng)
    }
}

/// Stream for one client's data in one round.
pub fn scenario_stream(seed: u64, client: usize, round: u64) -> StreamRng {
    rng::stream(seed, &[rng::domain::SCENARIO, client as u64, round])
}

fn draw<R: Rng + ?Sized>(spec: &ScenarioSpec, classes: usize, snrs: &[i32], rng: &mut R) -> ScenarioDraw {
    match spec.kind {
        ScenarioKind::Iid => ScenarioDraw::Iid,
        ScenarioKind::ClassImbalance => {
            ScenarioDraw::ClassWeights((0..classes).map(|_| rng.random::<f64>()).collect())
        }
        ScenarioKind::VolumeImbalance => ScenarioDraw::Volume(rng.random::<f64>()),
        ScenarioKind::FeatureVariance => ScenarioDraw::SingleSnr {
            snr_db: snrs[rng.random_range(0..snrs.len())],
            count: rng.random_range(spec.fv_min..=spec.fv_max),
        },
    }
}

/// Picks frames for an already drawn scenario choice. Sampling is with
/// replacement from the pool cells.
pub fn materialize<T: Scalar, R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    pool: &StratifiedPool<'_, T>,
    choice: &ScenarioDraw,
    rng: &mut R,
) -> Result<Dataset<T>> {
    let idx: Vec<usize> = match choice {
        ScenarioDraw::Iid => (0..spec.n).map(|_| pool.pick_uniform(rng)).collect(),
        ScenarioDraw::ClassWeights(w) => {
            let total: f64 = w.iter().sum();
            if w.len() != pool.classes {
                return Err(Error::Length(format!(
                    "{} class weights for {} classes",
                    w.len(),
                    pool.classes
                )));
            }
            (0..spec.n)
                .map(|_| {
                    let class = if total > 0.0 {
                        let mut u = rng.random::<f64>() * total;
                        let mut c = 0;
                        while c + 1 < w.len() && u >= w[c] {
                            u -= w[c];
                            c += 1;
                        }
                        c
                    } else {
                        rng.random_range(0..pool.classes)
                    };
                    let s = pool.snrs[rng.random_range(0..pool.snrs.len())];
                    pool.pick(class, s, rng)
                })
                .collect()
        }
        ScenarioDraw::Volume(p) => {
            let k = (p.clamp(0.0, 1.0) * spec.n as f64).floor() as usize;
            (0..k).map(|_| pool.pick_uniform(rng)).collect()
        }
        ScenarioDraw::SingleSnr { snr_db, count } => {
            if !pool.snrs.contains(snr_db) {
                return Err(Error::Stratification {
                    class: 0,
                    snr_db: *snr_db,
                });
            }
            (0..*count)
                .map(|_| pool.pick(rng.random_range(0..pool.classes), *snr_db, rng))
                .collect()
        }
    };
    Ok(pool
        .pool
        .with_frames(idx.into_iter().map(|i| pool.pool.frames[i].clone()).collect()))
}

/// Draws one client's round data. Returns the draw alongside the frames so
/// callers can audit the scenario constraint.
pub fn sample_scenario<T: Scalar, R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    pool: &StratifiedPool<'_, T>,
    rng: &mut R,
) -> Result<(ScenarioDraw, Dataset<T>)> {
    spec.validate()?;
    let choice = draw(spec, pool.classes, &pool.snrs, rng);
    let ds = materialize(spec, pool, &choice, rng)?;
    Ok((choice, ds))
}
