//! Datasets, label statistics, SNR filtering, replay queues, non-IID scenario
//! sampling and the `AMCD` file format.

mod codec;
mod divergence;
mod queue;
mod scenario;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use codec::{read_dataset, write_dataset, load_dataset, save_dataset, DATASET_HEADER_LEN, DATASET_MAGIC, DATASET_VERSION};
pub use divergence::{js_divergence, kl_divergence, LabelDistribution, DEFAULT_KAPPA};
pub use queue::{QueueEntry, ReplayQueue};
pub use scenario::{
    materialize, sample_scenario, scenario_stream, ScenarioDraw, ScenarioKind, ScenarioSpec,
    StratifiedPool,
};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::signal::{
    frame_stream, is_grid_snr, synthesize_frame_with_noise, FrameConfig, ImpairmentSpec,
    ModulationScheme, NoiseModel, SignalFrame,
};

/// Provenance attached to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    /// Active classes; a frame's label indexes this list.
    pub schemes: Vec<ModulationScheme>,
    pub snrs: Vec<i32>,
    pub frame_len: usize,
}

impl DatasetMeta {
    pub fn class_count(&self) -> usize {
        self.schemes.len()
    }
}

/// Ordered frames plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub frames: Vec<SignalFrame<T>>,
    pub meta: DatasetMeta,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(frames: Vec<SignalFrame<T>>, meta: DatasetMeta) -> Self {
        Self { frames, meta }
    }

    /// Empty dataset sharing this one's metadata.
    pub fn empty_like(&self) -> Self {
        Self {
            frames: Vec::new(),
            meta: self.meta.clone(),
        }
    }

    pub fn with_frames(&self, frames: Vec<SignalFrame<T>>) -> Self {
        Self {
            frames,
            meta: self.meta.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.meta.class_count()
    }

    /// Checks labels and SNRs against the metadata.
    pub fn validate(&self) -> Result<()> {
        let c = self.class_count();
        for f in &self.frames {
            if f.label as usize >= c {
                return Err(Error::Label {
                    label: f.label as usize,
                    classes: c,
                });
            }
            if !is_grid_snr(f.snr_db) {
                return Err(Error::Config(format!("frame SNR {} dB is off the grid", f.snr_db)));
            }
            if f.len() != self.meta.frame_len {
                return Err(Error::Length(format!(
                    "frame of length {} in a dataset of length {}",
                    f.len(),
                    self.meta.frame_len
                )));
            }
        }
        Ok(())
    }

    /// Per-class frame counts.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for f in &self.frames {
            counts[f.label as usize] += 1;
        }
        counts
    }

    /// SHA-256 over labels, SNRs and payload bytes; metadata is ignored.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.frames {
            h.update([f.label]);
            h.update(f.snr_db.to_le_bytes());
            for v in &f.iq {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Empirical label distribution.
pub fn label_distribution<T: Scalar>(ds: &Dataset<T>) -> Result<LabelDistribution> {
    if ds.is_empty() {
        return Err(Error::Empty("label distribution of an empty dataset".into()));
    }
    LabelDistribution::from_counts(&ds.label_counts())
}

/// Keeps frames with `snr_db >= theta`, preserving order.
pub fn filter_by_snr<T: Scalar>(ds: &Dataset<T>, theta: i32) -> Dataset<T> {
    ds.with_frames(ds.frames.iter().filter(|f| f.snr_db >= theta).cloned().collect())
}

/// Settings for synthesizing a stratified frame pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub schemes: Vec<ModulationScheme>,
    pub snrs: Vec<i32>,
    pub frames_per_cell: usize,
    /// First per-cell frame index; disjoint index ranges give disjoint pools.
    pub first_index: u64,
    pub frame: FrameConfig,
    pub impairments: ImpairmentSpec,
    pub noise: NoiseModel,
    pub keep_clean: bool,
}

impl GenerateSpec {
    pub fn new(schemes: Vec<ModulationScheme>, snrs: Vec<i32>, frames_per_cell: usize) -> Self {
        Self {
            schemes,
            snrs,
            frames_per_cell,
            first_index: 0,
            frame: FrameConfig::default(),
            impairments: ImpairmentSpec::default(),
            noise: NoiseModel::Awgn,
            keep_clean: false,
        }
    }
}

/// Synthesizes `frames_per_cell` frames for every (scheme, SNR) cell, ordered
/// by scheme, then SNR, then index. Each frame has its own keyed stream.
pub fn generate_dataset<T: Scalar>(seed: u64, spec: &GenerateSpec) -> Result<Dataset<T>> {
    if spec.schemes.is_empty() || spec.schemes.len() > u8::MAX as usize {
        return Err(Error::Config("scheme list must hold 1..=255 schemes".into()));
    }
    let mut frames = Vec::with_capacity(spec.schemes.len() * spec.snrs.len() * spec.frames_per_cell);
    for (label, &scheme) in spec.schemes.iter().enumerate() {
        for &snr in &spec.snrs {
            for i in 0..spec.frames_per_cell as u64 {
                let idx = spec.first_index + i;
                let mut r = frame_stream(seed, scheme, snr, idx);
                let mut f: SignalFrame<T> = synthesize_frame_with_noise(
                    &spec.frame,
                    scheme,
                    snr,
                    &spec.impairments,
                    &spec.noise,
                    &mut r,
                )?;
                f.label = label as u8;
                if !spec.keep_clean {
                    f.clean = None;
                }
                frames.push(f);
            }
        }
    }
    Ok(Dataset::new(
        frames,
        DatasetMeta {
            seed,
            schemes: spec.schemes.clone(),
            snrs: spec.snrs.clone(),
            frame_len: spec.frame.frame_len,
        },
    ))
}

/// Uniform subsample without replacement of exactly `k` frames, order kept.
pub fn subsample<T: Scalar>(ds: &Dataset<T>, k: usize, seed: u64, keys: &[u64]) -> Dataset<T> {
    use rand::seq::index::sample;
    let mut r = rng::stream(seed, keys);
    let k = k.min(ds.len());
    let mut idx = sample(&mut r, ds.len(), k).into_vec();
    idx.sort_unstable();
    ds.with_frames(idx.into_iter().map(|i| ds.frames[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::snr_grid;

    fn meta(c: usize) -> DatasetMeta {
        DatasetMeta {
            seed: 0,
            schemes: ModulationScheme::ALL[..c].to_vec(),
            snrs: snr_grid(),
            frame_len: 2,
        }
    }

    fn ds(items: &[(u8, i32)], c: usize) -> Dataset<f32> {
        Dataset::new(
            items
                .iter()
                .map(|&(l, s)| SignalFrame::new(vec![l as f32, s as f32, 0.5, 0.25], l, s))
                .collect(),
            meta(c),
        )
    }

    #[test]
    fn distribution_counts() {
        let one_each: Vec<(u8, i32)> = (0..8).map(|c| (c, 0)).collect();
        let l = label_distribution(&ds(&one_each, 8)).unwrap();
        assert!(l.probs.iter().all(|p| (p - 0.125).abs() < 1e-15));
        let l = label_distribution(&ds(&[(3, 0), (3, 2)], 8)).unwrap();
        assert_eq!(l.probs[3], 1.0);
        let l = label_distribution(&ds(&[(0, 0), (1, 0), (1, 0), (2, 0)], 3)).unwrap();
        assert_eq!(l.probs, vec![0.25, 0.5, 0.25]);
        assert!(matches!(label_distribution(&ds(&[], 3)), Err(Error::Empty(_))));
    }

    #[test]
    fn filter_examples() {
        let d = ds(&[(0, -20), (1, 0), (2, 18)], 3);
        let f = filter_by_snr(&d, -12);
        assert_eq!(f.frames.iter().map(|f| f.snr_db).collect::<Vec<_>>(), vec![0, 18]);
        assert_eq!(filter_by_snr(&d, -20), d);
        assert_eq!(filter_by_snr(&d, 18).len(), 1);
    }

    #[test]
    fn generated_pool_is_stratified_and_deterministic() {
        let spec = GenerateSpec::new(
            vec![ModulationScheme::Qpsk, ModulationScheme::Gfsk],
            vec![-4, 10],
            3,
        );
        let a = generate_dataset::<f32>(5, &spec).unwrap();
        assert_eq!(a.len(), 12);
        a.validate().unwrap();
        assert_eq!(a.label_counts(), vec![6, 6]);
        assert_eq!(a.content_hash(), generate_dataset::<f32>(5, &spec).unwrap().content_hash());
        assert!(a.frames.iter().all(|f| f.clean.is_none()));
        let mut later = spec.clone();
        later.first_index = 3;
        let b = generate_dataset::<f32>(5, &later).unwrap();
        assert_ne!(a.frames[0], b.frames[0]);
    }

    #[test]
    fn subsample_is_exact_size() {
        let d = ds(&[(0, 0); 10], 1);
        assert_eq!(subsample(&d, 4, 1, &[2]).len(), 4);
        assert_eq!(subsample(&d, 40, 1, &[2]).len(), 10);
    }
}
