use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::loss::{argmax_rows, cross_entropy};
use super::model::ModelParams;
use super::optim::{OptimizerConfig, OptimizerState};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::SignalFrame;

/// Mini-batch training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// FedProx coefficient; zero disables the proximal term.
    pub prox_mu: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            prox_mu: 0.0,
        }
    }
}

/// Result of scoring a model on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub per_snr: BTreeMap<i32, f64>,
}

/// Stacks frames into an `N x 1 x 2 x L` batch plus labels.
pub fn make_batch<T: Scalar>(
    arch: &Architecture,
    frames: &[&SignalFrame<T>],
) -> Result<(Tensor<T>, Vec<usize>)> {
    let len = arch.input_len();
    let mut data = Vec::with_capacity(frames.len() * len);
    let mut labels = Vec::with_capacity(frames.len());
    for f in frames {
        if f.iq.len() != len {
            return Err(Error::Dimension(format!(
                "frame has {} values, network expects {len}",
                f.iq.len()
            )));
        }
        data.extend_from_slice(&f.iq);
        labels.push(f.label as usize);
    }
    let mut shape = vec![frames.len()];
    shape.extend_from_slice(&arch.input);
    Ok((Tensor::from_vec(&shape, data)?, labels))
}

/// Gradient of the proximal penalty `(mu/2)||w - anchor||^2`, added in place.
pub fn add_prox_gradient<T: Scalar>(
    grads: &mut ModelParams<T>,
    params: &ModelParams<T>,
    anchor: &ModelParams<T>,
    mu: f64,
) {
    let mu = T::of(mu);
    let it = grads
        .tensors_mut()
        .zip(params.tensors().zip(anchor.tensors()));
    for (g, (w, a)) in it {
        for (gv, (wv, av)) in g.data_mut().iter_mut().zip(w.data().iter().zip(a.data())) {
            *gv += mu * (*wv - *av);
        }
    }
}

/// Runs `cfg.epochs` shuffled mini-batch epochs over `frames`, mutating
/// `params`. Optimizer state starts fresh. Returns the mean loss of the last
/// epoch, or `None` when nothing was trained.
pub fn train<T: Scalar, R: Rng + ?Sized>(
    arch: &Architecture,
    params: &mut ModelParams<T>,
    frames: &[SignalFrame<T>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    train_with_state(arch, params, frames, cfg, &mut OptimizerState::new(cfg.optimizer), rng)
}

/// As [`train`], continuing from an existing optimizer state.
pub fn train_with_state<T: Scalar, R: Rng + ?Sized>(
    arch: &Architecture,
    params: &mut ModelParams<T>,
    frames: &[SignalFrame<T>],
    cfg: &TrainConfig,
    opt: &mut OptimizerState<T>,
    rng: &mut R,
) -> Result<Option<f64>> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if frames.is_empty() || cfg.epochs == 0 {
        return Ok(None);
    }
    let anchor = (cfg.prox_mu > 0.0).then(|| params.clone());
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut last = None;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&SignalFrame<T>> = chunk.iter().map(|&i| &frames[i]).collect();
            let (batch, labels) = make_batch(arch, &refs)?;
            let (loss, mut grads) = arch.backward(params, &batch, &labels, rng)?;
            if let Some(a) = &anchor {
                add_prox_gradient(&mut grads, params, a, cfg.prox_mu);
            }
            opt.step(params, &grads)?;
            total += loss.as_f64() * chunk.len() as f64;
        }
        last = Some(total / frames.len() as f64);
    }
    Ok(last)
}

/// Mean loss gradient over the whole dataset in one pass (no update).
pub fn full_gradient<T: Scalar, R: Rng + ?Sized>(
    arch: &Architecture,
    params: &ModelParams<T>,
    frames: &[SignalFrame<T>],
    batch_size: usize,
    rng: &mut R,
) -> Result<ModelParams<T>> {
    if frames.is_empty() {
        return Err(Error::Empty("gradient over an empty dataset".into()));
    }
    let mut acc = params.zeros_like();
    for chunk in frames.chunks(batch_size.max(1)) {
        let refs: Vec<&SignalFrame<T>> = chunk.iter().collect();
        let (batch, labels) = make_batch(arch, &refs)?;
        let (_, g) = arch.backward(params, &batch, &labels, rng)?;
        acc.axpy(T::of(chunk.len() as f64 / frames.len() as f64), &g);
    }
    Ok(acc)
}

/// Predicted class of a single frame.
pub fn predict<T: Scalar>(
    arch: &Architecture,
    params: &ModelParams<T>,
    frame: &SignalFrame<T>,
) -> Result<usize> {
    let (batch, _) = make_batch(arch, &[frame])?;
    let logits = arch.forward(params, &batch, false, &mut crate::rng::stream(0, &[]))?;
    Ok(argmax_rows(&logits)[0])
}

const EVAL_CHUNK: usize = 256;

/// Accuracy, mean cross-entropy and per-SNR accuracy with dropout disabled.
pub fn evaluate<T: Scalar>(
    arch: &Architecture,
    params: &ModelParams<T>,
    frames: &[SignalFrame<T>],
) -> Result<Evaluation> {
    if frames.is_empty() {
        return Err(Error::Empty("evaluation dataset is empty".into()));
    }
    let mut no_rng = crate::rng::stream(0, &[]);
    let mut correct = 0usize;
    let mut loss = 0.0;
    let mut per: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    for chunk in frames.chunks(EVAL_CHUNK) {
        let refs: Vec<&SignalFrame<T>> = chunk.iter().collect();
        let (batch, labels) = make_batch(arch, &refs)?;
        let logits = arch.forward(params, &batch, false, &mut no_rng)?;
        let (l, _) = cross_entropy(&logits, &labels)?;
        loss += l.as_f64() * chunk.len() as f64;
        for ((pred, y), f) in argmax_rows(&logits).into_iter().zip(&labels).zip(chunk) {
            let e = per.entry(f.snr_db).or_default();
            e.1 += 1;
            if pred == *y {
                correct += 1;
                e.0 += 1;
            }
        }
    }
    let n = frames.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
        per_snr: per
            .into_iter()
            .map(|(k, (c, t))| (k, c as f64 / t as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, LayerSpec};
    use crate::rng::stream;

    fn toy_arch() -> Architecture {
        Architecture {
            input: [1, 2, 4],
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 8, outputs: 2 },
            ],
        }
    }

    fn toy_frames(n: usize, seed: u64) -> Vec<SignalFrame<f64>> {
        let mut r = stream(seed, &[]);
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let sign = if label == 0 { 1.0 } else { -1.0 };
                let iq = (0..8).map(|_| sign + r.random_range(-0.5..0.5)).collect();
                SignalFrame::new(iq, label, 0)
            })
            .collect()
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let arch = toy_arch();
        let mut p = init_model::<f64>(&arch, 3).unwrap();
        let frames = toy_frames(64, 1);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 64,
            optimizer: OptimizerConfig::adam(0.01),
            prox_mu: 0.0,
        };
        train(&arch, &mut p, &frames, &cfg, &mut stream(5, &[])).unwrap();
        let e = evaluate(&arch, &p, &frames).unwrap();
        assert!(e.accuracy >= 0.99, "{}", e.accuracy);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let arch = toy_arch();
        let mut p = init_model::<f64>(&arch, 3).unwrap();
        let before = p.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        train(&arch, &mut p, &toy_frames(8, 1), &cfg, &mut stream(5, &[])).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn evaluate_matches_per_frame_loop() {
        let arch = toy_arch();
        let p = init_model::<f64>(&arch, 9).unwrap();
        let mut frames = toy_frames(300, 2);
        for (i, f) in frames.iter_mut().enumerate() {
            f.snr_db = if i % 3 == 0 { -4 } else { 6 };
        }
        let e = evaluate(&arch, &p, &frames).unwrap();
        let hits: Vec<bool> = frames
            .iter()
            .map(|f| predict(&arch, &p, f).unwrap() == f.label as usize)
            .collect();
        let acc = hits.iter().filter(|&&h| h).count() as f64 / 300.0;
        assert_eq!(e.accuracy, acc);
        assert_eq!(e.per_snr.keys().copied().collect::<Vec<_>>(), vec![-4, 6]);
    }

    #[test]
    fn single_correct_frame_scores_one() {
        let arch = toy_arch();
        let p = init_model::<f64>(&arch, 9).unwrap();
        let mut f = toy_frames(1, 2).remove(0);
        f.label = predict(&arch, &p, &f).unwrap() as u8;
        assert_eq!(evaluate(&arch, &p, &[f]).unwrap().accuracy, 1.0);
    }

    #[test]
    fn empty_evaluation_errors() {
        let arch = toy_arch();
        let p = init_model::<f64>(&arch, 9).unwrap();
        assert!(matches!(evaluate(&arch, &p, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn huge_prox_mu_shrinks_the_update() {
        // The penalty gradient is zero on the first step, which starts at the
        // anchor, so the comparison runs several steps. With lr * mu = 1 each
        // step cancels the accumulated drift.
        let arch = toy_arch();
        let init = init_model::<f64>(&arch, 4).unwrap();
        let frames = toy_frames(16, 3);
        let drift = |mu: f64| {
            let mut p = init.clone();
            let cfg = TrainConfig {
                epochs: 10,
                batch_size: 16,
                optimizer: OptimizerConfig::sgd(1e-6),
                prox_mu: mu,
            };
            train(&arch, &mut p, &frames, &cfg, &mut stream(1, &[])).unwrap();
            p.dist_sq(&init).sqrt()
        };
        let plain = drift(0.0);
        assert!(plain > 0.0);
        assert!(drift(1e6) < 0.2 * plain);
    }
}
