use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mapping::{map_symbols, modulate_fsk};
use super::noise::{awgn_for_snr, complex_to_rows, ImpairmentSpec, NoiseModel};
use super::pulse::pulse_shape;
use super::{is_grid_snr, ModulationScheme};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

/// One labelled I/Q frame.
///
/// `iq` holds the `2 x L` matrix row-major: the in-phase row, then the
/// quadrature row. `clean` is the noise-free component on the same scale,
/// kept only for SNR verification.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame<T> {
    pub iq: Vec<T>,
    pub label: u8,
    pub snr_db: i32,
    pub clean: Option<Vec<T>>,
}

impl<T: Scalar> SignalFrame<T> {
    pub fn new(iq: Vec<T>, label: u8, snr_db: i32) -> Self {
        Self {
            iq,
            label,
            snr_db,
            clean: None,
        }
    }

    /// Number of complex samples `L`.
    pub fn len(&self) -> usize {
        self.iq.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.iq.is_empty()
    }

    pub fn in_phase(&self) -> &[T] {
        &self.iq[..self.len()]
    }

    pub fn quadrature(&self) -> &[T] {
        &self.iq[self.len()..]
    }

    /// Mean complex-sample power `(1/L) sum(I^2 + Q^2)`.
    pub fn power(&self) -> f64 {
        let l = self.len().max(1) as f64;
        self.iq.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / l
    }

    /// `iq - clean`, when the clean component is known.
    pub fn noise(&self) -> Option<Vec<T>> {
        self.clean
            .as_ref()
            .map(|c| self.iq.iter().zip(c).map(|(x, s)| *x - *s).collect())
    }

    pub fn without_clean(mut self) -> Self {
        self.clean = None;
        self
    }
}

/// Frame geometry and pulse-shaping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len: usize,
    pub sps: usize,
    pub rolloff: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_len: 128,
            sps: 8,
            rolloff: 0.35,
        }
    }
}

/// Per-frame RNG keyed by (master seed, scheme, snr, index).
pub fn frame_stream(seed: u64, scheme: ModulationScheme, snr_db: i32, index: u64) -> StreamRng {
    rng::stream(
        seed,
        &[rng::domain::FRAME, scheme.ordinal() as u64, snr_db as i64 as u64, index],
    )
}

/// Synthesizes a 2x128 frame at `snr_db` with AWGN.
pub fn synthesize_frame<T: Scalar, R: Rng + ?Sized>(
    scheme: ModulationScheme,
    snr_db: i32,
    impair: &ImpairmentSpec,
    rng: &mut R,
) -> Result<SignalFrame<T>> {
    synthesize_frame_with_noise(&FrameConfig::default(), scheme, snr_db, impair, &NoiseModel::Awgn, rng)
}

/// Full synthesis pipeline: random bits, symbol mapping, pulse shaping (or
/// continuous-phase modulation), impairments, noise at the target SNR, and
/// finally power normalization of the noisy frame.
pub fn synthesize_frame_with_noise<T: Scalar, R: Rng + ?Sized>(
    cfg: &FrameConfig,
    scheme: ModulationScheme,
    snr_db: i32,
    impair: &ImpairmentSpec,
    noise_model: &NoiseModel,
    rng: &mut R,
) -> Result<SignalFrame<T>> {
    if !is_grid_snr(snr_db) {
        return Err(Error::Config(format!("SNR {snr_db} dB is not on the -20..18 dB even grid")));
    }
    if cfg.sps < 2 || !cfg.frame_len.is_multiple_of(cfg.sps) || cfg.frame_len == 0 {
        return Err(Error::Config(format!(
            "frame length {} must be a positive multiple of sps {} (sps >= 2)",
            cfg.frame_len, cfg.sps
        )));
    }
    let n_symbols = cfg.frame_len / cfg.sps;
    let bits: Vec<u8> = (0..n_symbols * scheme.bits_per_symbol())
        .map(|_| rng.random_range(0..2u8))
        .collect();
    let symbols = map_symbols::<T>(&bits, scheme)?;
    let mut clean = if scheme.is_linear() {
        pulse_shape(&symbols, cfg.sps, cfg.rolloff)?
    } else {
        modulate_fsk(&symbols, scheme, cfg.sps)?
    };
    impair.apply(&mut clean, rng);

    let noise = match noise_model {
        NoiseModel::Awgn => awgn_for_snr(&clean, snr_db as f64, rng)?,
        other => {
            let raw: Vec<Complex<T>> = other.render(clean.len(), rng);
            let pr = raw.iter().map(|z| z.norm_sqr().as_f64()).sum::<f64>() / raw.len() as f64;
            if pr == 0.0 {
                return Err(Error::Degenerate("noise model renders zero power".into()));
            }
            let ps = clean.iter().map(|z| z.norm_sqr().as_f64()).sum::<f64>() / clean.len() as f64;
            let k = T::of((ps / 10f64.powf(snr_db as f64 / 10.0) / pr).sqrt());
            raw.into_iter().map(|z| z * k).collect()
        }
    };
    let noisy: Vec<Complex<T>> = clean.iter().zip(&noise).map(|(s, e)| *s + *e).collect();
    let frame = SignalFrame {
        iq: complex_to_rows(&noisy),
        label: scheme.ordinal(),
        snr_db,
        clean: Some(complex_to_rows(&clean)),
    };
    normalize_frame(frame)
}

/// Scales a frame to unit mean power; the clean component gets the same gain.
pub fn normalize_frame<T: Scalar>(mut frame: SignalFrame<T>) -> Result<SignalFrame<T>> {
    let p = frame.power();
    if !(p > 0.0) {
        return Err(Error::Degenerate("frame has zero power".into()));
    }
    let g = T::of(1.0 / p.sqrt());
    frame.iq.iter_mut().for_each(|v| *v *= g);
    if let Some(c) = frame.clean.as_mut() {
        c.iter_mut().for_each(|v| *v *= g);
    }
    Ok(frame)
}
