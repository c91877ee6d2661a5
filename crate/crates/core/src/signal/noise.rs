use std::f64::consts::PI;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Flattens a complex waveform into the `2 x L` row layout (I row, then Q row).
pub fn complex_to_rows<T: Scalar>(wave: &[Complex<T>]) -> Vec<T> {
    wave.iter().map(|z| z.re).chain(wave.iter().map(|z| z.im)).collect()
}

pub fn rows_to_complex<T: Scalar>(rows: &[T]) -> Vec<Complex<T>> {
    let l = rows.len() / 2;
    (0..l).map(|i| Complex::new(rows[i], rows[l + i])).collect()
}

fn mean_square<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / x.len().max(1) as f64
}

/// Ratio of time-averaged signal power to noise power, in dB.
///
/// Works on any real layout (a `2 x L` frame or a plain real waveform); both
/// arguments must have the same length.
pub fn measure_snr<T: Scalar>(signal: &[T], noise: &[T]) -> Result<f64> {
    if signal.len() != noise.len() {
        return Err(Error::Length(format!(
            "signal has {} samples, noise has {}",
            signal.len(),
            noise.len()
        )));
    }
    if signal.is_empty() {
        return Err(Error::Empty("waveform has no samples".into()));
    }
    let pn = mean_square(noise);
    if pn == 0.0 {
        return Err(Error::InfiniteSnr);
    }
    Ok(10.0 * (mean_square(signal) / pn).log10())
}

/// Draws complex white Gaussian noise whose realized power is exactly
/// `P_signal / 10^(snr/10)`.
///
/// Samples are i.i.d. Gaussian per real component; the whole draw is then
/// rescaled so the frame attains the target SNR rather than only matching it
/// in expectation.
pub fn awgn_for_snr<T: Scalar, R: Rng + ?Sized>(
    signal: &[Complex<T>],
    target_snr_db: f64,
    rng: &mut R,
) -> Result<Vec<Complex<T>>> {
    let ps = signal.iter().map(|z| z.norm_sqr().as_f64()).sum::<f64>() / signal.len().max(1) as f64;
    if ps == 0.0 || signal.is_empty() {
        return Err(Error::Degenerate("signal has zero power".into()));
    }
    let draws: Vec<(f64, f64)> = (0..signal.len())
        .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let raw = draws.iter().map(|(a, b)| a * a + b * b).sum::<f64>() / draws.len() as f64;
    let target = ps / 10f64.powf(target_snr_db / 10.0);
    let scale = (target / raw).sqrt();
    Ok(draws
        .into_iter()
        .map(|(a, b)| Complex::new(T::of(a * scale), T::of(b * scale)))
        .collect())
}

/// One trigonometric interference component `A sin(w n + phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// Angular frequency in radians per sample.
    pub omega: f64,
    pub phase: f64,
}

/// Shape of the additive noise term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum NoiseModel {
    #[default]
    Awgn,
    /// Sum of trigonometric sources; each component contributes
    /// `A sin(w n + phi)` on I and `A cos(w n + phi)` on Q.
    SinusoidalMix(Vec<Sinusoid>),
}

impl NoiseModel {
    /// Raw noise of the given length, before any SNR scaling.
    pub fn render<T: Scalar, R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<Complex<T>> {
        match self {
            NoiseModel::Awgn => (0..len)
                .map(|_| {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    Complex::new(T::of(a / 2f64.sqrt()), T::of(b / 2f64.sqrt()))
                })
                .collect(),
            NoiseModel::SinusoidalMix(components) => (0..len)
                .map(|n| {
                    let z = components.iter().fold(Complex::new(0.0, 0.0), |acc, c| {
                        let arg = c.omega * n as f64 + c.phase;
                        acc + Complex::new(c.amplitude * arg.sin(), c.amplitude * arg.cos())
                    });
                    Complex::new(T::of(z.re), T::of(z.im))
                })
                .collect(),
        }
    }
}

/// Random carrier phase and frequency offset applied to the clean signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentSpec {
    /// Phase offset is drawn uniformly from `[0, max_phase_offset)` radians.
    pub max_phase_offset: f64,
    /// Carrier offset is drawn uniformly from `[-max_cfo, max_cfo]` cycles/sample.
    pub max_cfo: f64,
    pub enabled: bool,
}

impl Default for ImpairmentSpec {
    fn default() -> Self {
        Self {
            max_phase_offset: 2.0 * PI,
            max_cfo: 0.01,
            enabled: true,
        }
    }
}

impl ImpairmentSpec {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// Rotates `wave` in place. A disabled spec leaves it (and the RNG) untouched.
    pub fn apply<T: Scalar, R: Rng + ?Sized>(&self, wave: &mut [Complex<T>], rng: &mut R) {
        if !self.enabled {
            return;
        }
        let phi = if self.max_phase_offset > 0.0 {
            rng.random_range(0.0..self.max_phase_offset)
        } else {
            0.0
        };
        let cfo = if self.max_cfo > 0.0 {
            rng.random_range(-self.max_cfo..=self.max_cfo)
        } else {
            0.0
        };
        for (n, z) in wave.iter_mut().enumerate() {
            let rot = Complex::from_polar(1.0, phi + 2.0 * PI * cfo * n as f64);
            *z *= Complex::new(T::of(rot.re), T::of(rot.im));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_against_tenth_amplitude_sine_is_20_db() {
        let s: Vec<f64> = (0..1000).map(|n| (0.05 * n as f64).sin()).collect();
        let e: Vec<f64> = s.iter().map(|x| 0.1 * x).collect();
        assert!((measure_snr(&s, &e).unwrap() - 20.0).abs() < 1e-9);
        assert!(measure_snr(&s, &s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tenfold_noise_power_is_minus_ten_db() {
        let mut rng = crate::rng::stream(5, &[]);
        let s: Vec<f64> = (0..256).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let ps = mean_square(&s);
        let raw: Vec<f64> = (0..256).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let k = (10.0 * ps / mean_square(&raw)).sqrt();
        let noise: Vec<f64> = raw.iter().map(|x| x * k).collect();
        // Oracle: direct power ratio.
        let direct = 10.0 * (ps / mean_square(&noise)).log10();
        let got = measure_snr(&s, &noise).unwrap();
        assert!((got + 10.0).abs() < 0.01);
        assert!((got - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_is_infinite_snr() {
        assert!(matches!(measure_snr(&[1.0, 2.0], &[0.0, 0.0]), Err(Error::InfiniteSnr)));
        assert!(matches!(measure_snr(&[1.0, 2.0], &[0.0]), Err(Error::Length(_))));
    }

    fn unit_signal(len: usize) -> Vec<Complex<f64>> {
        (0..len).map(|n| Complex::from_polar(1.0, 0.3 * n as f64)).collect()
    }

    #[test]
    fn awgn_hits_target_power() {
        let s = unit_signal(128);
        for (snr, want) in [(0.0, 1.0), (-20.0, 100.0), (18.0, 10f64.powf(-1.8))] {
            let mut total = 0.0;
            let draws = 1000;
            for i in 0..draws {
                let mut rng = crate::rng::stream(9, &[i]);
                let n = awgn_for_snr(&s, snr, &mut rng).unwrap();
                total += n.iter().map(|z| z.norm_sqr()).sum::<f64>() / n.len() as f64;
            }
            let mean = total / draws as f64;
            assert!((mean - want).abs() / want < 0.05, "snr {snr}: {mean} vs {want}");
        }
    }

    #[test]
    fn awgn_rejects_zero_signal() {
        let mut rng = crate::rng::stream(1, &[]);
        let s = vec![Complex::new(0.0f64, 0.0); 8];
        assert!(matches!(awgn_for_snr(&s, 0.0, &mut rng), Err(Error::Degenerate(_))));
    }

    #[test]
    fn empty_sinusoid_mix_is_zero() {
        let mut rng = crate::rng::stream(1, &[]);
        let z: Vec<Complex<f64>> = NoiseModel::SinusoidalMix(vec![]).render(32, &mut rng);
        assert!(z.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn disabled_impairment_is_identity() {
        let mut rng = crate::rng::stream(1, &[]);
        let mut w = unit_signal(16);
        let orig = w.clone();
        ImpairmentSpec::disabled().apply(&mut w, &mut rng);
        assert_eq!(w, orig);
    }

    #[test]
    fn impairment_preserves_power() {
        let mut rng = crate::rng::stream(2, &[]);
        let mut w = unit_signal(64);
        ImpairmentSpec::default().apply(&mut w, &mut rng);
        for z in &w {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }
}
