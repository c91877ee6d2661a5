use std::f64::consts::PI;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Total RRC filter length in symbols (the filter covers ±4 symbols).
pub const RRC_SPAN_SYMBOLS: usize = 8;

/// Energy-normalized root-raised-cosine taps, `span * sps + 1` long and centred.
pub fn rrc_taps(sps: usize, rolloff: f64, span: usize) -> Result<Vec<f64>> {
    if sps < 2 {
        return Err(Error::Config(format!("samples per symbol must be >= 2, got {sps}")));
    }
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::Config(format!("rolloff {rolloff} outside [0, 1]")));
    }
    let len = span * sps + 1;
    let mid = (len - 1) as f64 / 2.0;
    let b = rolloff;
    let taps: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i as f64 - mid) / sps as f64;
            if t.abs() < 1e-12 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && ((4.0 * b * t).abs() - 1.0).abs() < 1e-12 {
                let a = PI / (4.0 * b);
                b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos())
            } else {
                let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
                let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
                num / den
            }
        })
        .collect();
    let norm = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    Ok(taps.into_iter().map(|h| h / norm).collect())
}

/// Upsamples `symbols` by `sps` and filters with an RRC pulse.
///
/// The output is aligned on the filter centre and truncated to
/// `symbols.len() * sps` samples, so sample `k * sps` carries symbol `k`.
pub fn pulse_shape<T: Scalar>(
    symbols: &[Complex<T>],
    sps: usize,
    rolloff: f64,
) -> Result<Vec<Complex<T>>> {
    let taps: Vec<T> = rrc_taps(sps, rolloff, RRC_SPAN_SYMBOLS)?
        .into_iter()
        .map(T::of)
        .collect();
    let delay = (taps.len() - 1) / 2;
    let n_out = symbols.len() * sps;
    let mut out = vec![Complex::new(T::zero(), T::zero()); n_out];
    for (k, s) in symbols.iter().enumerate() {
        let pos = k * sps;
        // Tap m lands at output index pos + m - delay.
        for (m, h) in taps.iter().enumerate() {
            let Some(idx) = (pos + m).checked_sub(delay) else {
                continue;
            };
            if idx >= n_out {
                break;
            }
            out[idx] += *s * *h;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form RRC evaluated independently of `rrc_taps`, unnormalized.
    fn rrc_reference(t: f64, beta: f64) -> f64 {
        if t == 0.0 {
            return 1.0 - beta + 4.0 * beta / PI;
        }
        let x = PI * t;
        ((x * (1.0 - beta)).sin() + 4.0 * beta * t * (x * (1.0 + beta)).cos())
            / (x * (1.0 - 16.0 * beta * beta * t * t))
    }

    #[test]
    fn taps_match_closed_form() {
        let sps = 8;
        let taps = rrc_taps(sps, 0.35, RRC_SPAN_SYMBOLS).unwrap();
        assert_eq!(taps.len(), 65);
        let raw: Vec<f64> = (0..65)
            .map(|i| rrc_reference((i as f64 - 32.0) / sps as f64, 0.35))
            .collect();
        let e = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (h, r) in taps.iter().zip(&raw) {
            assert!((h - r / e).abs() < 1e-12);
        }
        let energy: f64 = taps.iter().map(|h| h * h).sum();
        assert!((energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_points_are_finite() {
        // beta = 0.25, sps = 4 puts a tap exactly at t = 1 / (4 beta).
        let taps = rrc_taps(4, 0.25, RRC_SPAN_SYMBOLS).unwrap();
        assert!(taps.iter().all(|h| h.is_finite()));
        let i = 32 / 2 + 4;
        let left = taps[i - 1];
        let right = taps[i + 1];
        assert!((taps[i] - (left + right) / 2.0).abs() < 0.05);
    }

    #[test]
    fn single_symbol_peaks_at_centre_tap() {
        let out = pulse_shape::<f64>(&[Complex::new(1.0, 0.0)], 8, 0.35).unwrap();
        assert_eq!(out.len(), 8);
        let taps = rrc_taps(8, 0.35, RRC_SPAN_SYMBOLS).unwrap();
        let peak = taps.iter().cloned().fold(f64::MIN, f64::max);
        assert!((out[0].re - peak).abs() < 1e-12);
        assert!(out.iter().all(|z| z.re <= peak + 1e-12));
    }

    #[test]
    fn constant_stream_reaches_dc_gain() {
        let sps = 8;
        let syms = vec![Complex::new(1.0, 0.0); 40];
        let out = pulse_shape::<f64>(&syms, sps, 0.35).unwrap();
        let taps = rrc_taps(sps, 0.35, RRC_SPAN_SYMBOLS).unwrap();
        let dc: f64 = taps.iter().sum();
        // In steady state every symbol period averages to (sum of taps) / sps.
        let mid = 20 * sps;
        let avg: f64 = out[mid..mid + sps].iter().map(|z| z.re).sum::<f64>() / sps as f64;
        assert!((avg - dc / sps as f64).abs() < 1e-12);
    }

    #[test]
    fn sps_below_two_is_rejected() {
        assert!(matches!(
            pulse_shape::<f64>(&[Complex::new(1.0, 0.0)], 1, 0.35),
            Err(Error::Config(_))
        ));
    }
}
