use std::f64::consts::PI;

use num_complex::Complex;

use super::ModulationScheme;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// CPFSK/GFSK modulation index.
pub const FSK_MOD_INDEX: f64 = 0.5;
/// GFSK Gaussian filter bandwidth-time product.
pub const GFSK_BT: f64 = 0.35;
/// GFSK Gaussian filter span in symbols.
const GFSK_SPAN_SYMBOLS: usize = 4;

fn gray_decode(mut g: usize) -> usize {
    let mut shift = 1;
    while (g >> shift) > 0 {
        g ^= g >> shift;
        shift <<= 1;
    }
    g
}

fn bits_to_value(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
}

/// Gray-coded amplitude level for `m` bits: one of `-(M-1), ..., M-1` in steps of 2.
fn pam_level(bits: &[u8]) -> f64 {
    let levels = 1usize << bits.len();
    let k = gray_decode(bits_to_value(bits));
    2.0 * k as f64 - (levels as f64 - 1.0)
}

/// Maps a bit sequence onto unit-average-energy constellation points.
///
/// For the frequency-shift schemes the result is the frequency-symbol sequence
/// (`+1` for bit 0, `-1` for bit 1) as real-valued complex numbers.
pub fn map_symbols<T: Scalar>(bits: &[u8], scheme: ModulationScheme) -> Result<Vec<Complex<T>>> {
    let bps = scheme.bits_per_symbol();
    if !bits.len().is_multiple_of(bps) {
        return Err(Error::Length(format!(
            "{} bits is not a multiple of {bps} bits per {scheme} symbol",
            bits.len()
        )));
    }
    let point = |chunk: &[u8]| -> Complex<f64> {
        match scheme {
            ModulationScheme::Bpsk | ModulationScheme::Cpfsk | ModulationScheme::Gfsk => {
                Complex::new(1.0 - 2.0 * (chunk[0] & 1) as f64, 0.0)
            }
            ModulationScheme::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Complex::new(
                    s * (1.0 - 2.0 * (chunk[0] & 1) as f64),
                    s * (1.0 - 2.0 * (chunk[1] & 1) as f64),
                )
            }
            ModulationScheme::Psk8 => {
                let k = gray_decode(bits_to_value(chunk));
                Complex::from_polar(1.0, 2.0 * PI * k as f64 / 8.0)
            }
            ModulationScheme::Pam4 => Complex::new(pam_level(chunk) / 5f64.sqrt(), 0.0),
            ModulationScheme::Qam16 => {
                Complex::new(pam_level(&chunk[..2]), pam_level(&chunk[2..])) / 10f64.sqrt()
            }
            ModulationScheme::Qam64 => {
                Complex::new(pam_level(&chunk[..3]), pam_level(&chunk[3..])) / 42f64.sqrt()
            }
        }
    };
    Ok(bits
        .chunks(bps)
        .map(|c| {
            let p = point(c);
            Complex::new(T::of(p.re), T::of(p.im))
        })
        .collect())
}

fn gaussian_taps(sps: usize) -> Vec<f64> {
    let len = GFSK_SPAN_SYMBOLS * sps + 1;
    let mid = (len - 1) as f64 / 2.0;
    let ln2 = std::f64::consts::LN_2;
    let taps: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i as f64 - mid) / sps as f64;
            (-2.0 * PI * PI * GFSK_BT * GFSK_BT * t * t / ln2).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|h| h / sum).collect()
}

/// Continuous-phase modulation of `±1` frequency symbols.
///
/// CPFSK holds each symbol for `sps` samples; GFSK first smooths the held
/// sequence with a unit-gain Gaussian filter. The per-sample phase step is
/// `pi * h * f[n] / sps` with `|f[n]| <= 1`, so consecutive samples never
/// rotate by more than `pi * h / sps`.
pub fn modulate_fsk<T: Scalar>(
    freq_symbols: &[Complex<T>],
    scheme: ModulationScheme,
    sps: usize,
) -> Result<Vec<Complex<T>>> {
    if scheme.is_linear() {
        return Err(Error::Config(format!("{scheme} is not a frequency-shift scheme")));
    }
    if sps < 2 {
        return Err(Error::Config(format!("samples per symbol must be >= 2, got {sps}")));
    }
    let held: Vec<f64> = freq_symbols
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.re.as_f64(), sps))
        .collect();
    let freq = if scheme == ModulationScheme::Gfsk {
        let g = gaussian_taps(sps);
        let delay = (g.len() - 1) / 2;
        (0..held.len())
            .map(|n| {
                g.iter()
                    .enumerate()
                    .filter_map(|(m, h)| {
                        (n + delay).checked_sub(m).and_then(|idx| held.get(idx)).map(|x| h * x)
                    })
                    .sum()
            })
            .collect()
    } else {
        held
    };
    let step = PI * FSK_MOD_INDEX / sps as f64;
    let mut phase = 0.0;
    Ok(freq
        .iter()
        .map(|f| {
            let z = Complex::from_polar(1.0, phase);
            phase += step * f;
            Complex::new(T::of(z.re), T::of(z.im))
        })
        .collect())
}
