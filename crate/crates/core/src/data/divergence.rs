use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default L-infinity tolerance for uniformity diagnostics.
pub const DEFAULT_KAPPA: f64 = 0.05;

/// Class-label probabilities plus the tolerance used by [`Self::is_uniform`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
    pub kappa: f64,
}

impl LabelDistribution {
    pub fn uniform(classes: usize) -> Self {
        Self {
            probs: vec![1.0 / classes as f64; classes],
            kappa: DEFAULT_KAPPA,
        }
    }

    /// Normalizes raw counts. All-zero counts are an empty-input error.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("label distribution of no samples".into()));
        }
        Ok(Self {
            probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            kappa: DEFAULT_KAPPA,
        })
    }

    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let s: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("not a probability vector (sum {s})")));
        }
        Ok(Self {
            probs,
            kappa: DEFAULT_KAPPA,
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Whether every probability is within `kappa` of `1/C`.
    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.probs.len() as f64;
        self.probs.iter().all(|p| (p - u).abs() <= self.kappa)
    }
}

fn check_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Length(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

fn kl_raw(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut d = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::DivergenceUndefined { index: i });
            }
            d += pi * (pi / qi).ln();
        }
    }
    Ok(d.max(0.0))
}

/// `D_KL(p || q)` in nats.
pub fn kl_divergence(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    check_len(&p.probs, &q.probs)?;
    kl_raw(&p.probs, &q.probs)
}

/// Jensen-Shannon divergence in nats, in `[0, ln 2]`.
pub fn js_divergence(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    check_len(&p.probs, &q.probs)?;
    Ok(js_raw(&p.probs, &q.probs))
}

/// JS over raw slices; both must have equal length.
pub(crate) fn js_raw(p: &[f64], q: &[f64]) -> f64 {
    // Summing both halves term by term keeps the result exactly symmetric.
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            d += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            d += 0.5 * b * (b / m).ln();
        }
    }
    d.clamp(0.0, std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> LabelDistribution {
        LabelDistribution::from_probs(v.to_vec()).unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn kl_hand_values() {
        assert_eq!(kl_divergence(&d(&[0.3, 0.7]), &d(&[0.3, 0.7])).unwrap(), 0.0);
        let v = kl_divergence(&d(&[1.0, 0.0]), &d(&[0.5, 0.5])).unwrap();
        assert!((v - 0.693147).abs() < 1e-6);
        // 0.5 ln 2 + 0.5 ln(2/3)
        let v = kl_divergence(&d(&[0.5, 0.5]), &d(&[0.25, 0.75])).unwrap();
        let want = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert!((v - want).abs() < 1e-15);
        assert!((v - (0.346574 - 0.202733)).abs() < 1e-6);
    }

    #[test]
    fn kl_undefined_support() {
        assert!(matches!(
            kl_divergence(&d(&[0.5, 0.5]), &d(&[1.0, 0.0])),
            Err(Error::DivergenceUndefined { index: 1 })
        ));
    }

    #[test]
    fn js_hand_values() {
        assert_eq!(js_divergence(&d(&[0.2, 0.8]), &d(&[0.2, 0.8])).unwrap(), 0.0);
        let v = js_divergence(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        // M = [0.375, 0.625]
        let m = [0.375f64, 0.625];
        let want = 0.5 * (0.5 * (0.5 / m[0]).ln() + 0.5 * (0.5 / m[1]).ln())
            + 0.5 * (0.25 * (0.25 / m[0]).ln() + 0.75 * (0.75 / m[1]).ln());
        let v = js_divergence(&d(&[0.5, 0.5]), &d(&[0.25, 0.75])).unwrap();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.033824).abs() < 1e-5, "{v}");
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            js_divergence(&d(&[1.0]), &d(&[0.5, 0.5])),
            Err(Error::Length(_))
        ));
    }

    #[test]
    fn counts_and_uniformity() {
        let l = LabelDistribution::from_counts(&[2, 2, 2, 2]).unwrap();
        assert!(l.is_uniform());
        let l = LabelDistribution::from_counts(&[0, 0, 0, 5]).unwrap();
        assert_eq!(l.probs, vec![0.0, 0.0, 0.0, 1.0]);
        assert!(!l.is_uniform());
        assert!(LabelDistribution::from_counts(&[0, 0]).is_err());
    }
}
