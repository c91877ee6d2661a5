use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::scalar::Scalar;

fn check_homogeneous<T: Scalar>(first: &ModelParams<T>, other: &ModelParams<T>) -> Result<()> {
    if first.layers.len() != other.layers.len() {
        return Err(Error::Aggregation {
            layer: first.layers.len().min(other.layers.len()),
            reason: format!(
                "models have {} and {} parameter layers",
                first.layers.len(),
                other.layers.len()
            ),
        });
    }
    for (l, (a, b)) in first.layers.iter().zip(&other.layers).enumerate() {
        if a.weight.shape() != b.weight.shape() || a.bias.shape() != b.bias.shape() {
            return Err(Error::Aggregation {
                layer: l,
                reason: format!(
                    "shapes {:?}/{:?} vs {:?}/{:?}",
                    a.weight.shape(),
                    a.bias.shape(),
                    b.weight.shape(),
                    b.bias.shape()
                ),
            });
        }
    }
    Ok(())
}

/// Weighted mean `sum_i q_i w_i` with `q` normalized to sum to one.
///
/// Also used for gradient aggregation.
pub fn aggregate_fedavg<T: Scalar>(params: &[&ModelParams<T>], weights: &[f64]) -> Result<ModelParams<T>> {
    let first = *params
        .first()
        .ok_or_else(|| Error::Empty("no models to aggregate".into()))?;
    if params.len() != weights.len() {
        return Err(Error::Length(format!(
            "{} models but {} weights",
            params.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Config("aggregation weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("aggregation weights sum to zero".into()));
    }
    for p in &params[1..] {
        check_homogeneous(first, p)?;
    }
    if params.len() == 1 {
        return Ok(first.clone());
    }
    let mut out = first.zeros_like();
    for (p, w) in params.iter().zip(weights) {
        out.axpy(T::of(w / total), p);
    }
    Ok(out)
}

/// Cluster blend `mean_i[(1 - rho_i) W_prev + rho_i w_i]` with
/// `rho_i = delta_i / sum(delta)`. Members with `delta = 0` were skipped and
/// take no part; if every member was skipped, `prev` is returned.
pub fn aggregate_fedvaccine<T: Scalar>(
    prev: &ModelParams<T>,
    members: &[(&ModelParams<T>, usize)],
) -> Result<ModelParams<T>> {
    let active: Vec<(&ModelParams<T>, usize)> =
        members.iter().copied().filter(|(_, d)| *d > 0).collect();
    let total: usize = active.iter().map(|(_, d)| d).sum();
    if total == 0 {
        return Ok(prev.clone());
    }
    for (p, _) in &active {
        check_homogeneous(prev, p)?;
    }
    let n = active.len() as f64;
    let total = total as f64;
    let mut out = prev.zeros_like();
    let mut tensors: Vec<_> = out.tensors_mut().collect();
    for (ti, (t, w_prev)) in tensors.iter_mut().zip(prev.tensors()).enumerate() {
        let dst = t.data_mut();
        for (p, d) in &active {
            let rho = *d as f64 / total;
            let a = T::of((1.0 - rho) / n);
            let b = T::of(rho / n);
            let w = p.tensors().nth(ti).expect("homogeneous").data();
            for ((o, wp), wi) in dst.iter_mut().zip(w_prev.data()).zip(w) {
                *o += a * *wp + b * *wi;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerParams, Tensor};

    fn scalar(v: f64) -> ModelParams<f64> {
        ModelParams {
            layers: vec![LayerParams {
                weight: Tensor::from_vec(&[1], vec![v]).unwrap(),
                bias: Tensor::from_vec(&[1], vec![-v]).unwrap(),
            }],
        }
    }

    fn w(p: &ModelParams<f64>) -> f64 {
        p.layers[0].weight.data()[0]
    }

    #[test]
    fn fedavg_examples() {
        let a = scalar(2.5);
        assert_eq!(aggregate_fedavg(&[&a], &[3.0]).unwrap(), a);
        let z = aggregate_fedavg(&[&scalar(1.5), &scalar(-1.5)], &[1.0, 1.0]).unwrap();
        assert_eq!(w(&z), 0.0);
        let m = aggregate_fedavg(&[&scalar(1.0), &scalar(2.0), &scalar(4.0)], &[2.0, 3.0, 5.0]).unwrap();
        assert!((w(&m) - (0.2 + 0.6 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn fedvaccine_examples() {
        let prev = scalar(0.0);
        let one = aggregate_fedvaccine(&prev, &[(&scalar(7.0), 10)]).unwrap();
        assert_eq!(w(&one), 7.0);
        let two = aggregate_fedvaccine(&prev, &[(&scalar(1.0), 5), (&scalar(3.0), 5)]).unwrap();
        assert!((w(&two) - 1.0).abs() < 1e-15);
        let p = scalar(0.3);
        let fixed = aggregate_fedvaccine(&p, &[(&p, 2), (&p, 9)]).unwrap();
        assert!((w(&fixed) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn all_skipped_returns_prev() {
        let prev = scalar(1.25);
        let out = aggregate_fedvaccine(&prev, &[(&scalar(9.0), 0)]).unwrap();
        assert_eq!(out, prev);
    }

    #[test]
    fn mismatch_names_layer() {
        let a = scalar(1.0);
        let mut b = scalar(1.0);
        b.layers[0].bias = Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            aggregate_fedavg(&[&a, &b], &[1.0, 1.0]),
            Err(Error::Aggregation { layer: 0, .. })
        ));
        assert!(matches!(
            aggregate_fedvaccine(&a, &[(&b, 1)]),
            Err(Error::Aggregation { layer: 0, .. })
        ));
    }
}
