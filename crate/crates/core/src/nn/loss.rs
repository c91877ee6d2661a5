use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-wise softmax of an `N x C` logit tensor.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let c = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Mean softmax cross-entropy and its gradient `(softmax - onehot) / N`.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::Dimension(format!(
            "logits {s:?} vs {} labels",
            labels.len()
        )));
    }
    let (n, c) = (s[0], s[1]);
    if n == 0 {
        return Err(Error::Empty("cross-entropy over an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Label {
            label: bad,
            classes: c,
        });
    }
    let inv_n = T::one() / T::of_usize(n);
    let mut grad = Tensor::zeros(&[n, c]);
    let mut loss = T::zero();
    for (i, (row, &y)) in logits.data().chunks(c).zip(labels).enumerate() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = row.iter().map(|v| (*v - m).exp()).sum();
        let log_z = z.ln() + m;
        loss += log_z - row[y];
        let g = &mut grad.data_mut()[i * c..(i + 1) * c];
        for (j, (gv, v)) in g.iter_mut().zip(row).enumerate() {
            let p = (*v - log_z).exp();
            *gv = (p - if j == y { T::one() } else { T::zero() }) * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

/// Index of the largest logit in each row (first wins on ties).
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn uniform_logits_give_ln_c() {
        let t = Tensor::<f64>::zeros(&[3, 10]);
        let (loss, _) = cross_entropy(&t, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn two_class_hand_value() {
        let t = Tensor::from_vec(&[1, 2], vec![1.0f64, 0.0]).unwrap();
        let (loss, g) = cross_entropy(&t, &[0]).unwrap();
        let want = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - want).abs() < 1e-12);
        assert!((loss - 0.313262).abs() < 1e-6);
        let p0 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((g.data()[0] - (p0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn confident_true_class_loss_vanishes() {
        let t = Tensor::from_vec(&[1, 3], vec![60.0f64, 0.0, 0.0]).unwrap();
        let (loss, _) = cross_entropy(&t, &[0]).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let data: Vec<f64> = (0..20).map(|i| (i as f64 * 1.3).sin() * 5.0).collect();
        let t = Tensor::from_vec(&[4, 5], data).unwrap();
        let (_, g) = cross_entropy(&t, &[0, 1, 2, 4]).unwrap();
        for r in 0..4 {
            assert!(g.row(r).iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn shifting_a_row_keeps_argmax_and_gradient() {
        let t = Tensor::from_vec(&[1, 3], vec![0.2f64, 1.5, -0.7]).unwrap();
        let s = Tensor::from_vec(&[1, 3], vec![100.2f64, 101.5, 99.3]).unwrap();
        assert_eq!(argmax_rows(&t), argmax_rows(&s));
        let (la, ga) = cross_entropy(&t, &[2]).unwrap();
        let (lb, gb) = cross_entropy(&s, &[2]).unwrap();
        assert!((la - lb).abs() < 1e-9);
        for (a, b) in ga.data().iter().zip(gb.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_label() {
        let t = Tensor::<f64>::zeros(&[1, 3]);
        assert!(matches!(
            cross_entropy(&t, &[3]),
            Err(Error::Label { label: 3, classes: 3 })
        ));
    }
}
