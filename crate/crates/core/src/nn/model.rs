use rand::Rng;

use super::arch::{Architecture, LayerSpec, Padding};
use super::loss::cross_entropy;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{gemm, Op, Scalar};

/// Weight and bias of one parameterized layer.
///
/// Conv weights are `[out, in, kh, kw]`; dense weights are `[inputs, outputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Every trainable tensor of a network, indexed by parameterized layer. This
/// is the unit exchanged between clients and server; gradients and optimizer
/// moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros_for(arch: &Architecture) -> Self {
        Self {
            layers: arch
                .param_shapes()
                .iter()
                .map(|(w, b)| LayerParams {
                    weight: Tensor::zeros(w),
                    bias: Tensor::zeros(b),
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: Tensor::zeros(l.weight.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(|t| t.len()).sum()
    }

    /// Error naming the first layer whose shapes differ.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Dimension(format!(
                "{} parameter layers vs {}",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (i, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if a.weight.shape() != b.weight.shape() || a.bias.shape() != b.bias.shape() {
                return Err(Error::Dimension(format!("parameter layer {i} shapes differ")));
            }
        }
        Ok(())
    }

    /// Flat copy of all parameters in layer order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += alpha * *y;
            }
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= alpha);
        }
    }

    /// Squared L2 distance to `other`.
    pub fn dist_sq(&self, other: &Self) -> f64 {
        self.tensors()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()))
            .map(|(x, y)| {
                let d = x.as_f64() - y.as_f64();
                d * d
            })
            .sum()
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |t: &Tensor<T>| {
            Tensor::from_vec(t.shape(), t.data().iter().map(|v| U::of(v.as_f64())).collect())
                .expect("same shape")
        };
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: conv(&l.weight),
                    bias: conv(&l.bias),
                })
                .collect(),
        }
    }
}

/// Fan-in scaled uniform (He) initialization with zero biases.
pub fn init_model<T: Scalar>(arch: &Architecture, seed: u64) -> Result<ModelParams<T>> {
    arch.validate()?;
    let mut rng = rng::stream(seed, &[rng::domain::INIT]);
    let mut params = ModelParams::zeros_for(arch);
    for layer in &mut params.layers {
        let shape = layer.weight.shape();
        let fan_in = if shape.len() == 4 {
            shape[1] * shape[2] * shape[3]
        } else {
            shape[0]
        };
        let limit = (6.0 / fan_in as f64).sqrt();
        for w in layer.weight.data_mut() {
            *w = T::of(rng.random_range(-limit..limit));
        }
    }
    Ok(params)
}

/// Values cached by a training-mode forward pass for the matching backward.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    batch: usize,
    /// Input to each layer, flattened per sample.
    inputs: Vec<Vec<T>>,
    /// im2col buffers for conv layers.
    cols: Vec<Option<Vec<T>>>,
    /// Scaled keep-masks for dropout layers in training mode.
    masks: Vec<Option<Vec<T>>>,
}

impl<T> Trace<T> {
    /// Input to layer `index`, flattened over the batch.
    pub fn layer_input(&self, index: usize) -> &[T] {
        &self.inputs[index]
    }
}

struct ConvGeom {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    pad_t: usize,
    pad_l: usize,
}

impl ConvGeom {
    fn new(in_shape: &[usize], cout: usize, kernel: [usize; 2], padding: Padding) -> Self {
        let (cin, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
        let [kh, kw] = kernel;
        let (ho, wo, pad_t, pad_l) = match padding {
            Padding::Same => (h, w, (kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => (h - kh + 1, w - kw + 1, 0, 0),
        };
        Self {
            cin,
            cout,
            h,
            w,
            kh,
            kw,
            ho,
            wo,
            pad_t,
            pad_l,
        }
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    /// `cols[k][n * P + p]` for the whole batch.
    fn im2col<T: Scalar>(&self, x: &[T], n: usize) -> Vec<T> {
        let (k, p) = (self.k(), self.p());
        let np = n * p;
        let in_len = self.cin * self.h * self.w;
        let mut cols = vec![T::zero(); k * np];
        for ci in 0..self.cin {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * np..(row + 1) * np];
                    for s in 0..n {
                        let src = &x[s * in_len + ci * self.h * self.w..];
                        for oh in 0..self.ho {
                            let Some(ih) = (oh + ki).checked_sub(self.pad_t).filter(|&v| v < self.h)
                            else {
                                continue;
                            };
                            let base = s * p + oh * self.wo;
                            for ow in 0..self.wo {
                                if let Some(iw) =
                                    (ow + kj).checked_sub(self.pad_l).filter(|&v| v < self.w)
                                {
                                    dst[base + ow] = src[ih * self.w + iw];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Scalar>(&self, dcols: &[T], n: usize) -> Vec<T> {
        let p = self.p();
        let np = n * p;
        let in_len = self.cin * self.h * self.w;
        let mut dx = vec![T::zero(); n * in_len];
        for ci in 0..self.cin {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &dcols[row * np..(row + 1) * np];
                    for s in 0..n {
                        let dst = &mut dx[s * in_len + ci * self.h * self.w..];
                        for oh in 0..self.ho {
                            let Some(ih) = (oh + ki).checked_sub(self.pad_t).filter(|&v| v < self.h)
                            else {
                                continue;
                            };
                            let base = s * p + oh * self.wo;
                            for ow in 0..self.wo {
                                if let Some(iw) =
                                    (ow + kj).checked_sub(self.pad_l).filter(|&v| v < self.w)
                                {
                                    dst[ih * self.w + iw] += src[base + ow];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

fn check_params<T: Scalar>(arch: &Architecture, params: &ModelParams<T>) -> Result<()> {
    let want = arch.param_shapes();
    if want.len() != params.layers.len() {
        return Err(Error::Dimension(format!(
            "architecture has {} parameter layers, params have {}",
            want.len(),
            params.layers.len()
        )));
    }
    for (i, ((w, b), l)) in want.iter().zip(&params.layers).enumerate() {
        if l.weight.shape() != w.as_slice() || l.bias.shape() != b.as_slice() {
            return Err(Error::Dimension(format!("parameter layer {i} does not match architecture")));
        }
    }
    Ok(())
}

fn check_batch<T: Scalar>(arch: &Architecture, batch: &Tensor<T>) -> Result<usize> {
    let s = batch.shape();
    if s.len() != 4 || s[1..] != arch.input {
        return Err(Error::Dimension(format!(
            "batch shape {s:?} does not match input [N, {}, {}, {}]",
            arch.input[0], arch.input[1], arch.input[2]
        )));
    }
    Ok(s[0])
}

impl Architecture {
    /// Raw logits `N x C`. Dropout is active only when `train` is set.
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &ModelParams<T>,
        batch: &Tensor<T>,
        train: bool,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        self.run_forward(params, batch, train, rng, false).map(|(y, _)| y)
    }

    /// Forward pass that also returns the cache needed by [`Self::backward_trace`].
    pub fn forward_traced<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &ModelParams<T>,
        batch: &Tensor<T>,
        train: bool,
        rng: &mut R,
    ) -> Result<(Tensor<T>, Trace<T>)> {
        self.run_forward(params, batch, train, rng, true)
            .map(|(y, t)| (y, t.expect("trace requested")))
    }

    fn run_forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &ModelParams<T>,
        batch: &Tensor<T>,
        train: bool,
        rng: &mut R,
        keep: bool,
    ) -> Result<(Tensor<T>, Option<Trace<T>>)> {
        let shapes = self.shapes()?;
        check_params(self, params)?;
        let n = check_batch(self, batch)?;
        let mut trace = keep.then(|| Trace {
            batch: n,
            inputs: Vec::with_capacity(self.layers.len()),
            cols: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        });
        let mut x = batch.data().to_vec();
        let mut in_shape = self.input.to_vec();
        let mut pi = 0;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut cols_kept = None;
            let mut mask_kept = None;
            let y = match layer {
                LayerSpec::Conv2D {
                    out_channels,
                    kernel,
                    padding,
                    ..
                } => {
                    let g = ConvGeom::new(&in_shape, *out_channels, *kernel, *padding);
                    let lp = &params.layers[pi];
                    pi += 1;
                    let cols = g.im2col(&x, n);
                    let (k, p) = (g.k(), g.p());
                    let mut tmp = vec![T::zero(); g.cout * n * p];
                    gemm(g.cout, k, n * p, T::one(), lp.weight.data(), Op::N, &cols, Op::N, T::zero(), &mut tmp);
                    let mut y = vec![T::zero(); n * g.cout * p];
                    let bias = lp.bias.data();
                    for s in 0..n {
                        for c in 0..g.cout {
                            let src = &tmp[c * n * p + s * p..c * n * p + (s + 1) * p];
                            let dst = &mut y[(s * g.cout + c) * p..(s * g.cout + c + 1) * p];
                            for (d, v) in dst.iter_mut().zip(src) {
                                *d = *v + bias[c];
                            }
                        }
                    }
                    if keep {
                        cols_kept = Some(cols);
                    }
                    y
                }
                LayerSpec::Dense { inputs, outputs } => {
                    let lp = &params.layers[pi];
                    pi += 1;
                    let mut y = vec![T::zero(); n * outputs];
                    let bias = lp.bias.data();
                    for s in 0..n {
                        y[s * outputs..(s + 1) * outputs].copy_from_slice(bias);
                    }
                    gemm(n, *inputs, *outputs, T::one(), &x, Op::N, lp.weight.data(), Op::N, T::one(), &mut y);
                    y
                }
                LayerSpec::ReLU => x.iter().map(|v| v.max(T::zero())).collect(),
                LayerSpec::Dropout { rate } => {
                    if train && *rate > 0.0 {
                        let keep_scale = T::of(1.0 / (1.0 - rate));
                        let mask: Vec<T> = (0..x.len())
                            .map(|_| {
                                if rng.random::<f64>() < *rate {
                                    T::zero()
                                } else {
                                    keep_scale
                                }
                            })
                            .collect();
                        let y = x.iter().zip(&mask).map(|(a, m)| *a * *m).collect();
                        if keep {
                            mask_kept = Some(mask);
                        }
                        y
                    } else {
                        x.clone()
                    }
                }
                LayerSpec::Flatten | LayerSpec::Softmax => x.clone(),
            };
            if let Some(t) = trace.as_mut() {
                t.inputs.push(std::mem::replace(&mut x, y));
                t.cols.push(cols_kept);
                t.masks.push(mask_kept);
            } else {
                x = y;
            }
            in_shape = shapes[li].clone();
        }
        let classes = in_shape[0];
        Ok((Tensor::from_vec(&[n, classes], x)?, trace))
    }

    /// Backpropagates `dlogits` through a traced forward pass.
    ///
    /// Returns parameter gradients and the gradient with respect to the batch.
    pub fn backward_trace<T: Scalar>(
        &self,
        params: &ModelParams<T>,
        trace: &Trace<T>,
        dlogits: &Tensor<T>,
    ) -> Result<(ModelParams<T>, Tensor<T>)> {
        let shapes = self.shapes()?;
        check_params(self, params)?;
        let n = trace.batch;
        let classes = shapes.last().map(|s| s[0]).unwrap_or(0);
        if dlogits.shape() != [n, classes] {
            return Err(Error::Dimension(format!(
                "dlogits shape {:?}, expected [{n}, {classes}]",
                dlogits.shape()
            )));
        }
        let mut grads = params.zeros_like();
        let mut pi = params.layers.len();
        let mut dy = dlogits.data().to_vec();
        for li in (0..self.layers.len()).rev() {
            let in_shape: Vec<usize> = if li == 0 {
                self.input.to_vec()
            } else {
                shapes[li - 1].clone()
            };
            let x = &trace.inputs[li];
            dy = match &self.layers[li] {
                LayerSpec::Conv2D {
                    out_channels,
                    kernel,
                    padding,
                    ..
                } => {
                    pi -= 1;
                    let g = ConvGeom::new(&in_shape, *out_channels, *kernel, *padding);
                    let (k, p) = (g.k(), g.p());
                    let cols = trace.cols[li].as_ref().expect("conv cols traced");
                    let mut dt = vec![T::zero(); g.cout * n * p];
                    let gb = grads.layers[pi].bias.data_mut();
                    for s in 0..n {
                        for c in 0..g.cout {
                            let src = &dy[(s * g.cout + c) * p..(s * g.cout + c + 1) * p];
                            dt[c * n * p + s * p..c * n * p + (s + 1) * p].copy_from_slice(src);
                            gb[c] += src.iter().copied().sum::<T>();
                        }
                    }
                    gemm(g.cout, n * p, k, T::one(), &dt, Op::N, cols, Op::T, T::zero(), grads.layers[pi].weight.data_mut());
                    let mut dcols = vec![T::zero(); k * n * p];
                    gemm(k, g.cout, n * p, T::one(), params.layers[pi].weight.data(), Op::T, &dt, Op::N, T::zero(), &mut dcols);
                    g.col2im(&dcols, n)
                }
                LayerSpec::Dense { inputs, outputs } => {
                    pi -= 1;
                    let gb = grads.layers[pi].bias.data_mut();
                    for s in 0..n {
                        for (b, d) in gb.iter_mut().zip(&dy[s * outputs..(s + 1) * outputs]) {
                            *b += *d;
                        }
                    }
                    gemm(*inputs, n, *outputs, T::one(), x, Op::T, &dy, Op::N, T::zero(), grads.layers[pi].weight.data_mut());
                    let mut dx = vec![T::zero(); n * inputs];
                    gemm(n, *outputs, *inputs, T::one(), &dy, Op::N, params.layers[pi].weight.data(), Op::T, T::zero(), &mut dx);
                    dx
                }
                LayerSpec::ReLU => dy
                    .iter()
                    .zip(x)
                    .map(|(d, v)| if *v > T::zero() { *d } else { T::zero() })
                    .collect(),
                LayerSpec::Dropout { .. } => match &trace.masks[li] {
                    Some(mask) => dy.iter().zip(mask).map(|(d, m)| *d * *m).collect(),
                    None => dy,
                },
                LayerSpec::Flatten | LayerSpec::Softmax => dy,
            };
        }
        let mut shape = vec![n];
        shape.extend_from_slice(&self.input);
        Ok((grads, Tensor::from_vec(&shape, dy)?))
    }

    /// Training-mode forward, cross-entropy and backward on one mini-batch.
    ///
    /// The dropout masks drawn from `rng` in the forward pass are reused by the
    /// backward pass.
    pub fn backward<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &ModelParams<T>,
        batch: &Tensor<T>,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<(T, ModelParams<T>)> {
        let (logits, trace) = self.forward_traced(params, batch, true, rng)?;
        let (loss, dlogits) = cross_entropy(&logits, labels)?;
        let (grads, _) = self.backward_trace(params, &trace, &dlogits)?;
        Ok((loss, grads))
    }
}
