use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(lr)
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

/// Optimizer hyperparameters plus Adam's first/second moments, which mirror
/// the parameter shapes.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Option<ModelParams<T>>,
    pub v: Option<ModelParams<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step: 0,
            m: None,
            v: None,
        }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> Result<()> {
        params.check_compatible(grads)?;
        let lr = T::of(self.config.lr);
        self.step += 1;
        match self.config.kind {
            OptimizerKind::Sgd => params.axpy(-lr, grads),
            OptimizerKind::Adam => {
                let m = self.m.get_or_insert_with(|| params.zeros_like());
                let v = self.v.get_or_insert_with(|| params.zeros_like());
                let (b1, b2) = (self.config.beta1, self.config.beta2);
                let t = self.step as i32;
                let c1 = T::of(1.0 / (1.0 - b1.powi(t)));
                let c2 = T::of(1.0 / (1.0 - b2.powi(t)));
                let (b1, b2, eps) = (T::of(b1), T::of(b2), T::of(self.config.eps));
                let one = T::one();
                let tensors = params
                    .tensors_mut()
                    .zip(grads.tensors())
                    .zip(m.tensors_mut().zip(v.tensors_mut()));
                for ((p, g), (mt, vt)) in tensors {
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(mt.data_mut().iter_mut().zip(vt.data_mut().iter_mut()));
                    for ((w, g), (mi, vi)) in it {
                        *mi = b1 * *mi + (one - b1) * *g;
                        *vi = b2 * *vi + (one - b2) * *g * *g;
                        let mh = *mi * c1;
                        let vh = *vi * c2;
                        *w -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Plain gradient step `w <- w - lr * g`.
pub fn sgd_step<T: Scalar>(params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64) -> Result<()> {
    OptimizerState::new(OptimizerConfig::sgd(lr)).step(params, grads)
}

pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut OptimizerState<T>,
) -> Result<()> {
    state.step(params, grads)
}
