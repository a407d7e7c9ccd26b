//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 5e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub t: usize,
}

impl AdamState {
    pub fn new(shapes: &[[usize; 4]]) -> AdamState {
        AdamState {
            m: shapes.iter().map(|&s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }
}

/// One Adam update over a parallel list of parameters and gradients.
/// `t` is the 1-based step used for bias correction; moments update in
/// place. The moment arithmetic runs in the parameter precision.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    m: &mut [Tensor<T>],
    v: &mut [Tensor<T>],
    t: usize,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(NnError::BadConfig("adam step index is 1-based".into()));
    }
    if params.len() != grads.len() || params.len() != m.len() || params.len() != v.len() {
        return Err(NnError::ShapeMismatch("adam buffers out of sync".into()));
    }
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one_m_b1 = T::from_f64(1.0 - cfg.beta1);
    let one_m_b2 = T::from_f64(1.0 - cfg.beta2);
    let corr1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let corr2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);

    for i in 0..params.len() {
        if params[i].shape() != grads[i].shape() {
            return Err(NnError::ShapeMismatch(format!(
                "param {:?} vs grad {:?}",
                params[i].shape(),
                grads[i].shape()
            )));
        }
        let p = params[i].data_mut();
        let g = grads[i].data();
        let mi = m[i].data_mut();
        let vi = v[i].data_mut();
        for j in 0..p.len() {
            mi[j] = b1 * mi[j] + one_m_b1 * g[j];
            vi[j] = b2 * vi[j] + one_m_b2 * g[j] * g[j];
            let m_hat = mi[j] / corr1;
            let v_hat = vi[j] / corr2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
