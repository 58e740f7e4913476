//! Full-precision backpropagation and AdamW for hybrid networks.

use crate::error::{Error, Result};
use crate::matrix::{self, FloatMatrix};
use crate::network::Activation;

/// Derivative of `kind` evaluated at pre-activation `v`.
fn activation_derivative(kind: Activation, v: f64) -> f64 {
    match kind {
        Activation::Relu => {
            if v > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Identity => 1.0,
    }
}

/// Backward pass through one full-precision layer.
///
/// Returns `grad_W = Xᵀ·δ / B` and, when `below` describes the layer that
/// produced `input` (its activation and pre-activation), the delta for that
/// layer `σ'(v_prev) ⊙ (δ·Wᵀ)`. With `below = None` the derivative factor is
/// omitted.
pub fn fp_backward(
    delta_out: &FloatMatrix,
    input: &FloatMatrix,
    w: &FloatMatrix,
    below: Option<(Activation, &FloatMatrix)>,
) -> Result<(FloatMatrix, FloatMatrix)> {
    if w.rows() != input.cols() || w.cols() != delta_out.cols() {
        return Err(Error::validation(format!(
            "weights {}x{} do not match input width {} and delta width {}",
            w.rows(),
            w.cols(),
            input.cols(),
            delta_out.cols()
        )));
    }
    let batch = input.rows().max(1) as f64;
    let mut grad = matrix::transpose_matmul(input, delta_out)?;
    grad.as_mut_slice().iter_mut().for_each(|g| *g /= batch);

    let mut delta_in = matrix::matmul_transposed(delta_out, w.as_slice(), w.rows(), w.cols())?;
    if let Some((kind, preact)) = below {
        if preact.shape() != delta_in.shape() {
            return Err(Error::validation("pre-activation shape does not match layer input"));
        }
        for (d, &v) in delta_in.as_mut_slice().iter_mut().zip(preact.as_slice()) {
            *d *= activation_derivative(kind, v);
        }
    }
    Ok((grad, delta_in))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 6e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid AdamW hyperparameters {self:?}")))
        }
    }
}

/// First/second moments for one parameter matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamWState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One decoupled-weight-decay Adam step (amsgrad off):
///
/// ```text
/// θ ← θ(1 − lr·wd)
/// m ← β1·m + (1 − β1)·g
/// v ← β2·v + (1 − β2)·g²
/// θ ← θ − lr · (m / (1 − β1^t)) / (sqrt(v / (1 − β2^t)) + eps)
/// ```
pub fn adamw_step(param: &mut [f64], grad: &[f64], state: &mut AdamWState, cfg: &AdamWConfig) -> Result<()> {
    if param.len() != grad.len() || state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::validation("AdamW parameter, gradient and state lengths differ"));
    }
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *p *= 1.0 - cfg.lr * cfg.weight_decay;
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}
