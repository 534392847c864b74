//! Bias-corrected Adam over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 5000,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// Applies one Adam update to `params` in place.
pub fn adam_step_in_place<T: Scalar>(
    params: &mut [T],
    grad: &[T],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::shape(format!(
            "adam: params {}, grad {}, state {}/{}",
            params.len(),
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.t += 1;
    let one = T::one();
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.epsilon));
    let t = state.t as i32;
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (one - b1) * g;
        state.v[i] = b2 * state.v[i] + (one - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Functional form of [`adam_step_in_place`].
pub fn adam_step<T: Scalar>(
    params: &[T],
    grad: &[T],
    state: &AdamState<T>,
    cfg: &AdamConfig,
) -> Result<(Vec<T>, AdamState<T>)> {
    let mut p = params.to_vec();
    let mut s = state.clone();
    adam_step_in_place(&mut p, grad, &mut s, cfg)?;
    Ok((p, s))
}
