//! Adam with bias correction and the plateau learning-rate decay rule.

use super::{NeuralError, Parameters};
use serde::{Deserialize, Serialize};

/// Moment estimates and hyperparameters for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(param_len: usize, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            t: 0,
            beta1,
            beta2,
            epsilon,
            learning_rate,
        }
    }

    /// 0.9 / 0.999 / 1e-8 defaults.
    pub fn with_defaults(param_len: usize, learning_rate: f64) -> Self {
        Self::new(param_len, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`, `t <- t + 1`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut Parameters,
    grads: &[f64],
) -> Result<(), NeuralError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "adam_step: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    let theta = params.as_mut_slice();
    for i in 0..grads.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        if !theta[i].is_finite() {
            return Err(NeuralError::NonFiniteUpdate(i));
        }
    }
    Ok(())
}

/// Decide the learning rate for the next epoch from the loss history so far
/// (latest entry is the epoch that just finished).
///
/// The rule replays the whole history: whenever the best loss fails to
/// strictly improve for `patience` consecutive epochs, a decay fires and the
/// stall counter resets (epochs before a decay never count toward the next
/// one). If a decay fires on the latest epoch, the returned rate is
/// `max(current_lr * factor, min_lr)`; otherwise `current_lr` is unchanged.
pub fn plateau_scheduler_step(
    current_lr: f64,
    loss_history: &[f64],
    patience: usize,
    factor: f64,
    min_lr: f64,
) -> f64 {
    assert!(!loss_history.is_empty(), "loss history must be non-empty");
    assert!(patience >= 1);
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut fired_now = false;
    for &loss in loss_history {
        fired_now = false;
        if loss < best {
            best = loss;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= patience {
                fired_now = true;
                stalled = 0;
            }
        }
    }
    if fired_now {
        (current_lr * factor).max(min_lr)
    } else {
        current_lr
    }
}
