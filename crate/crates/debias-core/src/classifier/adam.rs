//! Adam optimizer with decoupled weight decay for the softmax head.

use alloc::vec;
use alloc::vec::Vec;

use super::{ClassifierModel, ParamGradients, TrainConfig};
use crate::math;

/// First/second-moment accumulators and step counter, shaped like the model
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_weights: [Vec<f64>; 2],
    pub v_weights: [Vec<f64>; 2],
    pub m_bias: [f64; 2],
    pub v_bias: [f64; 2],
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn zeroed(dimension: usize) -> Self {
        Self {
            m_weights: [vec![0.0; dimension], vec![0.0; dimension]],
            v_weights: [vec![0.0; dimension], vec![0.0; dimension]],
            m_bias: [0.0, 0.0],
            v_bias: [0.0, 0.0],
            t: 0,
        }
    }
}

/// One Adam step with decoupled weight decay, in place.
///
/// Update rule (per parameter θ with gradient g):
/// `t ← t+1`; `m ← β1·m + (1−β1)·g`; `v ← β2·v + (1−β2)·g²`;
/// `m̂ = m/(1−β1^t)`; `v̂ = v/(1−β2^t)`; `θ ← θ − η·m̂/(√v̂ + ε)`.
/// Afterwards decay is applied decoupled from the moments — `θ ← θ − η·λ·θ`
/// — to the weights only; bias terms are never decayed.
pub fn adam_step(
    model: &mut ClassifierModel,
    grads: &ParamGradients,
    state: &mut AdamState,
    config: &TrainConfig,
) {
    state.t += 1;
    let beta1 = config.adam_beta1;
    let beta2 = config.adam_beta2;
    let bias_correction1 = 1.0 - math::powi(beta1, state.t);
    let bias_correction2 = 1.0 - math::powi(beta2, state.t);
    let lr = config.learning_rate;
    let eps = config.adam_eps;

    let update = |theta: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bias_correction1;
        let v_hat = *v / bias_correction2;
        *theta -= lr * m_hat / (math::sqrt(v_hat) + eps);
    };

    for c in 0..2 {
        for i in 0..model.weights[c].len() {
            update(
                &mut model.weights[c][i],
                grads.weights[c][i],
                &mut state.m_weights[c][i],
                &mut state.v_weights[c][i],
            );
        }
        update(
            &mut model.bias[c],
            grads.bias[c],
            &mut state.m_bias[c],
            &mut state.v_bias[c],
        );
    }

    // Decoupled decay: weights only, bias untouched.
    let decay = 1.0 - lr * config.weight_decay;
    if config.weight_decay != 0.0 {
        for row in model.weights.iter_mut() {
            for w in row.iter_mut() {
                *w *= decay;
            }
        }
    }
}
