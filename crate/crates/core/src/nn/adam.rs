use super::model::{AdamState, ModelState};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam update of `params` in place, with optional decoupled
/// weight decay.
pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} gradients", params.len()),
            actual: format!("{} gradients", grads.len()),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged(format!("non-finite gradient at parameter {i}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        if weight_decay > 0.0 {
            *p -= lr * weight_decay * *p;
        }
        *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}

/// One Adam step on every encoder and head parameter.
pub fn adam_step(state: &mut ModelState, grads: &[f64], lr: f64, weight_decay: f64) -> Result<()> {
    adam_update(&mut state.params, grads, &mut state.optimizer, lr, weight_decay)
}
