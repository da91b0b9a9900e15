use crate::error::{invalid, Result};

/// One learning-rate cycle: a linear ramp from 0 to `max_lr` over the first
/// 30% of `total_steps`, then a linear decay back towards 0.
pub fn one_cycle_lr(step: usize, total_steps: usize, max_lr: f64) -> Result<f64> {
    if step >= total_steps {
        return Err(invalid(format!("step {step} outside [0, {total_steps})")));
    }
    let t = total_steps as f64;
    let s = step as f64;
    // 0.3 * T and 0.7 * T computed exactly whenever they are integers.
    let peak = (3 * total_steps) as f64 / 10.0;
    let tail = (7 * total_steps) as f64 / 10.0;
    Ok(if s <= peak { max_lr * s / peak } else { max_lr * (t - s) / tail })
}
