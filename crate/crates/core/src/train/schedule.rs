//! Linear-warmup, cosine-decay learning-rate schedule.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Learning rate at `step` of a `total_steps`-step run with `warmup` linear
/// warmup steps and peak `lr_peak`.
///
/// For `step < warmup` the rate climbs linearly from 0 to `lr_peak`; from
/// `warmup` onward it follows a half cosine down to exactly 0 at
/// `total_steps`. Both branches give `lr_peak` at `step == warmup`, so the
/// schedule is continuous. `warmup == 0` starts directly at the peak.
pub fn lr_at(step: usize, total_steps: usize, warmup: usize, lr_peak: f64) -> Result<f64> {
    if !lr_peak.is_finite() || lr_peak < 0.0 {
        return Err(Error::Config(format!(
            "lr_peak must be finite and >= 0, got {lr_peak}"
        )));
    }
    if total_steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if warmup >= total_steps {
        return Err(Error::Config(format!(
            "warmup ({warmup}) must be shorter than the run ({total_steps} steps)"
        )));
    }
    if step > total_steps {
        return Err(Error::Config(format!(
            "step {step} is past the end of the schedule ({total_steps})"
        )));
    }
    if step < warmup {
        return Ok(lr_peak * step as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
    Ok(lr_peak * 0.5 * (1.0 + (PI * progress).cos()))
}
