use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant draw over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSegment {
    pub start: f64,
    pub end: f64,
    pub watts: f64,
}

/// Average system power over `[0, window]`: the per-instance energy of
/// piecewise-constant draw, summed over instances and divided by the window.
///
/// Each instance's segments must tile `[0, window]` exactly.
pub fn integrate_power(series: &[Vec<PowerSegment>], window: f64) -> Result<f64> {
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::Integration(format!("window must be > 0, got {window}")));
    }
    let mut energy = 0.0;
    for (i, segs) in series.iter().enumerate() {
        let mut cursor = 0.0;
        for s in segs {
            if s.start != cursor {
                return Err(Error::Integration(format!(
                    "instance {i}: coverage gap or overlap at t={cursor} (next segment starts at {})",
                    s.start
                )));
            }
            if s.end < s.start {
                return Err(Error::Integration(format!("instance {i}: segment ends before it starts at t={}", s.start)));
            }
            energy += s.watts * (s.end - s.start);
            cursor = s.end;
        }
        if cursor != window {
            return Err(Error::Integration(format!(
                "instance {i}: samples cover [0, {cursor}] but the window is [0, {window}]"
            )));
        }
    }
    Ok(energy / window)
}
