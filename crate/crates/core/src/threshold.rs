//! Per-step confidence thresholds and the unmask selection rule.

use crate::config::ThresholdMode;
use crate::error::{Error, Result};
use crate::state::Position;

/// Reference means below this are treated as "no entropy left to decay".
const MEAN_START_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub mode: ThresholdMode,
    pub tau_fixed: f64,
    pub tau_init: f64,
}

impl ThresholdPolicy {
    pub fn new(mode: ThresholdMode, tau_fixed: f64, tau_init: f64) -> Result<Self> {
        for tau in [tau_fixed, tau_init] {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::config(format!("threshold {tau} outside (0, 1]")));
            }
        }
        Ok(Self { mode, tau_fixed, tau_init })
    }

    /// Threshold for one step of a block with difficulty `lambda`.
    pub fn tau(&self, lambda: f64, mean_now: f64, mean_start: f64) -> f64 {
        match self.mode {
            ThresholdMode::Fixed => self.tau_fixed,
            ThresholdMode::Dynamic => dynamic_tau(self.tau_init, lambda, mean_now, mean_start),
        }
    }
}

/// `tau_init * ((1 - lambda) + lambda * sqrt(mean_now / mean_start))`, with the
/// ratio clamped to `[0, 1]` so the threshold never rises above `tau_init`.
pub fn dynamic_tau(tau_init: f64, lambda: f64, mean_now: f64, mean_start: f64) -> f64 {
    let lambda = lambda.clamp(0.0, 1.0);
    let ratio = if mean_start < MEAN_START_FLOOR { 1.0 } else { (mean_now / mean_start).clamp(0.0, 1.0) };
    tau_init * ((1.0 - lambda) + lambda * ratio.sqrt())
}

/// Positions whose confidence reaches `tau`; if none does, the single most
/// confident position (lowest position on ties). Result is ascending.
pub fn select_unmask(confidences: &[(Position, f64)], tau: f64) -> Result<Vec<Position>> {
    if confidences.is_empty() {
        return Err(Error::contract("no candidate positions to unmask"));
    }
    let mut chosen: Vec<Position> = confidences.iter().filter(|(_, c)| *c >= tau).map(|(p, _)| *p).collect();
    if chosen.is_empty() {
        chosen.push(most_confident(confidences)?);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// The single most confident position, lowest position on ties.
pub fn most_confident(confidences: &[(Position, f64)]) -> Result<Position> {
    confidences
        .iter()
        .copied()
        .filter(|(_, c)| !c.is_nan())
        .reduce(|best, cur| if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) { cur } else { best })
        .map(|(p, _)| p)
        .ok_or_else(|| Error::contract("no candidate positions to unmask"))
}
