//! Choosing where the next block ends.
//!
//! Adaptive partitioning cuts the remaining region at its largest entropy
//! shift; once no shift reaches `tau_min` the whole remainder becomes the
//! final block. Fixed partitioning is the constant-length baseline.

use serde::{Deserialize, Serialize};

use crate::entropy::{block_mean_entropy, EntropyProfile, ShiftProfile};
use crate::error::{Error, Result};
use crate::state::Position;

/// A contiguous decode region with its difficulty calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// 1-based block counter.
    pub index: usize,
    pub start: Position,
    /// Inclusive.
    pub end: Position,
    /// Mean entropy over the block when it was created.
    pub initial_mean_entropy: f64,
    /// Difficulty coefficient in `[0, 1]`; 0 for the hardest block so far.
    pub lambda: f64,
    /// Reference mean for the in-block threshold schedule.
    pub initial_step_mean: f64,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: Position) -> bool {
        (self.start..=self.end).contains(&p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionState {
    pub next_start: Position,
    /// Largest block mean entropy seen so far; non-decreasing.
    pub running_max_entropy: f64,
    pub terminated: bool,
}

impl PartitionState {
    pub fn new(start: Position) -> Self {
        Self { next_start: start, running_max_entropy: 0.0, terminated: false }
    }
}

/// Right edge chosen for the current block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub end: Position,
    pub terminated: bool,
    /// Largest shift in the remainder; `None` when there was no shift to take.
    pub max_shift: Option<f64>,
}

/// Cuts at the largest shift (lowest position on ties) if it reaches
/// `tau_min`, otherwise merges the whole remainder into one final block.
pub fn adaptive_boundary(
    profile: &EntropyProfile,
    shifts: &ShiftProfile,
    tau_min: f64,
    last_position: Position,
) -> Result<Boundary> {
    match profile.positions().last() {
        None => return Err(Error::contract("adaptive boundary needs a non-empty profile")),
        Some(&last) if last != last_position => {
            return Err(Error::contract(format!("profile ends at {last}, remainder ends at {last_position}")))
        }
        Some(_) => {}
    }
    if shifts.len() + 1 != profile.len() {
        return Err(Error::contract("shift profile does not match entropy profile"));
    }

    let mut best: Option<(Position, f64)> = None;
    for &(p, d) in shifts.pairs() {
        if d.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if d <= b => {}
            _ => best = Some((p, d)),
        }
    }

    Ok(match best {
        Some((p, d)) if d >= tau_min => Boundary { end: p, terminated: false, max_shift: Some(d) },
        other => Boundary { end: last_position, terminated: true, max_shift: other.map(|(_, d)| d) },
    })
}

pub fn fixed_boundary(next_start: Position, block_size: usize, last_position: Position) -> Position {
    debug_assert!(block_size >= 1 && next_start <= last_position);
    (next_start + block_size.max(1) - 1).min(last_position)
}

/// Calibrates block `k` covering `start..=end` against the blocks before it.
pub fn make_block(
    k: usize,
    start: Position,
    end: Position,
    profile: &EntropyProfile,
    state: &PartitionState,
) -> Result<(Block, PartitionState)> {
    if end < start {
        return Err(Error::contract(format!("empty block {start}..={end}")));
    }
    let inside = profile.positions().iter().copied().filter(|p| (start..=end).contains(p));
    let mean = block_mean_entropy(profile, inside)?;
    let running_max = state.running_max_entropy.max(mean);
    let lambda = if running_max > 0.0 { (1.0 - mean / running_max).clamp(0.0, 1.0) } else { 0.0 };
    let block = Block { index: k, start, end, initial_mean_entropy: mean, lambda, initial_step_mean: mean };
    let next = PartitionState { next_start: end + 1, running_max_entropy: running_max, terminated: state.terminated };
    Ok((block, next))
}
