//! Shannon entropy of predictive distributions and the shift profile along
//! the still-masked region.
//!
//! All entropies are in nats. Probabilities at or below [`PROB_FLOOR`] are
//! treated as exact zeros (`0 ln 0 = 0`).

use crate::dist::PositionDistribution;
use crate::error::{Error, Result};
use crate::state::Position;

pub const PROB_FLOOR: f64 = 1e-12;

/// `-Σ p ln p` over one distribution.
pub fn shannon_entropy(dist: &PositionDistribution) -> f64 {
    entropy_of(dist.probs())
}

/// Entropy of a raw probability vector; see [`shannon_entropy`].
///
/// Terms are summed with Neumaier compensation in ascending order of
/// magnitude, so the result does not depend on which token ids carry the
/// mass (equal multisets of probabilities give bit-identical entropies) and
/// a uniform distribution over a power of two lands exactly on `ln n`.
pub fn entropy_of(probs: &[f64]) -> f64 {
    let mut terms: Vec<f64> = probs.iter().filter(|&&p| p > PROB_FLOOR).map(|&p| -p * p.ln()).collect();
    terms.sort_unstable_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in terms {
        let next = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - next) + t } else { (t - next) + sum };
        sum = next;
    }
    (sum + comp).max(0.0)
}

/// Entropies of a set of masked positions, in ascending position order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntropyProfile {
    positions: Vec<Position>,
    values: Vec<f64>,
}

impl EntropyProfile {
    /// Builds a profile from parallel vectors; positions must be strictly
    /// ascending.
    pub fn from_parts(positions: Vec<Position>, values: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::contract("profile positions and values differ in length"));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("profile positions must be strictly ascending"));
        }
        Ok(Self { positions, values })
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Entropy at `position`, if profiled.
    pub fn get(&self, position: Position) -> Option<f64> {
        self.positions.binary_search(&position).ok().map(|i| self.values[i])
    }

    pub fn mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            None
        } else {
            Some(self.values.iter().sum::<f64>() / self.values.len() as f64)
        }
    }
}

/// Forward differences between consecutive profiled positions: the entry for
/// position `i` is the entropy at the next profiled position minus that at `i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShiftProfile {
    pairs: Vec<(Position, f64)>,
}

impl ShiftProfile {
    pub fn pairs(&self) -> &[(Position, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, position: Position) -> Option<f64> {
        self.pairs.binary_search_by_key(&position, |(p, _)| *p).ok().map(|i| self.pairs[i].1)
    }
}

pub fn entropy_profile(dists: &[PositionDistribution]) -> Result<EntropyProfile> {
    let positions: Vec<Position> = dists.iter().map(|d| d.position()).collect();
    if positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract("distributions must be sorted by position without duplicates"));
    }
    let values = dists.iter().map(shannon_entropy).collect();
    Ok(EntropyProfile { positions, values })
}

pub fn entropy_shifts(profile: &EntropyProfile) -> Result<ShiftProfile> {
    if profile.is_empty() {
        return Err(Error::contract("cannot take shifts of an empty profile"));
    }
    let pairs = profile.positions.iter().zip(profile.values.windows(2)).map(|(&p, w)| (p, w[1] - w[0])).collect();
    Ok(ShiftProfile { pairs })
}

/// Mean entropy over `block_positions`, each of which must be profiled.
pub fn block_mean_entropy<I>(profile: &EntropyProfile, block_positions: I) -> Result<f64>
where
    I: IntoIterator<Item = Position>,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in block_positions {
        let h = profile.get(p).ok_or_else(|| Error::contract(format!("block position {p} is not profiled")))?;
        sum += h;
        n += 1;
    }
    if n == 0 {
        return Err(Error::contract("block is empty"));
    }
    Ok(sum / n as f64)
}
