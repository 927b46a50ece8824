//! Predictive distributions at masked positions.

use crate::error::{Error, Result};
use crate::state::{Position, TokenId};

/// Allowed deviation of a distribution's total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-5;

/// Full probability vector over the vocabulary at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDistribution {
    position: Position,
    probs: Vec<f64>,
}

impl PositionDistribution {
    pub fn new(position: Position, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::contract(format!("empty distribution at {position}")));
        }
        let mut total = 0.0;
        for (v, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::contract(format!("probability {p} for token {v} at position {position}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::contract(format!("distribution at {position} sums to {total}")));
        }
        Ok(Self { position, probs })
    }

    /// Widens single-precision probabilities.
    pub fn from_f32(position: Position, probs: &[f32]) -> Result<Self> {
        Self::new(position, probs.iter().map(|&p| f64::from(p)).collect())
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest probability in the vector.
    pub fn confidence(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Lowest token id attaining the largest probability.
    pub fn argmax_token(&self) -> TokenId {
        let mut best = 0;
        for (v, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = v;
            }
        }
        best as TokenId
    }
}
