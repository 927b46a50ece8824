//! The model contract the decoder drives.

use std::collections::HashMap;

use crate::dist::{PositionDistribution, MASS_TOLERANCE};
use crate::error::{BackendError, Result};
use crate::state::{Position, SequenceState, Vocab};

/// Source of predictive distributions for masked positions.
///
/// Implementations must be deterministic: the same state and query always
/// yield the same distributions. The decoder issues one call at a time per
/// session.
pub trait ModelBackend {
    fn vocab(&self) -> Vocab;

    /// One distribution per entry of `positions`, each of which is masked in
    /// `state`. The whole sequence is visible to the model; only the queried
    /// positions are restricted.
    fn distributions(
        &mut self,
        state: &SequenceState,
        positions: &[Position],
    ) -> std::result::Result<Vec<PositionDistribution>, BackendError>;

    /// Whether independent sessions may call into the same instance
    /// concurrently.
    fn allows_concurrent_calls(&self) -> bool {
        false
    }
}

impl<B: ModelBackend + ?Sized> ModelBackend for Box<B> {
    fn vocab(&self) -> Vocab {
        (**self).vocab()
    }

    fn distributions(
        &mut self,
        state: &SequenceState,
        positions: &[Position],
    ) -> std::result::Result<Vec<PositionDistribution>, BackendError> {
        (**self).distributions(state, positions)
    }

    fn allows_concurrent_calls(&self) -> bool {
        (**self).allows_concurrent_calls()
    }
}

/// Queries `backend` and enforces its contract, returning distributions in
/// the order of `positions`.
pub fn query_checked<B: ModelBackend + ?Sized>(
    backend: &mut B,
    state: &SequenceState,
    positions: &[Position],
) -> Result<Vec<PositionDistribution>> {
    let vocab_size = backend.vocab().size() as usize;
    let raw = backend.distributions(state, positions)?;
    if raw.len() != positions.len() {
        return Err(BackendError::new(format!("asked for {} distributions, got {}", positions.len(), raw.len())).into());
    }
    let mut by_pos: HashMap<Position, PositionDistribution> = HashMap::with_capacity(raw.len());
    for d in raw {
        let p = d.position();
        if d.probs().len() != vocab_size {
            return Err(BackendError::at(
                p,
                format!("distribution has {} entries, vocab is {vocab_size}", d.probs().len()),
            )
            .into());
        }
        let mass: f64 = d.probs().iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE || d.probs().iter().any(|x| x.is_nan() || *x < 0.0) {
            return Err(BackendError::at(p, format!("invalid distribution (mass {mass})")).into());
        }
        if by_pos.insert(p, d).is_some() {
            return Err(BackendError::at(p, "duplicate distribution").into());
        }
    }
    positions
        .iter()
        .map(|p| by_pos.remove(p).ok_or_else(|| BackendError::at(*p, "no distribution returned").into()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    /// Returns canned rows regardless of the query.
    struct Canned(Vec<(Position, Vec<f64>)>);

    impl ModelBackend for Canned {
        fn vocab(&self) -> Vocab {
            Vocab::new(3, 0).unwrap()
        }

        fn distributions(
            &mut self,
            _state: &SequenceState,
            _positions: &[Position],
        ) -> std::result::Result<Vec<PositionDistribution>, BackendError> {
            Ok(self.0.iter().map(|(p, probs)| PositionDistribution::new(*p, probs.clone()).unwrap()).collect())
        }
    }

    fn state() -> SequenceState {
        SequenceState::new(Vocab::new(3, 0).unwrap(), &[1], 2).unwrap()
    }

    #[test]
    fn reorders_to_query_order() {
        let mut b = Canned(vec![(2, vec![0.0, 0.0, 1.0]), (1, vec![0.0, 1.0, 0.0])]);
        let d = query_checked(&mut b, &state(), &[1, 2]).unwrap();
        assert_eq!(d[0].position(), 1);
        assert_eq!(d[1].position(), 2);
    }

    #[test]
    fn missing_position_is_a_backend_fault() {
        let mut b = Canned(vec![(1, vec![0.0, 1.0, 0.0]), (1, vec![0.0, 1.0, 0.0])]);
        match query_checked(&mut b, &state(), &[1, 2]) {
            Err(Error::Backend(e)) => assert_eq!(e.position, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
        let mut b = Canned(vec![(1, vec![0.0, 1.0, 0.0])]);
        assert!(matches!(query_checked(&mut b, &state(), &[1, 2]), Err(Error::Backend(_))));
    }

    #[test]
    fn wrong_width_is_a_backend_fault() {
        let mut b = Canned(vec![(1, vec![0.5, 0.5])]);
        match query_checked(&mut b, &state(), &[1]) {
            Err(Error::Backend(e)) => assert_eq!(e.position, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
