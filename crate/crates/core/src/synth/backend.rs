use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use crate::backend::ModelBackend;
use crate::dist::PositionDistribution;
use crate::error::{BackendError, Result};
use crate::state::{Position, SequenceState, TokenId, Vocab};

use super::spec::PlantedCorpusSpec;

/// Per constituent, indices of the realizations consistent with the decoded
/// tokens of a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibleSet {
    pub per_constituent: Vec<Vec<usize>>,
}

/// Exact-posterior backend over a planted corpus.
#[derive(Debug, Clone)]
pub struct SynthBackend {
    spec: Arc<PlantedCorpusSpec>,
    vocab: Vocab,
    /// Generation offset -> (constituent, offset within it).
    owner: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

impl SynthBackend {
    pub fn new(spec: PlantedCorpusSpec) -> Result<Self> {
        Self::from_shared(Arc::new(spec))
    }

    pub fn from_shared(spec: Arc<PlantedCorpusSpec>) -> Result<Self> {
        spec.validate()?;
        let vocab = spec.vocab()?;
        let mut owner = Vec::with_capacity(spec.gen_len());
        for (k, c) in spec.constituents.iter().enumerate() {
            owner.extend((0..c.len()).map(|j| (k, j)));
        }
        let offsets = spec.offsets();
        Ok(Self { spec, vocab, owner, offsets })
    }

    pub fn spec(&self) -> &PlantedCorpusSpec {
        &self.spec
    }

    fn check_state(&self, state: &SequenceState) -> std::result::Result<(), BackendError> {
        if state.vocab() != self.vocab {
            return Err(BackendError::new(format!(
                "state vocab {:?} differs from corpus vocab {:?}",
                state.vocab(),
                self.vocab
            )));
        }
        if state.gen_len() != self.owner.len() {
            return Err(BackendError::new(format!(
                "state generates {} positions, corpus has {}",
                state.gen_len(),
                self.owner.len()
            )));
        }
        Ok(())
    }

    /// Realizations of constituent `k` that agree with every decoded token.
    fn compatible(&self, k: usize, state: &SequenceState) -> std::result::Result<Vec<usize>, BackendError> {
        let c = &self.spec.constituents[k];
        let base = state.prompt_len() + self.offsets[k];
        let tokens = &state.tokens()[base..base + c.len()];
        let mask = self.vocab.mask_id();
        let ids: Vec<usize> = (0..c.branch_count())
            .filter(|&i| {
                let r = &c.realizations[i].tokens;
                tokens.iter().zip(r).all(|(&t, &rt)| t == mask || t == rt)
            })
            .collect();
        if ids.is_empty() {
            return Err(BackendError::at(
                base,
                format!("unreachable state: constituent {k} has no compatible realization"),
            ));
        }
        Ok(ids)
    }

    pub fn compatible_set(&self, state: &SequenceState) -> std::result::Result<CompatibleSet, BackendError> {
        self.check_state(state)?;
        let per_constituent = (0..self.spec.constituents.len())
            .map(|k| self.compatible(k, state))
            .collect::<std::result::Result<_, _>>()?;
        Ok(CompatibleSet { per_constituent })
    }

    /// Exact marginal at offset `j` of constituent `k` given its compatible
    /// realizations.
    fn marginal(&self, k: usize, j: usize, compatible: &[usize]) -> Vec<f64> {
        let c = &self.spec.constituents[k];
        let mut mass: Vec<(TokenId, u64)> = Vec::new();
        let mut total = 0u64;
        for &i in compatible {
            let r = &c.realizations[i];
            let t = r.tokens[j];
            total += r.weight;
            match mass.iter_mut().find(|(tok, _)| *tok == t) {
                Some(entry) => entry.1 += r.weight,
                None => mass.push((t, r.weight)),
            }
        }
        let mut probs = vec![0.0; self.vocab.size() as usize];
        for (t, w) in mass {
            probs[t as usize] = w as f64 / total as f64;
        }
        probs
    }

    /// Marginal at generation offset `offset` for the fully masked corpus.
    pub fn prior_marginal(&self, offset: usize) -> Vec<f64> {
        let (k, j) = self.owner[offset];
        let all: Vec<usize> = (0..self.spec.constituents[k].branch_count()).collect();
        self.marginal(k, j, &all)
    }
}

impl ModelBackend for SynthBackend {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn distributions(
        &mut self,
        state: &SequenceState,
        positions: &[Position],
    ) -> std::result::Result<Vec<PositionDistribution>, BackendError> {
        synth_distributions(self, state, positions)
    }

    fn allows_concurrent_calls(&self) -> bool {
        true
    }
}

/// Exact marginals at each queried masked position; constituents are
/// independent, so only the queried constituents are examined.
pub fn synth_distributions(
    model: &SynthBackend,
    state: &SequenceState,
    positions: &[Position],
) -> std::result::Result<Vec<PositionDistribution>, BackendError> {
    model.check_state(state)?;
    let prompt_len = state.prompt_len();
    let mut compat: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut out = Vec::with_capacity(positions.len());
    for &p in positions {
        if p < prompt_len || p >= state.len() {
            return Err(BackendError::at(p, "position outside the generation region"));
        }
        if !state.is_masked(p) {
            return Err(BackendError::at(p, "position is not masked"));
        }
        let (k, j) = model.owner[p - prompt_len];
        let ids = match compat.entry(k) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(model.compatible(k, state)?),
        };
        let probs = model.marginal(k, j, ids);
        out.push(PositionDistribution::new(p, probs).map_err(|e| BackendError::at(p, e.to_string()))?);
    }
    Ok(out)
}
