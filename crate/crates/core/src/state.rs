//! Token sequences under progressive unmasking.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;
pub type Position = usize;

/// Vocabulary shape: token ids are `0..size`, one of which is the mask sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    size: u32,
    mask_id: TokenId,
}

impl Vocab {
    pub fn new(size: u32, mask_id: TokenId) -> Result<Self> {
        if size < 2 {
            return Err(Error::config(format!("vocab size must be >= 2, got {size}")));
        }
        if mask_id >= size {
            return Err(Error::config(format!("mask id {mask_id} outside vocab of size {size}")));
        }
        Ok(Self { size, mask_id })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    /// True for ids that may appear as decoded content.
    pub fn is_content(&self, token: TokenId) -> bool {
        token < self.size && token != self.mask_id
    }
}

/// A prompt followed by a generation region, some of which is still masked.
///
/// `masked` always equals the set of positions holding `mask_id`, and the
/// prompt is never masked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceState {
    vocab: Vocab,
    prompt_len: usize,
    tokens: Vec<TokenId>,
    masked: BTreeSet<Position>,
}

impl SequenceState {
    /// Prompt followed by `gen_len` mask tokens.
    pub fn new(vocab: Vocab, prompt: &[TokenId], gen_len: usize) -> Result<Self> {
        if let Some(&bad) = prompt.iter().find(|&&t| !vocab.is_content(t)) {
            return Err(Error::config(format!("prompt token {bad} is out of vocab or is the mask id")));
        }
        let prompt_len = prompt.len();
        let mut tokens = prompt.to_vec();
        tokens.resize(prompt_len + gen_len, vocab.mask_id());
        let masked = (prompt_len..prompt_len + gen_len).collect();
        Ok(Self { vocab, prompt_len, tokens, masked })
    }

    /// Rebuilds a state from a raw token array, deriving the masked set.
    pub fn from_tokens(vocab: Vocab, prompt_len: usize, tokens: Vec<TokenId>) -> Result<Self> {
        if prompt_len > tokens.len() {
            return Err(Error::contract("prompt longer than sequence"));
        }
        let mut masked = BTreeSet::new();
        for (p, &t) in tokens.iter().enumerate() {
            if t >= vocab.size() {
                return Err(Error::contract(format!("token {t} at {p} out of vocab")));
            }
            if t == vocab.mask_id() {
                if p < prompt_len {
                    return Err(Error::contract(format!("prompt position {p} is masked")));
                }
                masked.insert(p);
            }
        }
        Ok(Self { vocab, prompt_len, tokens, masked })
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    pub fn gen_len(&self) -> usize {
        self.tokens.len() - self.prompt_len
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.prompt_len..]
    }

    pub fn masked(&self) -> &BTreeSet<Position> {
        &self.masked
    }

    pub fn is_masked(&self, p: Position) -> bool {
        self.masked.contains(&p)
    }

    /// Masked positions inside `range`, ascending.
    pub fn masked_in(&self, range: RangeInclusive<Position>) -> Vec<Position> {
        self.masked.range(range).copied().collect()
    }

    /// Number of generated positions already decoded.
    pub fn decoded_len(&self) -> usize {
        self.gen_len() - self.masked.len()
    }

    /// Successor state with every `fills` entry written and removed from the
    /// masked set.
    pub fn apply_unmask(&self, fills: &BTreeMap<Position, TokenId>) -> Result<SequenceState> {
        for (&p, &t) in fills {
            if !self.masked.contains(&p) {
                return Err(Error::contract(format!("position {p} is not masked")));
            }
            if !self.vocab.is_content(t) {
                return Err(Error::contract(format!("fill token {t} at {p} is out of vocab or is the mask id")));
            }
        }
        let mut next = self.clone();
        for (&p, &t) in fills {
            next.tokens[p] = t;
            next.masked.remove(&p);
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::new(32, 0).unwrap()
    }

    fn state_masked_5_to_7() -> SequenceState {
        SequenceState::new(vocab(), &[3, 4, 5, 6, 7], 3).unwrap()
    }

    #[test]
    fn vocab_rejects_degenerate_shapes() {
        assert!(Vocab::new(1, 0).is_err());
        assert!(Vocab::new(4, 4).is_err());
        assert!(Vocab::new(2, 1).is_ok());
    }

    #[test]
    fn new_state_masks_generation_region() {
        let s = state_masked_5_to_7();
        assert_eq!(s.masked().iter().copied().collect::<Vec<_>>(), vec![5, 6, 7]);
        assert_eq!(s.gen_len(), 3);
        assert_eq!(s.decoded_len(), 0);
        assert!(s.tokens()[5..].iter().all(|&t| t == 0));
    }

    #[test]
    fn prompt_with_mask_token_is_rejected() {
        assert!(SequenceState::new(vocab(), &[1, 0], 2).is_err());
        assert!(SequenceState::new(vocab(), &[1, 40], 2).is_err());
    }

    #[test]
    fn unmask_single_position() {
        let s = state_masked_5_to_7();
        let next = s.apply_unmask(&BTreeMap::from([(5, 12)])).unwrap();
        assert_eq!(next.tokens()[5], 12);
        assert_eq!(next.masked().iter().copied().collect::<Vec<_>>(), vec![6, 7]);
        assert_eq!(next.decoded_len(), 1);
    }

    #[test]
    fn empty_fills_leave_state_unchanged() {
        let s = state_masked_5_to_7();
        assert_eq!(s.apply_unmask(&BTreeMap::new()).unwrap(), s);
    }

    #[test]
    fn filling_an_unmasked_position_fails() {
        let s = SequenceState::new(vocab(), &[3, 4, 5, 6, 7], 1).unwrap();
        let err = s.apply_unmask(&BTreeMap::from([(5, 12), (6, 9)]));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn filling_with_mask_or_out_of_range_token_fails() {
        let s = state_masked_5_to_7();
        assert!(s.apply_unmask(&BTreeMap::from([(5, 0)])).is_err());
        assert!(s.apply_unmask(&BTreeMap::from([(5, 32)])).is_err());
    }

    #[test]
    fn from_tokens_derives_mask_set() {
        let s = SequenceState::from_tokens(vocab(), 2, vec![1, 2, 0, 5, 0]).unwrap();
        assert_eq!(s.masked().iter().copied().collect::<Vec<_>>(), vec![2, 4]);
        assert!(SequenceState::from_tokens(vocab(), 2, vec![0, 2, 0]).is_err());
    }
}
