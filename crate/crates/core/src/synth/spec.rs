use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonfmt;
use crate::state::{Position, TokenId, Vocab};

pub const MAX_GEN_LEN: usize = 2048;
pub const MAX_BRANCHES: usize = 64;

/// One alternative surface form of a constituent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Realization {
    pub tokens: Vec<TokenId>,
    /// Relative weight in integer units; probabilities are `weight / total`.
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constituent {
    pub realizations: Vec<Realization>,
}

impl Constituent {
    pub fn branch_count(&self) -> usize {
        self.realizations.len()
    }

    pub fn len(&self) -> usize {
        self.realizations[0].tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_weight(&self) -> u64 {
        self.realizations.iter().map(|r| r.weight).sum()
    }

    /// The unique heaviest realization, if there is one.
    pub fn most_likely(&self) -> Option<&Realization> {
        let max = self.realizations.iter().map(|r| r.weight).max()?;
        let mut top = self.realizations.iter().filter(|r| r.weight == max);
        let first = top.next();
        if top.next().is_some() {
            None
        } else {
            first
        }
    }
}

fn default_prompt() -> Vec<TokenId> {
    vec![1]
}

/// A generative corpus of independent constituents laid end to end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedCorpusSpec {
    pub vocab_size: u32,
    #[serde(default)]
    pub mask_id: TokenId,
    #[serde(default = "default_prompt")]
    pub prompt: Vec<TokenId>,
    /// Seed the spec was generated from; inference never uses it.
    #[serde(default)]
    pub seed: u64,
    pub constituents: Vec<Constituent>,
}

impl PlantedCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let vocab = self.vocab()?;
        if self.prompt.is_empty() {
            return Err(Error::config("spec prompt must not be empty"));
        }
        if let Some(t) = self.prompt.iter().find(|t| !vocab.is_content(**t)) {
            return Err(Error::config(format!("spec prompt token {t} is not a content token")));
        }
        if self.constituents.is_empty() {
            return Err(Error::config("spec has no constituents"));
        }
        for (k, c) in self.constituents.iter().enumerate() {
            let bad = |msg: String| Err(Error::config(format!("constituent {k}: {msg}")));
            let b = c.realizations.len();
            if b == 0 || b > MAX_BRANCHES {
                return bad(format!("branch count {b} outside 1..={MAX_BRANCHES}"));
            }
            let len = c.realizations[0].tokens.len();
            if len == 0 {
                return bad("empty realization".into());
            }
            for (i, r) in c.realizations.iter().enumerate() {
                if r.tokens.len() != len {
                    return bad(format!("realization {i} has length {}, expected {len}", r.tokens.len()));
                }
                if r.weight == 0 {
                    return bad(format!("realization {i} has zero weight"));
                }
                if let Some(t) = r.tokens.iter().find(|t| !vocab.is_content(**t)) {
                    return bad(format!("realization {i} uses non-content token {t}"));
                }
                if c.realizations[..i].iter().any(|o| o.tokens == r.tokens) {
                    return bad(format!("realization {i} duplicates an earlier one"));
                }
            }
            if c.total_weight() > 1 << 40 {
                return bad("total weight too large for exact marginals".into());
            }
        }
        let l = self.gen_len();
        if l > MAX_GEN_LEN {
            return Err(Error::config(format!("corpus length {l} exceeds {MAX_GEN_LEN}")));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::new(self.vocab_size, self.mask_id)
    }

    /// Total generation length `Σ ℓ`.
    pub fn gen_len(&self) -> usize {
        self.constituents.iter().map(Constituent::len).sum()
    }

    /// Offset of each constituent's first position within the generation region.
    pub fn offsets(&self) -> Vec<usize> {
        self.constituents
            .iter()
            .scan(0, |acc, c| {
                let start = *acc;
                *acc += c.len();
                Some(start)
            })
            .collect()
    }

    /// Last position of every constituent except the final one, shifted by
    /// `offset` (usually the prompt length).
    pub fn planted_boundaries_at(&self, offset: Position) -> Vec<Position> {
        let mut out = Vec::with_capacity(self.constituents.len().saturating_sub(1));
        let mut end = offset;
        for c in &self.constituents[..self.constituents.len().saturating_sub(1)] {
            end += c.len();
            out.push(end - 1);
        }
        out
    }

    /// Planted boundaries as absolute sequence positions after the prompt.
    pub fn planted_boundaries(&self) -> Vec<Position> {
        self.planted_boundaries_at(self.prompt.len())
    }

    /// Generated tokens of the unique maximum-likelihood completion; `None`
    /// when some constituent has tied heaviest realizations.
    pub fn ml_completion(&self) -> Option<Vec<TokenId>> {
        let mut out = Vec::with_capacity(self.gen_len());
        for c in &self.constituents {
            out.extend_from_slice(&c.most_likely()?.tokens);
        }
        Some(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        jsonfmt::to_string_pretty(self).expect("spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}
