use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Deterministic cost counters for one decode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecodeMetrics {
    pub forward_passes: u64,
    /// Positions processed across all forward passes, per the cache mode.
    pub token_compute: u64,
    pub steps: u64,
    pub blocks: u64,
    /// `gen_len / steps`, or 0 when nothing was generated.
    pub tokens_per_step: f64,
    /// Block length -> number of blocks with that length; serialized as
    /// ascending `[length, count]` pairs.
    #[serde(with = "histogram_pairs")]
    pub block_sizes: BTreeMap<usize, u64>,
}

impl DecodeMetrics {
    pub(crate) fn finish(&mut self, gen_len: usize) {
        self.tokens_per_step = if self.steps == 0 { 0.0 } else { gen_len as f64 / self.steps as f64 };
    }

    pub fn covered_len(&self) -> usize {
        self.block_sizes.iter().map(|(size, n)| size * *n as usize).sum()
    }
}

mod histogram_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(h: &BTreeMap<usize, u64>, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<(usize, u64)> = h.iter().map(|(k, v)| (*k, *v)).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, u64>, D::Error> {
        Ok(Vec::<(usize, u64)>::deserialize(d)?.into_iter().collect())
    }
}
