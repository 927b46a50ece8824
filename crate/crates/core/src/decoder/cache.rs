//! Token-compute accounting for the three cache configurations.
//!
//! Caching is modeled as cost only: it never changes what the backend sees.
//! Under `prefix` the prompt and finished blocks are cached; `dual` also
//! caches the masked suffix behind the current block, which is refreshed at
//! every block boundary.

use serde::{Deserialize, Serialize};

use crate::config::CacheMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    /// Forward pass over the whole undecoded region before partitioning.
    Refresh,
    /// Forward pass inside the current block.
    BlockStep,
}

/// Sizes of the sequence regions at the time of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardSpans {
    pub prompt_len: usize,
    /// Generated positions in blocks that are already finished.
    pub decoded_len: usize,
    /// Length of the current block (0 for a refresh).
    pub block_span: usize,
    /// Positions after the current block (everything undecoded for a refresh).
    pub remaining_span: usize,
}

impl ForwardSpans {
    pub fn total(&self) -> usize {
        self.prompt_len + self.decoded_len + self.block_span + self.remaining_span
    }
}

/// Positions the model has to process for one forward pass.
pub fn account_forward(cache: CacheMode, spans: ForwardSpans, kind: QueryKind) -> u64 {
    let cost = match (cache, kind) {
        (CacheMode::None, _) => spans.total(),
        (CacheMode::Prefix | CacheMode::Dual, QueryKind::Refresh) => spans.remaining_span,
        (CacheMode::Prefix, QueryKind::BlockStep) => spans.block_span + spans.remaining_span,
        (CacheMode::Dual, QueryKind::BlockStep) => spans.block_span,
    };
    cost as u64
}
