//! Entropy-driven adaptive block partitioning with dynamic-threshold parallel
//! unmasking for masked diffusion language models.

pub mod backend;
pub mod bridge;
pub mod config;
pub mod decoder;
pub mod dist;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod jsonfmt;
pub mod partition;
pub mod state;
pub mod synth;
pub mod threshold;
pub mod trace;

pub use backend::ModelBackend;
pub use config::{CacheMode, DecodeConfig, PartitionMode, ThresholdMode};
pub use decoder::{decode, decode_baseline_full_diffusion, DecodeMetrics, DecodeOutcome, DecodeReport};
pub use dist::PositionDistribution;
pub use error::{BackendError, Error, Result};
pub use state::{Position, SequenceState, TokenId, Vocab};
