//! Planted-constituent model with exactly computable posteriors.
//!
//! A corpus is a sequence of independent constituents, each a weighted table
//! of alternative token sequences. The marginal at a masked position is the
//! weight share of each token among the realizations still consistent with
//! what has been decoded in that constituent.

mod backend;
mod contrast;
mod generate;
mod spec;

pub use backend::{synth_distributions, CompatibleSet, SynthBackend};
pub use contrast::{boundary_contrast, full_mask_profile, BoundaryContrast, CONTRAST_FLOOR};
pub use generate::{generate_spec, CorpusStyle, GenerateParams, MAX_STANDARD_BRANCHES};
pub use spec::{Constituent, PlantedCorpusSpec, Realization, MAX_BRANCHES, MAX_GEN_LEN};
