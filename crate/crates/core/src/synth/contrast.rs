use serde::{Deserialize, Serialize};

use crate::entropy::{entropy_of, entropy_shifts, EntropyProfile};
use crate::error::{Error, Result};

use super::backend::SynthBackend;
use super::spec::PlantedCorpusSpec;

/// Ratios are reported against this floor when the intra shifts vanish.
pub const CONTRAST_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryContrast {
    /// Mean entropy shift across planted boundaries.
    pub boundary_mean: f64,
    /// Mean absolute entropy shift at every other position.
    pub intra_mean_abs: f64,
    /// `boundary_mean / max(intra_mean_abs, 1e-9)`.
    pub ratio: f64,
    /// Boundaries stand out: positive boundary shift and ratio above 1.
    pub separable: bool,
}

/// Entropy profile of the fully masked corpus at absolute positions
/// (after the spec's prompt).
pub fn full_mask_profile(spec: &PlantedCorpusSpec) -> Result<EntropyProfile> {
    let model = SynthBackend::new(spec.clone())?;
    let offset = spec.prompt.len();
    let n = spec.gen_len();
    let values = (0..n).map(|i| entropy_of(&model.prior_marginal(i))).collect();
    EntropyProfile::from_parts((offset..offset + n).collect(), values)
}

/// Compares shifts at planted boundaries with shifts inside constituents,
/// on a profile of the fully masked corpus.
pub fn boundary_contrast(spec: &PlantedCorpusSpec, profile: &EntropyProfile) -> Result<BoundaryContrast> {
    let boundaries = spec.planted_boundaries();
    if boundaries.is_empty() {
        return Err(Error::contract("spec has no boundaries"));
    }
    let offset = spec.prompt.len();
    let expected: Vec<usize> = (offset..offset + spec.gen_len()).collect();
    if profile.positions() != expected.as_slice() {
        return Err(Error::contract("profile must cover the fully masked generation region"));
    }
    let shifts = entropy_shifts(profile)?;
    let (mut b_sum, mut b_n, mut i_sum, mut i_n) = (0.0, 0usize, 0.0, 0usize);
    for &(p, d) in shifts.pairs() {
        if boundaries.binary_search(&p).is_ok() {
            b_sum += d;
            b_n += 1;
        } else {
            i_sum += d.abs();
            i_n += 1;
        }
    }
    let boundary_mean = b_sum / b_n as f64;
    let intra_mean_abs = if i_n == 0 { 0.0 } else { i_sum / i_n as f64 };
    let ratio = boundary_mean / intra_mean_abs.max(CONTRAST_FLOOR);
    Ok(BoundaryContrast { boundary_mean, intra_mean_abs, ratio, separable: boundary_mean > 0.0 && ratio > 1.0 })
}
