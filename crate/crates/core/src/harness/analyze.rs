use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::DecodeConfig;
use crate::decoder::decode_into;
use crate::entropy::{EntropyProfile, ShiftProfile};
use crate::error::Result;
use crate::state::Position;
use crate::synth::{boundary_contrast, full_mask_profile, BoundaryContrast};
use crate::trace::{DecodeTrace, TraceEvent, TraceSink};

use super::experiment::{boundary_scores, Corpus};

/// Keeps every refresh profile alongside the event log.
#[derive(Default)]
pub struct ProfileCapture {
    pub trace: DecodeTrace,
    pub profiles: Vec<(usize, EntropyProfile, ShiftProfile)>,
}

impl TraceSink for ProfileCapture {
    fn event(&mut self, event: TraceEvent) {
        self.trace.event(event);
    }

    fn profile(&mut self, refresh: usize, profile: &EntropyProfile, shifts: &ShiftProfile) {
        self.profiles.push((refresh, profile.clone(), shifts.clone()));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyAnalysis {
    #[serde(with = "crate::config::f64_or_inf")]
    pub tau_min: f64,
    pub refreshes: usize,
    /// Ends of every block but the last.
    pub detected: Vec<Position>,
    /// Planted boundaries (synth only).
    pub planted: Option<Vec<Position>>,
    /// Not applicable for bridge models or corpora without boundary contrast.
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub contrast: Option<BoundaryContrast>,
}

/// Decodes `corpus` under `config`, returning the profile capture and the
/// boundary analysis.
pub fn analyze_entropy(corpus: &Corpus, config: &DecodeConfig) -> Result<(ProfileCapture, EntropyAnalysis)> {
    let mut backend = corpus.source.open()?;
    let mut capture = ProfileCapture::default();
    let outcome = decode_into(&mut backend, &corpus.prompt, config, &mut capture)?;
    let ends: Vec<Position> = outcome.blocks.iter().map(|b| b.end).collect();
    let detected = ends[..ends.len().saturating_sub(1)].to_vec();

    let (planted, recall, precision, contrast) = match corpus.source.spec() {
        Some(spec) => {
            let planted = spec.planted_boundaries_at(corpus.prompt.len());
            let contrast = if planted.is_empty() {
                None
            } else {
                // the contrast is a property of the corpus, measured on its own prompt
                Some(boundary_contrast(spec, &full_mask_profile(spec)?)?)
            };
            let (r, p) = boundary_scores(&planted, &ends);
            let separable = contrast.is_some_and(|c| c.separable);
            (Some(planted), r.filter(|_| separable), p, contrast)
        }
        None => (None, None, None, None),
    };
    let analysis = EntropyAnalysis {
        tau_min: config.tau_min,
        refreshes: capture.profiles.len(),
        detected,
        planted,
        recall,
        precision,
        contrast,
    };
    Ok((capture, analysis))
}

/// Columnar profile: one row per remaining position per refresh.
pub fn write_profile_csv<W: Write>(mut w: W, capture: &ProfileCapture, analysis: &EntropyAnalysis) -> Result<()> {
    writeln!(w, "refresh,position,entropy,shift,planted,detected")?;
    let flag = |hit: bool| if hit { "1" } else { "0" };
    for (refresh, profile, shifts) in &capture.profiles {
        for (&p, &h) in profile.positions().iter().zip(profile.values()) {
            let shift = shifts.get(p).map(crate::jsonfmt::format_g17).unwrap_or_default();
            let planted = analysis.planted.as_ref().map(|b| flag(b.contains(&p))).unwrap_or("");
            // detections from refresh r are the end of block r
            let detected = analysis.detected.get(refresh - 1) == Some(&p);
            writeln!(w, "{refresh},{p},{},{shift},{planted},{}", crate::jsonfmt::format_g17(h), flag(detected))?;
        }
    }
    w.flush()?;
    Ok(())
}
