use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::bridge::BridgeBackend;
use crate::config::{CacheMode, DecodeConfig, PartitionMode, ThresholdMode};
use crate::decoder::{decode, decode_baseline_full_diffusion, DecodeReport};
use crate::error::{Error, Result};
use crate::state::{Position, TokenId};
use crate::synth::{PlantedCorpusSpec, SynthBackend};

/// Preset decoding strategies of the comparison matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// One token per step over the whole region, no blocks.
    FullDiffusion,
    /// Fixed 32-token blocks, one token per step.
    BlockwiseSequential,
    /// Fixed 32-token blocks, fixed threshold 0.9.
    BlockwiseParallel,
    /// Entropy-shift blocks with the dynamic threshold.
    AdaptiveDynamic,
    /// Entropy-shift blocks with the fixed threshold.
    AdaptiveFixed,
    /// Whatever the command-line knobs say.
    Custom,
}

impl Arm {
    pub const ALL: [Arm; 6] = [
        Arm::FullDiffusion,
        Arm::BlockwiseSequential,
        Arm::BlockwiseParallel,
        Arm::AdaptiveDynamic,
        Arm::AdaptiveFixed,
        Arm::Custom,
    ];

    /// The default comparison matrix.
    pub const STANDARD: [Arm; 4] =
        [Arm::FullDiffusion, Arm::BlockwiseSequential, Arm::BlockwiseParallel, Arm::AdaptiveDynamic];

    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::FullDiffusion => "full-diffusion",
            Arm::BlockwiseSequential => "blockwise-sequential",
            Arm::BlockwiseParallel => "blockwise-parallel",
            Arm::AdaptiveDynamic => "adaptive-dynamic",
            Arm::AdaptiveFixed => "adaptive-fixed",
            Arm::Custom => "custom",
        }
    }

    /// Applies the preset on top of `base`, keeping its length, cache mode
    /// and seed.
    pub fn config(&self, base: &DecodeConfig) -> DecodeConfig {
        let fixed32 = DecodeConfig {
            partition_mode: PartitionMode::Fixed,
            fixed_block_size: 32.min(base.gen_len.max(1)),
            threshold_mode: ThresholdMode::Fixed,
            tau_fixed: 0.9,
            ..base.clone()
        };
        match self {
            Arm::FullDiffusion => DecodeConfig { parallel: false, ..base.clone() },
            Arm::BlockwiseSequential => DecodeConfig { parallel: false, ..fixed32 },
            Arm::BlockwiseParallel => DecodeConfig { parallel: true, ..fixed32 },
            Arm::AdaptiveDynamic => DecodeConfig {
                partition_mode: PartitionMode::Adaptive,
                tau_min: 0.1,
                threshold_mode: ThresholdMode::Dynamic,
                tau_init: 0.9,
                parallel: true,
                ..base.clone()
            },
            Arm::AdaptiveFixed => DecodeConfig {
                partition_mode: PartitionMode::Adaptive,
                tau_min: 0.1,
                threshold_mode: ThresholdMode::Fixed,
                tau_fixed: 0.9,
                parallel: true,
                ..base.clone()
            },
            Arm::Custom => base.clone(),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| Error::Config(format!("unknown arm '{s}'")))
    }
}

/// Where a cell's model comes from. Every cell opens its own backend.
#[derive(Debug, Clone)]
pub enum ModelSource {
    Synth(Arc<PlantedCorpusSpec>),
    Bridge(BridgeSource),
}

/// A wire-protocol server and the vocabulary it is expected to announce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeSource {
    /// Shell command line that starts the server.
    pub cmdline: String,
    pub vocab_size: Option<u32>,
    pub mask_id: Option<TokenId>,
}

impl ModelSource {
    pub fn open(&self) -> Result<Box<dyn ModelBackend + Send>> {
        Ok(match self {
            ModelSource::Synth(spec) => Box::new(SynthBackend::from_shared(spec.clone())?),
            ModelSource::Bridge(b) => {
                let backend = BridgeBackend::spawn(&b.cmdline)?;
                backend.expect_vocab(b.vocab_size, b.mask_id)?;
                Box::new(backend)
            }
        })
    }

    pub fn spec(&self) -> Option<&PlantedCorpusSpec> {
        match self {
            ModelSource::Synth(s) => Some(s),
            ModelSource::Bridge(_) => None,
        }
    }
}

/// A model plus the prompt to decode after it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    pub source: ModelSource,
    pub prompt: Vec<TokenId>,
}

impl Corpus {
    pub fn synth(name: impl Into<String>, spec: PlantedCorpusSpec) -> Self {
        let prompt = spec.prompt.clone();
        Self { name: name.into(), source: ModelSource::Synth(Arc::new(spec)), prompt }
    }
}

/// One labelled decoding configuration of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmConfig {
    pub label: String,
    pub arm: Arm,
    pub config: DecodeConfig,
}

impl ArmConfig {
    pub fn preset(arm: Arm, base: &DecodeConfig) -> Self {
        Self { label: arm.to_string(), arm, config: arm.config(base) }
    }
}

/// One (configuration × corpus) cell of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub arm: String,
    pub corpus: String,
    pub seed: u64,
    pub partition: PartitionMode,
    pub threshold: ThresholdMode,
    pub cache: CacheMode,
    pub parallel: bool,
    pub block_size: usize,
    #[serde(with = "crate::config::f64_or_inf")]
    pub tau_min: f64,
    pub tau_fixed: f64,
    pub tau_init: f64,
    pub steps: u64,
    pub forward_passes: u64,
    pub token_compute: u64,
    pub tokens_per_step: f64,
    pub blocks: u64,
    /// Output equals the corpus's maximum-likelihood completion (synth only).
    pub exact_match: Option<bool>,
    /// Share of planted boundaries that end a non-final block (synth only).
    pub boundary_recall: Option<f64>,
    /// Share of non-final block ends that are planted boundaries.
    pub boundary_precision: Option<f64>,
}

/// Recall and precision of detected block ends against planted boundaries.
/// The final block's end is the sequence end, not a detection.
pub fn boundary_scores(planted: &[Position], block_ends: &[Position]) -> (Option<f64>, Option<f64>) {
    let detected = &block_ends[..block_ends.len().saturating_sub(1)];
    let hits = detected.iter().filter(|p| planted.contains(p)).count() as f64;
    let recall = (!planted.is_empty()).then(|| hits / planted.len() as f64);
    let precision = (!detected.is_empty()).then(|| hits / detected.len() as f64);
    (recall, precision)
}

/// Decodes one cell and scores it against the corpus ground truth when there
/// is one.
pub fn run_cell(corpus: &Corpus, arm: &ArmConfig) -> Result<(DecodeReport, ExperimentRow)> {
    let mut backend = corpus.source.open()?;
    let report = match arm.arm {
        Arm::FullDiffusion => decode_baseline_full_diffusion(&mut backend, &corpus.prompt, &arm.config)?,
        _ => decode(&mut backend, &corpus.prompt, &arm.config)?,
    };
    let row = make_row(corpus, arm, &report);
    Ok((report, row))
}

fn make_row(corpus: &Corpus, arm: &ArmConfig, report: &DecodeReport) -> ExperimentRow {
    let c = &arm.config;
    let m = &report.outcome.metrics;
    let (exact_match, recall, precision) = match corpus.source.spec() {
        Some(spec) => {
            let exact = spec.ml_completion().map(|ml| ml == report.outcome.generated());
            let ends: Vec<Position> = report.outcome.blocks.iter().map(|b| b.end).collect();
            let planted = spec.planted_boundaries_at(corpus.prompt.len());
            let (r, p) = boundary_scores(&planted, &ends);
            (exact, r, p)
        }
        None => (None, None, None),
    };
    ExperimentRow {
        arm: arm.label.clone(),
        corpus: corpus.name.clone(),
        seed: c.seed,
        partition: c.partition_mode,
        threshold: c.threshold_mode,
        cache: c.cache_mode,
        parallel: c.parallel,
        block_size: c.fixed_block_size,
        tau_min: c.tau_min,
        tau_fixed: c.tau_fixed,
        tau_init: c.tau_init,
        steps: m.steps,
        forward_passes: m.forward_passes,
        token_compute: m.token_compute,
        tokens_per_step: m.tokens_per_step,
        blocks: m.blocks,
        exact_match,
        boundary_recall: recall,
        boundary_precision: precision,
    }
}

/// Runs every (arm × corpus) cell on a pool of `jobs` threads. Rows come back
/// arm-major in input order regardless of scheduling.
pub fn run_matrix(corpora: &[Corpus], arms: &[ArmConfig], jobs: usize) -> Result<Vec<ExperimentRow>> {
    let cells: Vec<(&ArmConfig, &Corpus)> = arms.iter().flat_map(|a| corpora.iter().map(move |c| (a, c))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| cells.par_iter().map(|(arm, corpus)| run_cell(corpus, arm).map(|(_, row)| row)).collect())
}

/// Per-arm aggregate over a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub cells: usize,
    pub total_steps: u64,
    pub mean_steps: f64,
    pub mean_token_compute: f64,
    pub mean_tokens_per_step: f64,
    /// Share of cells whose output is the ML completion, over cells where
    /// that is defined.
    pub exact_match_rate: Option<f64>,
    pub mean_boundary_recall: Option<f64>,
}

pub fn summarize(rows: &[ExperimentRow]) -> Vec<ArmSummary> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.arm.as_str()) {
            labels.push(&r.arm);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&ExperimentRow> = rows.iter().filter(|r| r.arm == label).collect();
            let n = group.len() as f64;
            let total_steps: u64 = group.iter().map(|r| r.steps).sum();
            let mean = |f: &dyn Fn(&ExperimentRow) -> Option<f64>| {
                let vals: Vec<f64> = group.iter().filter_map(|r| f(r)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            ArmSummary {
                arm: label.to_string(),
                cells: group.len(),
                total_steps,
                mean_steps: total_steps as f64 / n,
                mean_token_compute: group.iter().map(|r| r.token_compute as f64).sum::<f64>() / n,
                mean_tokens_per_step: group.iter().map(|r| r.tokens_per_step).sum::<f64>() / n,
                exact_match_rate: mean(&|r| r.exact_match.map(|b| if b { 1.0 } else { 0.0 })),
                mean_boundary_recall: mean(&|r| r.boundary_recall),
            }
        })
        .collect()
}

/// Fixed-width text rendering of the per-arm summary.
pub fn summary_table(summary: &[ArmSummary]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    let width = summary.iter().map(|s| s.arm.len()).max().unwrap_or(3).max(3);
    let mut out = format!(
        "{:<width$}  {:>5}  {:>11}  {:>10}  {:>14}  {:>10}  {:>11}  {:>6}\n",
        "arm", "cells", "total_steps", "mean_steps", "token_compute", "tok/step", "exact_match", "recall"
    );
    for s in summary {
        out.push_str(&format!(
            "{:<width$}  {:>5}  {:>11}  {:>10.2}  {:>14.1}  {:>10.3}  {:>11}  {:>6}\n",
            s.arm,
            s.cells,
            s.total_steps,
            s.mean_steps,
            s.mean_token_compute,
            s.mean_tokens_per_step,
            opt(s.exact_match_rate),
            opt(s.mean_boundary_recall),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_scores_ignore_the_final_block() {
        let (r, p) = boundary_scores(&[3, 6], &[3, 6, 11]);
        assert_eq!((r, p), (Some(1.0), Some(1.0)));
        let (r, p) = boundary_scores(&[3, 6], &[3, 9, 11]);
        assert_eq!((r, p), (Some(0.5), Some(0.5)));
        assert_eq!(boundary_scores(&[], &[11]), (None, None));
        assert_eq!(boundary_scores(&[3], &[11]), (Some(0.0), None));
    }

    #[test]
    fn arm_presets() {
        let base = DecodeConfig { cache_mode: CacheMode::Dual, seed: 9, ..Default::default() };
        let seq = Arm::BlockwiseSequential.config(&base);
        assert_eq!((seq.partition_mode, seq.fixed_block_size, seq.parallel), (PartitionMode::Fixed, 32, false));
        let par = Arm::BlockwiseParallel.config(&base);
        assert_eq!((par.threshold_mode, par.tau_fixed, par.parallel), (ThresholdMode::Fixed, 0.9, true));
        let ad = Arm::AdaptiveDynamic.config(&base);
        assert_eq!(
            (ad.partition_mode, ad.threshold_mode, ad.tau_min),
            (PartitionMode::Adaptive, ThresholdMode::Dynamic, 0.1)
        );
        for arm in Arm::ALL {
            let c = arm.config(&base);
            assert_eq!((c.cache_mode, c.seed), (CacheMode::Dual, 9));
            assert_eq!(arm.as_str().parse::<Arm>().unwrap(), arm);
        }
        assert!("nope".parse::<Arm>().is_err());
    }
}
