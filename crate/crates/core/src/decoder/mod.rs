//! The block-wise decode loop: refresh, partition, unmask inside the block,
//! repeat until nothing is masked.

mod cache;
mod metrics;

use std::collections::BTreeMap;

pub use cache::{account_forward, ForwardSpans, QueryKind};
pub use metrics::DecodeMetrics;

use crate::backend::{query_checked, ModelBackend};
use crate::config::{DecodeConfig, PartitionMode};
use crate::dist::PositionDistribution;
use crate::entropy::{entropy_profile, entropy_shifts, shannon_entropy};
use crate::error::{BackendError, Error, Result};
use crate::partition::{adaptive_boundary, fixed_boundary, make_block, Block, Boundary, PartitionState};
use crate::state::{Position, SequenceState, TokenId};
use crate::threshold::{most_confident, ThresholdPolicy};
use crate::trace::{DecodeTrace, TraceEvent, TraceSink};

/// Everything a decode produces apart from the event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// Prompt followed by the generated tokens; contains no mask ids.
    pub tokens: Vec<TokenId>,
    pub prompt_len: usize,
    pub metrics: DecodeMetrics,
    pub blocks: Vec<Block>,
}

impl DecodeOutcome {
    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.prompt_len..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub outcome: DecodeOutcome,
    pub trace: DecodeTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Strategy {
    /// Partitioned per the config.
    Blocks,
    /// The whole region as one block, one token per step.
    FullDiffusion,
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::Blocks => "swordsman",
            Strategy::FullDiffusion => "full_diffusion",
        }
    }
}

/// Decodes `prompt` followed by `config.gen_len` masks, streaming events to
/// `sink`.
pub fn decode_into<B, S>(
    backend: &mut B,
    prompt: &[TokenId],
    config: &DecodeConfig,
    sink: &mut S,
) -> Result<DecodeOutcome>
where
    B: ModelBackend + ?Sized,
    S: TraceSink + ?Sized,
{
    run(backend, prompt, config, Strategy::Blocks, sink)
}

pub fn decode<B: ModelBackend + ?Sized>(
    backend: &mut B,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<DecodeReport> {
    let mut trace = DecodeTrace::default();
    let outcome = decode_into(backend, prompt, config, &mut trace)?;
    Ok(DecodeReport { outcome, trace })
}

/// Baseline without blocks or parallelism: one token per step, globally
/// most confident first, exactly `gen_len` steps.
pub fn decode_baseline_full_diffusion_into<B, S>(
    backend: &mut B,
    prompt: &[TokenId],
    config: &DecodeConfig,
    sink: &mut S,
) -> Result<DecodeOutcome>
where
    B: ModelBackend + ?Sized,
    S: TraceSink + ?Sized,
{
    let config = DecodeConfig { parallel: false, ..config.clone() };
    run(backend, prompt, &config, Strategy::FullDiffusion, sink)
}

pub fn decode_baseline_full_diffusion<B: ModelBackend + ?Sized>(
    backend: &mut B,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<DecodeReport> {
    let mut trace = DecodeTrace::default();
    let outcome = decode_baseline_full_diffusion_into(backend, prompt, config, &mut trace)?;
    Ok(DecodeReport { outcome, trace })
}

fn run<B, S>(
    backend: &mut B,
    prompt: &[TokenId],
    config: &DecodeConfig,
    strategy: Strategy,
    sink: &mut S,
) -> Result<DecodeOutcome>
where
    B: ModelBackend + ?Sized,
    S: TraceSink + ?Sized,
{
    config.validate()?;
    if prompt.is_empty() {
        return Err(Error::config("prompt must not be empty"));
    }
    let policy = ThresholdPolicy::new(config.threshold_mode, config.tau_fixed, config.tau_init)?;
    let mut state = SequenceState::new(backend.vocab(), prompt, config.gen_len)?;
    let prompt_len = state.prompt_len();
    let end_of_seq = state.len();

    sink.event(TraceEvent::RunStart {
        mode: strategy.name().to_string(),
        prompt_len,
        gen_len: config.gen_len,
        config: config.clone(),
    });

    let mut metrics = DecodeMetrics::default();
    let mut blocks = Vec::new();
    let mut partition = PartitionState::new(prompt_len);

    while let Some(&start) = state.masked().first() {
        if start != partition.next_start || partition.terminated {
            return Err(Error::contract(format!(
                "undecoded region starts at {start}, partition expects {}",
                partition.next_start
            )));
        }
        let last = end_of_seq - 1;

        // refresh over the whole undecoded region
        let remaining: Vec<Position> = (start..=last).collect();
        let dists = query_checked(backend, &state, &remaining)?;
        let profile = entropy_profile(&dists)?;
        let shifts = entropy_shifts(&profile)?;
        let spans = ForwardSpans {
            prompt_len,
            decoded_len: start - prompt_len,
            block_span: 0,
            remaining_span: remaining.len(),
        };
        let refresh_cost = account_forward(config.cache_mode, spans, QueryKind::Refresh);
        metrics.forward_passes += 1;
        metrics.token_compute += refresh_cost;
        sink.profile(blocks.len() + 1, &profile, &shifts);
        sink.event(TraceEvent::Refresh {
            remaining: remaining.len(),
            first: start,
            last,
            mean_entropy: profile.mean().unwrap_or(0.0),
            max_entropy: profile.values().iter().copied().fold(0.0, f64::max),
            token_compute: refresh_cost,
        });

        let boundary = match (strategy, config.partition_mode) {
            (Strategy::FullDiffusion, _) => Boundary { end: last, terminated: true, max_shift: None },
            (Strategy::Blocks, PartitionMode::Adaptive) => adaptive_boundary(&profile, &shifts, config.tau_min, last)?,
            (Strategy::Blocks, PartitionMode::Fixed) => {
                let end = fixed_boundary(start, config.fixed_block_size, last);
                Boundary { end, terminated: end == last, max_shift: None }
            }
        };
        sink.event(TraceEvent::Boundary {
            position: boundary.end,
            max_shift: boundary.max_shift,
            terminated: boundary.terminated,
        });

        let (block, mut next) = make_block(blocks.len() + 1, start, boundary.end, &profile, &partition)?;
        next.terminated = boundary.terminated;
        log::debug!(
            "block {} {}..={} mean_entropy={:.4} lambda={:.4}",
            block.index,
            block.start,
            block.end,
            block.initial_mean_entropy,
            block.lambda
        );
        sink.event(TraceEvent::BlockStart {
            k: block.index,
            start: block.start,
            end: block.end,
            mean_entropy: block.initial_mean_entropy,
            lambda: block.lambda,
        });

        // the refresh pass doubles as the block's first step
        let mut reuse: Option<Vec<PositionDistribution>> =
            Some(dists.into_iter().filter(|d| block.contains(d.position())).collect());
        let mut block_steps = 0u64;
        loop {
            let positions = state.masked_in(block.start..=block.end);
            if positions.is_empty() {
                break;
            }
            let (dists, forward, cost) = match reuse.take() {
                Some(d) => (d, false, 0),
                None => {
                    let d = query_checked(backend, &state, &positions)?;
                    let spans = ForwardSpans {
                        prompt_len,
                        decoded_len: block.start - prompt_len,
                        block_span: block.len(),
                        remaining_span: last - block.end,
                    };
                    metrics.forward_passes += 1;
                    (d, true, account_forward(config.cache_mode, spans, QueryKind::BlockStep))
                }
            };
            metrics.token_compute += cost;

            let confidences: Vec<(Position, f64)> = dists.iter().map(|d| (d.position(), d.confidence())).collect();
            let mean_now = dists.iter().map(shannon_entropy).sum::<f64>() / dists.len() as f64;
            let tau = policy.tau(block.lambda, mean_now, block.initial_step_mean);
            let (chosen, fallback) = if config.parallel {
                let above: Vec<Position> = confidences.iter().filter(|(_, c)| *c >= tau).map(|(p, _)| *p).collect();
                if above.is_empty() {
                    (vec![most_confident(&confidences)?], true)
                } else {
                    (above, false)
                }
            } else {
                (vec![most_confident(&confidences)?], false)
            };

            let by_pos: BTreeMap<Position, &PositionDistribution> = dists.iter().map(|d| (d.position(), d)).collect();
            let mut fills = BTreeMap::new();
            let mut chosen_conf = Vec::with_capacity(chosen.len());
            let mut tokens = Vec::with_capacity(chosen.len());
            for &p in &chosen {
                let d = by_pos[&p];
                let token = d.argmax_token();
                if !state.vocab().is_content(token) {
                    return Err(BackendError::at(p, format!("most likely token {token} is the mask id")).into());
                }
                fills.insert(p, token);
                chosen_conf.push(d.confidence());
                tokens.push(token);
            }
            state = state.apply_unmask(&fills)?;
            metrics.steps += 1;
            block_steps += 1;
            sink.event(TraceEvent::UnmaskStep {
                step: metrics.steps,
                block: block.index,
                tau,
                mean_entropy: mean_now,
                positions: chosen,
                confidences: chosen_conf,
                tokens,
                fallback,
                forward,
                token_compute: cost,
            });
        }
        sink.event(TraceEvent::BlockEnd { k: block.index, steps: block_steps });
        metrics.blocks += 1;
        *metrics.block_sizes.entry(block.len()).or_insert(0) += 1;
        blocks.push(block);
        partition = next;
    }

    metrics.finish(config.gen_len);
    sink.event(TraceEvent::RunEnd { metrics: metrics.clone() });
    Ok(DecodeOutcome { tokens: state.tokens().to_vec(), prompt_len, metrics, blocks })
}
