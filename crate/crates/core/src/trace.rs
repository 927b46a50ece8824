//! Decode event log: JSON lines, one event per line, validated against the
//! nesting grammar
//!
//! ```text
//! run_start (refresh boundary block_start unmask_step+ block_end)* run_end
//! ```
//!
//! with at least one block whenever the generation length is positive.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DecodeConfig;
use crate::decoder::DecodeMetrics;
use crate::entropy::{EntropyProfile, ShiftProfile};
use crate::error::{Error, Result};
use crate::jsonfmt;
use crate::state::{Position, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    RunStart {
        /// `swordsman` or `full_diffusion`.
        mode: String,
        prompt_len: usize,
        gen_len: usize,
        config: DecodeConfig,
    },
    /// Forward pass over the whole undecoded region.
    Refresh {
        remaining: usize,
        first: Position,
        last: Position,
        mean_entropy: f64,
        max_entropy: f64,
        token_compute: u64,
    },
    Boundary {
        position: Position,
        max_shift: Option<f64>,
        terminated: bool,
    },
    BlockStart {
        k: usize,
        start: Position,
        end: Position,
        mean_entropy: f64,
        lambda: f64,
    },
    UnmaskStep {
        step: u64,
        block: usize,
        tau: f64,
        /// Mean entropy over the block's still-masked positions.
        mean_entropy: f64,
        positions: Vec<Position>,
        confidences: Vec<f64>,
        tokens: Vec<TokenId>,
        /// No position reached `tau`; the most confident one was taken.
        fallback: bool,
        /// False when the step reused the preceding refresh pass.
        forward: bool,
        token_compute: u64,
    },
    BlockEnd {
        k: usize,
        steps: u64,
    },
    RunEnd {
        metrics: DecodeMetrics,
    },
}

/// Receives decode events as they happen.
pub trait TraceSink {
    fn event(&mut self, event: TraceEvent);

    /// Full entropy and shift profiles of refresh pass `refresh` (1-based).
    fn profile(&mut self, _refresh: usize, _profile: &EntropyProfile, _shifts: &ShiftProfile) {}
}

/// In-memory event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeTrace {
    pub events: Vec<TraceEvent>,
}

impl TraceSink for DecodeTrace {
    fn event(&mut self, event: TraceEvent) {
        self.events.push(event);
    }
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn event(&mut self, _event: TraceEvent) {}
}

impl DecodeTrace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            w.write_all(jsonfmt::to_string(e)?.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("trace line {}: {e}", i + 1)))?;
            events.push(e);
        }
        Ok(Self { events })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid trace at event {index}: {message}")]
pub struct TraceError {
    pub index: usize,
    pub message: String,
}

/// What a valid trace says about its run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub prompt_len: usize,
    pub gen_len: usize,
    /// Metrics recomputed from the events.
    pub metrics: DecodeMetrics,
    /// Inclusive `(start, end)` of every block.
    pub blocks: Vec<(Position, Position)>,
    /// Positions in the order they were unmasked.
    pub unmask_order: Vec<Position>,
}

/// Checks grammar, block coverage, step bookkeeping, and that the closing
/// metrics equal those recomputed from the events.
pub fn validate_trace(events: &[TraceEvent]) -> std::result::Result<TraceSummary, TraceError> {
    Validator::default().run(events)
}

/// Metrics recomputed from a trace; fails if the trace is invalid.
pub fn metrics_from_trace(events: &[TraceEvent]) -> std::result::Result<DecodeMetrics, TraceError> {
    validate_trace(events).map(|s| s.metrics)
}

#[derive(Default)]
struct Validator {
    index: usize,
    metrics: DecodeMetrics,
    blocks: Vec<(Position, Position)>,
    order: Vec<Position>,
    seen: BTreeSet<Position>,
}

impl Validator {
    fn fail<T>(&self, message: impl Into<String>) -> std::result::Result<T, TraceError> {
        Err(TraceError { index: self.index, message: message.into() })
    }

    fn run(mut self, events: &[TraceEvent]) -> std::result::Result<TraceSummary, TraceError> {
        let mut it = events.iter().peekable();
        let (prompt_len, gen_len) = match it.next() {
            Some(TraceEvent::RunStart { prompt_len, gen_len, .. }) => (*prompt_len, *gen_len),
            Some(_) => return self.fail("trace must open with run_start"),
            None => return self.fail("empty trace"),
        };
        let end_of_seq = prompt_len + gen_len;
        let mut next_start = prompt_len;

        loop {
            self.index += 1;
            match it.next() {
                Some(TraceEvent::RunEnd { metrics }) => {
                    if it.next().is_some() {
                        self.index += 1;
                        return self.fail("events after run_end");
                    }
                    if next_start != end_of_seq {
                        return self.fail(format!("blocks cover up to {next_start}, sequence ends at {end_of_seq}"));
                    }
                    self.metrics.finish(gen_len);
                    if *metrics != self.metrics {
                        return self
                            .fail(format!("run_end metrics {metrics:?} differ from recomputed {:?}", self.metrics));
                    }
                    return Ok(TraceSummary {
                        prompt_len,
                        gen_len,
                        metrics: self.metrics,
                        blocks: self.blocks,
                        unmask_order: self.order,
                    });
                }
                Some(TraceEvent::Refresh { remaining, first, last, token_compute, .. }) => {
                    if *first != next_start || *last + 1 != end_of_seq || *remaining != last + 1 - first {
                        return self.fail(format!(
                            "refresh over {first}..={last} ({remaining}), expected {next_start}..={}",
                            end_of_seq.saturating_sub(1)
                        ));
                    }
                    self.metrics.forward_passes += 1;
                    self.metrics.token_compute += token_compute;
                    next_start = self.block(&mut it, next_start, end_of_seq)?;
                }
                Some(_) => return self.fail("expected refresh or run_end"),
                None => return self.fail("trace ends without run_end"),
            }
        }
    }

    /// Consumes `boundary block_start unmask_step+ block_end`; returns the
    /// start of the following block.
    fn block<'a, I>(
        &mut self,
        it: &mut std::iter::Peekable<I>,
        next_start: Position,
        end_of_seq: Position,
    ) -> std::result::Result<Position, TraceError>
    where
        I: Iterator<Item = &'a TraceEvent>,
    {
        self.index += 1;
        let cut = match it.next() {
            Some(TraceEvent::Boundary { position, .. }) => *position,
            _ => return self.fail("expected boundary"),
        };
        if cut < next_start || cut >= end_of_seq {
            return self.fail(format!("boundary {cut} outside the remaining region"));
        }

        self.index += 1;
        let k = self.blocks.len() + 1;
        match it.next() {
            Some(TraceEvent::BlockStart { k: bk, start, end, lambda, .. }) => {
                if *bk != k || *start != next_start || *end != cut {
                    return self.fail(format!("block_start {bk} {start}..={end}, expected {k} {next_start}..={cut}"));
                }
                if !(0.0..=1.0).contains(lambda) {
                    return self.fail(format!("lambda {lambda} outside [0, 1]"));
                }
            }
            _ => return self.fail("expected block_start"),
        }

        let mut steps = 0u64;
        while let Some(TraceEvent::UnmaskStep { .. }) = it.peek() {
            self.index += 1;
            let Some(TraceEvent::UnmaskStep {
                step,
                block,
                positions,
                confidences,
                tokens,
                forward,
                token_compute,
                ..
            }) = it.next()
            else {
                unreachable!()
            };
            if *block != k || *step != self.metrics.steps + 1 {
                return self.fail(format!("unmask_step {step} of block {block} out of sequence"));
            }
            if positions.is_empty() || positions.len() != confidences.len() || positions.len() != tokens.len() {
                return self.fail("unmask_step positions, confidences and tokens must align and be non-empty");
            }
            if positions.windows(2).any(|w| w[0] >= w[1]) {
                return self.fail("unmask_step positions must be strictly ascending");
            }
            for &p in positions {
                if p < next_start || p > cut {
                    return self.fail(format!("position {p} outside block {next_start}..={cut}"));
                }
                if !self.seen.insert(p) {
                    return self.fail(format!("position {p} unmasked twice"));
                }
                self.order.push(p);
            }
            if *forward {
                self.metrics.forward_passes += 1;
            } else if steps > 0 {
                return self.fail("only a block's first step may reuse the refresh pass");
            }
            self.metrics.token_compute += token_compute;
            self.metrics.steps += 1;
            steps += 1;
        }
        if steps == 0 {
            self.index += 1;
            return self.fail("block without unmask steps");
        }

        self.index += 1;
        match it.next() {
            Some(TraceEvent::BlockEnd { k: bk, steps: n }) if *bk == k && *n == steps => {}
            Some(TraceEvent::BlockEnd { k: bk, steps: n }) => {
                return self.fail(format!("block_end {bk} with {n} steps, expected {k} with {steps}"))
            }
            _ => return self.fail("expected unmask_step or block_end"),
        }
        if let Some(p) = (next_start..=cut).find(|p| !self.seen.contains(p)) {
            return self.fail(format!("block {k} ends with position {p} still masked"));
        }
        let len = cut + 1 - next_start;
        self.metrics.blocks += 1;
        *self.metrics.block_sizes.entry(len).or_insert(0) += 1;
        self.blocks.push((next_start, cut));
        Ok(cut + 1)
    }
}
