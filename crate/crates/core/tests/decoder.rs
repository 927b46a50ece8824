use proptest::prelude::*;

use swordsman::synth::{Constituent, PlantedCorpusSpec, Realization, SynthBackend};
use swordsman::trace::{metrics_from_trace, validate_trace, DecodeTrace, TraceEvent};
use swordsman::{
    decode, decode_baseline_full_diffusion, BackendError, CacheMode, DecodeConfig, ModelBackend, PartitionMode,
    Position, PositionDistribution, SequenceState, ThresholdMode, Vocab,
};

fn constituent() -> impl Strategy<Value = Constituent> {
    (1usize..6, 1usize..5).prop_flat_map(|(len, b)| {
        prop::collection::vec((prop::collection::vec(1u32..12, len), 1u64..6), b).prop_map(|rs| {
            let mut realizations: Vec<Realization> = Vec::new();
            for (tokens, weight) in rs {
                if !realizations.iter().any(|r| r.tokens == tokens) {
                    realizations.push(Realization { tokens, weight });
                }
            }
            Constituent { realizations }
        })
    })
}

fn spec() -> impl Strategy<Value = PlantedCorpusSpec> {
    prop::collection::vec(constituent(), 1..8).prop_map(|constituents| PlantedCorpusSpec {
        vocab_size: 12,
        mask_id: 0,
        prompt: vec![1, 2],
        seed: 0,
        constituents,
    })
}

fn config() -> impl Strategy<Value = DecodeConfig> {
    (
        prop::bool::ANY,
        1usize..8,
        prop_oneof![Just(0.0), 0.01f64..1.5, Just(f64::INFINITY)],
        prop::bool::ANY,
        0.5f64..=1.0,
        0.5f64..=1.0,
        prop::bool::ANY,
    )
        .prop_map(|(adaptive, block, tau_min, dynamic, tau_fixed, tau_init, parallel)| DecodeConfig {
            partition_mode: if adaptive { PartitionMode::Adaptive } else { PartitionMode::Fixed },
            fixed_block_size: block,
            tau_min,
            threshold_mode: if dynamic { ThresholdMode::Dynamic } else { ThresholdMode::Fixed },
            tau_fixed,
            tau_init,
            parallel,
            ..DecodeConfig::default()
        })
}

fn try_decode(spec: &PlantedCorpusSpec, config: &DecodeConfig) -> swordsman::Result<swordsman::DecodeReport> {
    let l = spec.gen_len();
    let config = DecodeConfig { gen_len: l, fixed_block_size: config.fixed_block_size.min(l), ..config.clone() };
    let mut model = SynthBackend::new(spec.clone()).unwrap();
    decode(&mut model, &spec.prompt, &config)
}

/// Parallel unmasking fills positions from independent marginals, so on
/// corpora with correlated positions it can pick a combination outside the
/// model's support; the synthetic model reports that as a backend fault on
/// its next query. Sequential decoding never does.
fn decode_spec(
    spec: &PlantedCorpusSpec,
    config: &DecodeConfig,
) -> std::result::Result<swordsman::DecodeReport, TestCaseError> {
    match try_decode(spec, config) {
        Ok(r) => Ok(r),
        Err(swordsman::Error::Backend(e)) if config.parallel && e.message.contains("unreachable state") => {
            Err(TestCaseError::reject("parallel fill left the model's support"))
        }
        Err(e) => Err(TestCaseError::fail(format!("decode failed: {e}"))),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_trace_is_valid_and_self_consistent(spec in spec(), config in config()) {
        let report = decode_spec(&spec, &config)?;
        let summary = validate_trace(&report.trace.events).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&summary.metrics, &report.outcome.metrics);
        prop_assert_eq!(metrics_from_trace(&report.trace.events).unwrap(), report.outcome.metrics.clone());
        prop_assert_eq!(summary.unmask_order.len(), spec.gen_len());
        prop_assert!(report.outcome.generated().iter().all(|&t| t != 0));
        let back = DecodeTrace::read_jsonl(report.trace.to_jsonl().as_bytes()).unwrap();
        prop_assert_eq!(&back, &report.trace);
    }

    #[test]
    fn sequential_output_is_a_realization_of_every_constituent(spec in spec(), config in config()) {
        let report = decode_spec(&spec, &DecodeConfig { parallel: false, ..config })?;
        let mut at = 0;
        for c in &spec.constituents {
            let span = &report.outcome.generated()[at..at + c.len()];
            prop_assert!(c.realizations.iter().any(|r| r.tokens == span));
            at += c.len();
        }
    }

    #[test]
    fn cache_mode_changes_only_compute(spec in spec(), config in config()) {
        let runs: Vec<_> = [CacheMode::None, CacheMode::Prefix, CacheMode::Dual]
            .into_iter()
            .map(|cache_mode| decode_spec(&spec, &DecodeConfig { cache_mode, ..config.clone() }).map(|r| r.outcome))
            .collect::<std::result::Result<_, _>>()?;
        for r in &runs[1..] {
            prop_assert_eq!(&r.tokens, &runs[0].tokens);
            prop_assert_eq!(&r.blocks, &runs[0].blocks);
            prop_assert_eq!(r.metrics.steps, runs[0].metrics.steps);
        }
        prop_assert!(runs[2].metrics.token_compute <= runs[1].metrics.token_compute);
        prop_assert!(runs[1].metrics.token_compute <= runs[0].metrics.token_compute);
    }

    #[test]
    fn sequential_and_full_diffusion_take_one_step_per_token(spec in spec(), config in config()) {
        let l = spec.gen_len() as u64;
        let seq = decode_spec(&spec, &DecodeConfig { parallel: false, ..config.clone() })?;
        prop_assert_eq!(seq.outcome.metrics.steps, l);
        let mut model = SynthBackend::new(spec.clone()).unwrap();
        let config = DecodeConfig { gen_len: spec.gen_len(), fixed_block_size: 1, ..config };
        let full = decode_baseline_full_diffusion(&mut model, &spec.prompt, &config).unwrap();
        prop_assert_eq!(full.outcome.metrics.steps, l);
        prop_assert_eq!(full.outcome.blocks.len(), 1);
        prop_assert!(validate_trace(&full.trace.events).is_ok());
    }

    #[test]
    fn fixed_blocks_have_the_configured_size(spec in spec(), block in 1usize..8) {
        let config = DecodeConfig { partition_mode: PartitionMode::Fixed, fixed_block_size: block, ..DecodeConfig::default() };
        let report = decode_spec(&spec, &config)?;
        let blocks = &report.outcome.blocks;
        let block = block.min(spec.gen_len());
        prop_assert_eq!(blocks.len(), spec.gen_len().div_ceil(block));
        prop_assert!(blocks[..blocks.len() - 1].iter().all(|b| b.len() == block));
    }

    #[test]
    fn decoding_is_deterministic(spec in spec(), config in config()) {
        prop_assert_eq!(try_decode(&spec, &config).ok(), try_decode(&spec, &config).ok());
    }
}

/// Always certain of token 5, for any length.
struct Constant;

impl ModelBackend for Constant {
    fn vocab(&self) -> Vocab {
        Vocab::new(8, 0).unwrap()
    }

    fn distributions(
        &mut self,
        _: &SequenceState,
        positions: &[Position],
    ) -> Result<Vec<PositionDistribution>, BackendError> {
        let mut probs = vec![0.0; 8];
        probs[5] = 1.0;
        Ok(positions.iter().map(|&p| PositionDistribution::new(p, probs.clone()).unwrap()).collect())
    }
}

#[test]
fn zero_length_generation_is_the_identity() {
    let config = DecodeConfig { gen_len: 0, ..DecodeConfig::default() };
    let report = decode(&mut Constant, &[3, 4], &config).unwrap();
    assert_eq!(report.outcome.tokens, vec![3, 4]);
    assert_eq!(report.outcome.metrics.forward_passes, 0);
    assert!(matches!(report.trace.events.first(), Some(TraceEvent::RunStart { .. })));
    assert!(validate_trace(&report.trace.events).is_ok());
}

#[test]
fn empty_prompt_is_a_config_error() {
    let config = DecodeConfig { gen_len: 4, ..DecodeConfig::default() };
    assert!(matches!(decode(&mut Constant, &[], &config), Err(swordsman::Error::Config(_))));
}

#[test]
fn certain_model_finishes_each_block_in_one_step() {
    let config = DecodeConfig {
        gen_len: 40,
        partition_mode: PartitionMode::Fixed,
        fixed_block_size: 8,
        ..DecodeConfig::default()
    };
    let report = decode(&mut Constant, &[3], &config).unwrap();
    assert_eq!(report.outcome.generated(), &[5; 40]);
    assert_eq!(report.outcome.metrics.steps, 5);
    // every step reuses its refresh pass
    assert_eq!(report.outcome.metrics.forward_passes, 5);
}
