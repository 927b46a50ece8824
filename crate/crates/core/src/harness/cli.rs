use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{CacheMode, DecodeConfig, PartitionMode, ThresholdMode};
use crate::decoder::DecodeMetrics;
use crate::error::{Error, Result};
use crate::jsonfmt;
use crate::partition::Block;
use crate::state::TokenId;
use crate::synth::{generate_spec, CorpusStyle, GenerateParams, PlantedCorpusSpec};
use crate::trace::{validate_trace, DecodeTrace};

use super::analyze::{analyze_entropy, write_profile_csv};
use super::experiment::{
    run_cell, run_matrix, summarize, summary_table, Arm, ArmConfig, BridgeSource, Corpus, ExperimentRow, ModelSource,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_TRACE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "swordsman", version, about = "Entropy-driven adaptive block decoding for masked diffusion LMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decode once and write the trace and metrics.
    Run(RunArgs),
    /// Run a matrix of decoding arms over one or many corpora.
    Compare(CompareArgs),
    /// Emit per-position entropy and shift profiles at every refresh.
    AnalyzeEntropy(AnalyzeArgs),
    /// Check a trace file against the event grammar and its own metrics.
    ValidateTrace(ValidateArgs),
    /// Write a generated planted-corpus spec.
    Generate(GenerateArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// `synth:<spec.json>` or `bridge:<shell command line>`.
    #[arg(long)]
    model: Option<String>,
    /// Prompt token ids, whitespace separated. Defaults to the spec's prompt.
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    /// Expected vocabulary size; checked against the model.
    #[arg(long)]
    vocab_size: Option<u32>,
    /// Expected mask id; checked against the model.
    #[arg(long)]
    mask_id: Option<TokenId>,
}

#[derive(Args, Debug, Clone)]
struct KnobArgs {
    /// Generation length; defaults to the corpus length for synth models.
    #[arg(long)]
    gen_len: Option<usize>,
    #[arg(long, default_value = "adaptive")]
    partition: PartitionMode,
    #[arg(long, default_value_t = 32)]
    block_size: usize,
    /// Minimum entropy shift for a boundary, in nats (`inf` disables splitting).
    #[arg(long, default_value_t = 0.1)]
    tau_min: f64,
    #[arg(long, default_value = "dynamic")]
    threshold: ThresholdMode,
    #[arg(long, default_value_t = 0.9)]
    tau_fixed: f64,
    #[arg(long, default_value_t = 0.9)]
    tau_init: f64,
    #[arg(long, default_value = "none")]
    cache: CacheMode,
    /// Unmask one token per step instead of thresholding.
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl KnobArgs {
    fn config(&self, gen_len: usize) -> DecodeConfig {
        DecodeConfig {
            gen_len,
            partition_mode: self.partition,
            fixed_block_size: self.block_size,
            tau_min: self.tau_min,
            threshold_mode: self.threshold,
            tau_fixed: self.tau_fixed,
            tau_init: self.tau_init,
            cache_mode: self.cache,
            parallel: !self.sequential,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    knobs: KnobArgs,
    /// Preset arm applied on top of the knobs.
    #[arg(long, default_value = "custom")]
    arm: Arm,
    /// JSON-lines trace output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Metrics document output; wall-clock time goes to `<path>.timing.json`.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    knobs: KnobArgs,
    /// Generate this many corpora instead of loading `--model`.
    #[arg(long)]
    corpora: Option<usize>,
    #[arg(long, value_enum, default_value_t = StyleArg::Standard)]
    style: StyleArg,
    /// Seed of the first generated corpus; corpus i uses this plus i.
    #[arg(long, default_value_t = 0)]
    corpus_seed: u64,
    /// Comma-separated arms.
    #[arg(long, value_delimiter = ',', default_values_t = Arm::STANDARD.to_vec())]
    arms: Vec<Arm>,
    /// Sweep one knob: `--sweep tau-init 0.5,0.6,0.7`.
    #[arg(long, num_args = 2, value_names = ["KEY", "VALUES"])]
    sweep: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// JSON document with every row and the per-arm summary.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    knobs: KnobArgs,
    /// Columnar profile output (CSV).
    #[arg(long)]
    profile: PathBuf,
    /// Boundary summary output (JSON).
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    trace: PathBuf,
    /// Metrics document from `run` whose metrics must match the trace.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum StyleArg {
    Planted,
    Standard,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = StyleArg::Planted)]
    style: StyleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    gen_len: Option<usize>,
    #[arg(long)]
    vocab_size: Option<u32>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    min_branches: Option<usize>,
    #[arg(long)]
    max_branches: Option<usize>,
    #[arg(long)]
    trap_rate: Option<f64>,
    #[arg(long)]
    hedged_rate: Option<f64>,
}

impl GenerateArgs {
    fn params(&self) -> GenerateParams {
        let mut p = match self.style {
            StyleArg::Planted => GenerateParams::planted(self.seed),
            StyleArg::Standard => GenerateParams::standard(self.seed),
        };
        p.gen_len = self.gen_len.unwrap_or(p.gen_len);
        p.vocab_size = self.vocab_size.unwrap_or(p.vocab_size);
        p.min_len = self.min_len.unwrap_or(p.min_len);
        p.max_len = self.max_len.unwrap_or(p.max_len);
        p.min_branches = self.min_branches.unwrap_or(p.min_branches);
        p.max_branches = self.max_branches.unwrap_or(p.max_branches);
        if let CorpusStyle::Standard { trap_rate, hedged_rate } = &mut p.style {
            *trap_rate = self.trap_rate.unwrap_or(*trap_rate);
            *hedged_rate = self.hedged_rate.unwrap_or(*hedged_rate);
        }
        p
    }
}

/// Process exit status for an engine error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Backend(_) => EXIT_BACKEND,
        Error::Config(_) | Error::Io(_) | Error::Parse(_) => EXIT_CONFIG,
        Error::Contract(_) => 1,
    }
}

/// Entry point behind the `swordsman` binary; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("SWORDSMAN_LOG")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::AnalyzeEntropy(a) => cmd_analyze(a),
        Command::ValidateTrace(a) => cmd_validate(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn read_prompt(path: &Path) -> Result<Vec<TokenId>> {
    let text = std::fs::read_to_string(path)?;
    text.split_whitespace()
        .map(|t| {
            t.parse::<TokenId>().map_err(|e| Error::Config(format!("{}: bad token id '{t}': {e}", path.display())))
        })
        .collect()
}

/// Resolves the model, prompt and generation length of a single-corpus
/// command.
fn single_corpus(model: &ModelArgs, gen_len: Option<usize>) -> Result<(Corpus, usize)> {
    let spec_text = model.model.as_deref().ok_or_else(|| Error::Config("--model is required".into()))?;
    let prompt = model.prompt_file.as_deref().map(read_prompt).transpose()?;
    if gen_len == Some(0) {
        return Err(Error::Config("gen_len must be positive".into()));
    }
    if let Some(path) = spec_text.strip_prefix("synth:") {
        let spec = PlantedCorpusSpec::load(Path::new(path))?;
        if model.vocab_size.is_some_and(|v| v != spec.vocab_size) || model.mask_id.is_some_and(|m| m != spec.mask_id) {
            return Err(Error::Config("spec vocabulary does not match --vocab-size/--mask-id".into()));
        }
        let l = spec.gen_len();
        if let Some(g) = gen_len.filter(|&g| g != l) {
            return Err(Error::Config(format!("--gen-len {g} differs from the corpus length {l}")));
        }
        let prompt = prompt.unwrap_or_else(|| spec.prompt.clone());
        let name = Path::new(path).file_stem().map_or_else(|| path.to_string(), |s| s.to_string_lossy().into_owned());
        Ok((Corpus { name, source: ModelSource::Synth(Arc::new(spec)), prompt }, l))
    } else if let Some(cmdline) = spec_text.strip_prefix("bridge:") {
        let prompt = prompt.ok_or_else(|| Error::Config("bridge models need --prompt-file".into()))?;
        let source = ModelSource::Bridge(BridgeSource {
            cmdline: cmdline.to_string(),
            vocab_size: model.vocab_size,
            mask_id: model.mask_id,
        });
        Ok((Corpus { name: "bridge".into(), source, prompt }, gen_len.unwrap_or(512)))
    } else {
        Err(Error::Config(format!("--model must start with synth: or bridge:, got '{spec_text}'")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(jsonfmt::to_string_pretty(value)?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_timing(metrics_path: &Path, started: Instant) -> Result<()> {
    let mut name = metrics_path.as_os_str().to_owned();
    name.push(".timing.json");
    write_json(Path::new(&name), &serde_json::json!({ "wall_seconds": started.elapsed().as_secs_f64() }))
}

/// The metrics document written by `run`.
#[derive(Debug, Serialize)]
struct RunDocument<'a> {
    row: &'a ExperimentRow,
    config: &'a DecodeConfig,
    metrics: &'a DecodeMetrics,
    blocks: &'a [Block],
    output: &'a [TokenId],
}

fn cmd_run(a: RunArgs) -> Result<i32> {
    let started = Instant::now();
    let (corpus, gen_len) = single_corpus(&a.model, a.knobs.gen_len)?;
    let arm = ArmConfig::preset(a.arm, &a.knobs.config(gen_len));
    let (report, row) = run_cell(&corpus, &arm)?;
    if let Some(path) = &a.trace {
        report.trace.write_jsonl(create(path)?)?;
    }
    if let Some(path) = &a.metrics {
        let doc = RunDocument {
            row: &row,
            config: &arm.config,
            metrics: &report.outcome.metrics,
            blocks: &report.outcome.blocks,
            output: report.outcome.generated(),
        };
        write_json(path, &doc)?;
        write_timing(path, started)?;
    }
    let m = &report.outcome.metrics;
    println!(
        "{}: steps={} blocks={} forward_passes={} token_compute={} tokens_per_step={:.3}{}",
        row.arm,
        m.steps,
        m.blocks,
        m.forward_passes,
        m.token_compute,
        m.tokens_per_step,
        row.exact_match.map_or(String::new(), |x| format!(" exact_match={x}"))
    );
    Ok(EXIT_OK)
}

/// Arm configurations, expanded by the sweep when there is one.
fn matrix_arms(a: &CompareArgs, base: &DecodeConfig) -> Result<Vec<ArmConfig>> {
    let presets: Vec<ArmConfig> = a.arms.iter().map(|&arm| ArmConfig::preset(arm, base)).collect();
    let Some(sweep) = &a.sweep else {
        return Ok(presets);
    };
    let (key, values) = (&sweep[0], &sweep[1]);
    let mut out = Vec::new();
    for v in values.split(',').filter(|v| !v.is_empty()) {
        let bad = |e: String| Error::Config(format!("--sweep {key}: bad value '{v}': {e}"));
        for p in &presets {
            let mut c = p.config.clone();
            match key.as_str() {
                "tau-init" => c.tau_init = v.parse().map_err(|e| bad(format!("{e}")))?,
                "tau-fixed" => c.tau_fixed = v.parse().map_err(|e| bad(format!("{e}")))?,
                "tau-min" => c.tau_min = v.parse().map_err(|e| bad(format!("{e}")))?,
                "block-size" => c.fixed_block_size = v.parse().map_err(|e| bad(format!("{e}")))?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown sweep key '{other}' (tau-init, tau-fixed, tau-min, block-size)"
                    )))
                }
            }
            out.push(ArmConfig { label: format!("{} {key}={v}", p.label), arm: p.arm, config: c });
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct CompareDocument<'a> {
    rows: &'a [ExperimentRow],
    summary: &'a [super::experiment::ArmSummary],
}

fn cmd_compare(a: CompareArgs) -> Result<i32> {
    let started = Instant::now();
    let (corpora, gen_len) = match a.corpora {
        Some(0) => return Err(Error::Config("--corpora must be positive".into())),
        Some(n) => {
            if a.model.model.is_some() {
                return Err(Error::Config("--corpora and --model are exclusive".into()));
            }
            let mut corpora = Vec::with_capacity(n);
            for i in 0..n as u64 {
                let seed = a.corpus_seed + i;
                let mut p = match a.style {
                    StyleArg::Planted => GenerateParams::planted(seed),
                    StyleArg::Standard => GenerateParams::standard(seed),
                };
                if let Some(g) = a.knobs.gen_len {
                    p.gen_len = g;
                }
                corpora.push(Corpus::synth(format!("corpus-{seed}"), generate_spec(&p)?));
            }
            let l = corpora[0].source.spec().map_or(512, |s| s.gen_len());
            (corpora, l)
        }
        None => {
            let (c, l) = single_corpus(&a.model, a.knobs.gen_len)?;
            (vec![c], l)
        }
    };
    let base = a.knobs.config(gen_len);
    let arms = matrix_arms(&a, &base)?;
    let rows = run_matrix(&corpora, &arms, a.jobs)?;
    let summary = summarize(&rows);
    print!("{}", summary_table(&summary));
    if let Some(path) = &a.metrics {
        write_json(path, &CompareDocument { rows: &rows, summary: &summary })?;
        write_timing(path, started)?;
    }
    Ok(EXIT_OK)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<i32> {
    let (corpus, gen_len) = single_corpus(&a.model, a.knobs.gen_len)?;
    let config = a.knobs.config(gen_len);
    let (capture, analysis) = analyze_entropy(&corpus, &config)?;
    write_profile_csv(create(&a.profile)?, &capture, &analysis)?;
    if let Some(path) = &a.metrics {
        write_json(path, &analysis)?;
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "refreshes={} detected={} recall={} precision={}",
        analysis.refreshes,
        analysis.detected.len(),
        opt(analysis.recall),
        opt(analysis.precision)
    );
    Ok(EXIT_OK)
}

fn cmd_validate(a: ValidateArgs) -> Result<i32> {
    let file = File::open(&a.trace).map_err(|e| Error::Config(format!("cannot read {}: {e}", a.trace.display())))?;
    let trace = match DecodeTrace::read_jsonl(BufReader::new(file)) {
        Ok(t) => t,
        Err(Error::Parse(m)) => {
            eprintln!("invalid trace: {m}");
            return Ok(EXIT_INVALID_TRACE);
        }
        Err(e) => return Err(e),
    };
    let summary = match validate_trace(&trace.events) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return Ok(EXIT_INVALID_TRACE);
        }
    };
    if let Some(path) = &a.metrics {
        let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let metrics: DecodeMetrics = serde_json::from_value(doc["metrics"].clone())?;
        if metrics != summary.metrics {
            eprintln!("metrics document disagrees with the trace");
            return Ok(EXIT_INVALID_TRACE);
        }
    }
    println!(
        "valid: {} events, {} blocks, {} steps",
        trace.events.len(),
        summary.metrics.blocks,
        summary.metrics.steps
    );
    Ok(EXIT_OK)
}

fn cmd_generate(a: GenerateArgs) -> Result<i32> {
    let spec = generate_spec(&a.params())?;
    spec.save(&a.out).map_err(|e| Error::Config(format!("cannot write {}: {e}", a.out.display())))?;
    println!("{}: {} constituents, gen_len {}", a.out.display(), spec.constituents.len(), spec.gen_len());
    Ok(EXIT_OK)
}
