//! C ABI for the decoding engine.
//!
//! Handles (`SwModel`, `SwConfig`, `SwResult`) are opaque and owned by the
//! caller once returned; free each with its `*_free` function. Every fallible
//! call returns an [`SwStatus`] and, on failure, leaves a message readable
//! through [`sw_last_error`] on the same thread. Panics never cross the
//! boundary; they surface as `SW_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use swordsman::entropy::entropy_of;
use swordsman::synth::{generate_spec, GenerateParams, PlantedCorpusSpec, SynthBackend};
use swordsman::threshold::dynamic_tau;
use swordsman::{CacheMode, DecodeConfig, DecodeReport, Error, PartitionMode, ThresholdMode};

pub const SW_PARTITION_FIXED: u32 = 0;
pub const SW_PARTITION_ADAPTIVE: u32 = 1;
pub const SW_THRESHOLD_FIXED: u32 = 0;
pub const SW_THRESHOLD_DYNAMIC: u32 = 1;
pub const SW_CACHE_NONE: u32 = 0;
pub const SW_CACHE_PREFIX: u32 = 1;
pub const SW_CACHE_DUAL: u32 = 2;
pub const SW_STYLE_PLANTED: u32 = 0;
pub const SW_STYLE_STANDARD: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    Config = 2,
    Backend = 3,
    Io = 4,
    /// Contract violation or malformed input data.
    Invalid = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SwMetrics {
    pub forward_passes: u64,
    pub token_compute: u64,
    pub steps: u64,
    pub blocks: u64,
    pub tokens_per_step: f64,
}

/// A synthetic planted-corpus model.
pub struct SwModel {
    spec: Arc<PlantedCorpusSpec>,
}

/// Decode settings; starts from the engine defaults.
pub struct SwConfig {
    config: DecodeConfig,
}

/// Output, metrics and trace of one decode.
pub struct SwResult {
    report: DecodeReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SwStatus {
    match e {
        Error::Config(_) => SwStatus::Config,
        Error::Backend(_) => SwStatus::Backend,
        Error::Io(_) => SwStatus::Io,
        Error::Contract(_) | Error::Parse(_) => SwStatus::Invalid,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard<F: FnOnce() -> Result<(), (SwStatus, String)>>(f: F) -> SwStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {what}"));
            SwStatus::Panic
        }
    }
}

fn engine(e: Error) -> (SwStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SwStatus, String) {
    (SwStatus::Null, format!("{what} is null"))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, (SwStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| (SwStatus::Invalid, "path is not UTF-8".to_string()))?;
    Ok(Path::new(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn sw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a planted-corpus spec from a JSON file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_model_load_synth(path: *const c_char, out: *mut *mut SwModel) -> SwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = PlantedCorpusSpec::load(path_arg(path)?).map_err(engine)?;
        put(out, SwModel { spec: Arc::new(spec) });
        Ok(())
    })
}

/// Generates a corpus with the default parameters of `style`
/// (`SW_STYLE_PLANTED` or `SW_STYLE_STANDARD`).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_model_generate_synth(style: u32, seed: u64, out: *mut *mut SwModel) -> SwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = match style {
            SW_STYLE_PLANTED => GenerateParams::planted(seed),
            SW_STYLE_STANDARD => GenerateParams::standard(seed),
            other => return Err((SwStatus::Config, format!("unknown corpus style {other}"))),
        };
        let spec = generate_spec(&params).map_err(engine)?;
        put(out, SwModel { spec: Arc::new(spec) });
        Ok(())
    })
}

/// Writes the model's spec as JSON.
///
/// # Safety
/// `model` must come from this library; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn sw_model_save(model: *const SwModel, path: *const c_char) -> SwStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.spec.save(path_arg(path)?).map_err(engine)
    })
}

/// Generation length of the corpus, or 0 for a null model.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sw_model_gen_len(model: *const SwModel) -> usize {
    model.as_ref().map_or(0, |m| m.spec.gen_len())
}

/// # Safety
/// `model` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn sw_model_free(model: *mut SwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// A configuration holding the engine defaults.
#[no_mangle]
pub extern "C" fn sw_config_new() -> *mut SwConfig {
    Box::into_raw(Box::new(SwConfig { config: DecodeConfig::default() }))
}

/// # Safety
/// `config` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn sw_config_free(config: *mut SwConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn with_config(config: *mut SwConfig, f: impl FnOnce(&mut DecodeConfig) -> Result<(), String>) -> SwStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        f(&mut c.config).map_err(|m| (SwStatus::Config, m))
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_gen_len(config: *mut SwConfig, gen_len: usize) -> SwStatus {
    with_config(config, |c| {
        c.gen_len = gen_len;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_partition(config: *mut SwConfig, mode: u32) -> SwStatus {
    with_config(config, |c| {
        c.partition_mode = match mode {
            SW_PARTITION_FIXED => PartitionMode::Fixed,
            SW_PARTITION_ADAPTIVE => PartitionMode::Adaptive,
            other => return Err(format!("unknown partition mode {other}")),
        };
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_block_size(config: *mut SwConfig, block_size: usize) -> SwStatus {
    with_config(config, |c| {
        c.fixed_block_size = block_size;
        Ok(())
    })
}

/// `tau_min` may be `INFINITY` to disable splitting.
///
/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_tau_min(config: *mut SwConfig, tau_min: f64) -> SwStatus {
    with_config(config, |c| {
        c.tau_min = tau_min;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_threshold(config: *mut SwConfig, mode: u32) -> SwStatus {
    with_config(config, |c| {
        c.threshold_mode = match mode {
            SW_THRESHOLD_FIXED => ThresholdMode::Fixed,
            SW_THRESHOLD_DYNAMIC => ThresholdMode::Dynamic,
            other => return Err(format!("unknown threshold mode {other}")),
        };
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_tau_fixed(config: *mut SwConfig, tau: f64) -> SwStatus {
    with_config(config, |c| {
        c.tau_fixed = tau;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_tau_init(config: *mut SwConfig, tau: f64) -> SwStatus {
    with_config(config, |c| {
        c.tau_init = tau;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_cache(config: *mut SwConfig, mode: u32) -> SwStatus {
    with_config(config, |c| {
        c.cache_mode = match mode {
            SW_CACHE_NONE => CacheMode::None,
            SW_CACHE_PREFIX => CacheMode::Prefix,
            SW_CACHE_DUAL => CacheMode::Dual,
            other => return Err(format!("unknown cache mode {other}")),
        };
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_parallel(config: *mut SwConfig, parallel: bool) -> SwStatus {
    with_config(config, |c| {
        c.parallel = parallel;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`sw_config_new`].
#[no_mangle]
pub unsafe extern "C" fn sw_config_set_seed(config: *mut SwConfig, seed: u64) -> SwStatus {
    with_config(config, |c| {
        c.seed = seed;
        Ok(())
    })
}

/// Decodes the model's corpus. A null `prompt` with `prompt_len` 0 uses the
/// corpus's own prompt. A `gen_len` of 0 in `config` means the corpus length.
///
/// # Safety
/// `prompt` must point to `prompt_len` token ids (or be null with length 0);
/// handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_decode(
    model: *const SwModel,
    config: *const SwConfig,
    prompt: *const u32,
    prompt_len: usize,
    out: *mut *mut SwResult,
) -> SwStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let prompt: Vec<u32> = if prompt.is_null() {
            if prompt_len != 0 {
                return Err(null("prompt"));
            }
            model.spec.prompt.clone()
        } else {
            std::slice::from_raw_parts(prompt, prompt_len).to_vec()
        };
        let mut c = config.config.clone();
        if c.gen_len == 0 {
            c.gen_len = model.spec.gen_len();
        }
        let mut backend = SynthBackend::from_shared(model.spec.clone()).map_err(engine)?;
        let report = swordsman::decode(&mut backend, &prompt, &c).map_err(engine)?;
        put(out, SwResult { report });
        Ok(())
    })
}

/// Borrows the full token sequence (prompt then generation). The pointer is
/// valid until the result is freed.
///
/// # Safety
/// `result` must come from [`sw_decode`]; `tokens` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_result_tokens(
    result: *const SwResult,
    tokens: *mut *const u32,
    len: *mut usize,
) -> SwStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if tokens.is_null() || len.is_null() {
            return Err(null("output pointer"));
        }
        *tokens = r.report.outcome.tokens.as_ptr();
        *len = r.report.outcome.tokens.len();
        Ok(())
    })
}

/// Number of prompt tokens at the front of [`sw_result_tokens`].
///
/// # Safety
/// `result` must be null or come from [`sw_decode`].
#[no_mangle]
pub unsafe extern "C" fn sw_result_prompt_len(result: *const SwResult) -> usize {
    result.as_ref().map_or(0, |r| r.report.outcome.prompt_len)
}

/// # Safety
/// `result` must come from [`sw_decode`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_result_metrics(result: *const SwResult, out: *mut SwMetrics) -> SwStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = &r.report.outcome.metrics;
        *out = SwMetrics {
            forward_passes: m.forward_passes,
            token_compute: m.token_compute,
            steps: m.steps,
            blocks: m.blocks,
            tokens_per_step: m.tokens_per_step,
        };
        Ok(())
    })
}

/// Writes the decode trace as JSON lines.
///
/// # Safety
/// `result` must come from [`sw_decode`]; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn sw_result_write_trace(result: *const SwResult, path: *const c_char) -> SwStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let path = path_arg(path)?;
        let file = File::create(path).map_err(|e| (SwStatus::Io, format!("{}: {e}", path.display())))?;
        r.report.trace.write_jsonl(BufWriter::new(file)).map_err(engine)
    })
}

/// # Safety
/// `result` must be null or come from [`sw_decode`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn sw_result_free(result: *mut SwResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Entropy in nats of `len` probabilities.
///
/// # Safety
/// `probs` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_shannon_entropy(probs: *const f64, len: usize, out: *mut f64) -> SwStatus {
    guard(|| {
        if probs.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let probs = std::slice::from_raw_parts(probs, len);
        let dist = swordsman::PositionDistribution::new(0, probs.to_vec()).map_err(engine)?;
        *out = entropy_of(dist.probs());
        Ok(())
    })
}

/// In-block confidence threshold for difficulty `lambda` when the block's
/// mean entropy has fallen from `mean_start` to `mean_now`.
#[no_mangle]
pub extern "C" fn sw_dynamic_tau(tau_init: f64, lambda: f64, mean_now: f64, mean_start: f64) -> f64 {
    dynamic_tau(tau_init, lambda, mean_now, mean_start)
}
