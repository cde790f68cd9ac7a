//! C ABI over `preqmdl`.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`PqStatus`]; results come back
//!   through out-pointers, which are written only on success.
//! * Handles (`PqConfig`, `PqDataset`, `PqResult`) are opaque and owned by
//!   the caller once returned; release them with the matching `*_free`.
//! * After a non-OK status, [`pq_last_error`] returns a message for the
//!   calling thread. The pointer stays valid until the next failing call on
//!   that thread.
//! * Strings are NUL-terminated UTF-8. Panics never cross the boundary.
//!
//! The generated header is `include/preqmdl.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use preqmdl::analysis::model_posterior;
use preqmdl::cli;
use preqmdl::config::{parse_config, ExperimentConfig};
use preqmdl::dataset::{generate_channel_task, read_sequence, ChannelTaskSpec, SequenceDataset};
use preqmdl::estimators::{self, PrequentialResult};
use preqmdl::oracle::{kt_code_length, nml_complexity};
use preqmdl::replay::{reset_probability, ReplayDistribution};
use preqmdl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Format = 4,
    Io = 5,
    Invariant = 6,
    Exhausted = 7,
    Utf8 = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqReplayKind {
    Uniform = 0,
    /// `param_a` is the rate.
    Exponential = 1,
    /// `param_a` is the scale, `param_b` the shape.
    Pareto = 2,
}

/// Parsed experiment configuration.
pub struct PqConfig(ExperimentConfig);

/// In-memory example sequence.
pub struct PqDataset(SequenceDataset);

/// Outcome of one prequential run.
pub struct PqResult(PrequentialResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> PqStatus {
    match err {
        Error::Argument(_) => PqStatus::InvalidArgument,
        Error::Config { .. } => PqStatus::Config,
        Error::Format(_) => PqStatus::Format,
        Error::Io(_) => PqStatus::Io,
        Error::Invariant(_) => PqStatus::Invariant,
        Error::Exhausted { .. } => PqStatus::Exhausted,
    }
}

struct Fail(PqStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PqStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PqStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            PqStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PqStatus::Utf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message describing the last failure on this thread; empty if none.
#[no_mangle]
pub extern "C" fn pq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// --- configuration ---------------------------------------------------------

/// Parses configuration text (`key = value` lines).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_config_parse(text: *const c_char, out: *mut *mut PqConfig) -> PqStatus {
    guard(|| {
        let cfg = parse_config(str_arg(text, "text")?)?;
        put(out, Box::into_raw(Box::new(PqConfig(cfg))))
    })
}

/// Reads a configuration file; relative data paths resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_config_load(path: *const c_char, out: *mut *mut PqConfig) -> PqStatus {
    guard(|| {
        let cfg = cli::load_config(Path::new(str_arg(path, "path")?), None, false)?;
        put(out, Box::into_raw(Box::new(PqConfig(cfg))))
    })
}

/// Overrides the run seed.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pq_config_set_seed(config: *mut PqConfig, seed: u64) -> PqStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        cfg.0.run.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pq_config_free(config: *mut PqConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

// --- datasets --------------------------------------------------------------

/// Reads a whole PQDS file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_dataset_open(path: *const c_char, out: *mut *mut PqDataset) -> PqStatus {
    guard(|| {
        let data = read_sequence(Path::new(str_arg(path, "path")?))?;
        put(out, Box::into_raw(Box::new(PqDataset(data))))
    })
}

/// Loads the data source named by a configuration (shuffled if configured).
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_config_load_dataset(config: *const PqConfig, out: *mut *mut PqDataset) -> PqStatus {
    guard(|| {
        let data = cli::load_data(&handle(config, "config")?.0)?;
        put(out, Box::into_raw(Box::new(PqDataset(data))))
    })
}

/// Generates the synthetic channel task. `condition_on` lists the channels
/// whose features are kept.
///
/// # Safety
/// `condition_on` must point to `condition_len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_dataset_generate_channel(
    n: usize,
    channels: usize,
    classes: usize,
    dim_per_channel: usize,
    noise_std: f64,
    seed: u64,
    condition_on: *const usize,
    condition_len: usize,
    out: *mut *mut PqDataset,
) -> PqStatus {
    guard(|| {
        let spec = ChannelTaskSpec {
            n,
            channels,
            classes,
            dim_per_channel,
            noise_std,
            seed,
            condition_on: slice_arg(condition_on, condition_len, "condition_on")?.to_vec(),
        };
        let data = generate_channel_task(&spec)?;
        put(out, Box::into_raw(Box::new(PqDataset(data))))
    })
}

/// # Safety
/// `dataset` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_dataset_shape(
    dataset: *const PqDataset,
    len: *mut usize,
    dim: *mut usize,
    num_classes: *mut usize,
) -> PqStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        if len.is_null() || dim.is_null() || num_classes.is_null() {
            return Err(null("out"));
        }
        len.write(d.len());
        dim.write(d.dim());
        num_classes.write(d.num_classes());
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pq_dataset_free(dataset: *mut PqDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

// --- runs ------------------------------------------------------------------

/// Runs the configured protocol on `dataset`, or on the configuration's own
/// data source when `dataset` is null.
///
/// # Safety
/// `config` must be a live handle, `dataset` null or a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pq_run(
    config: *const PqConfig,
    dataset: *const PqDataset,
    out: *mut *mut PqResult,
) -> PqStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        let result = match dataset.as_ref() {
            None => cli::execute(cfg)?.result,
            Some(d) => {
                let run = cfg.run_config(d.0.dim(), d.0.num_classes());
                estimators::run(cfg.protocol, &run, &d.0)?
            }
        };
        put(out, Box::into_raw(Box::new(PqResult(result))))
    })
}

/// Runs a configuration and writes `steps.csv`, `summary.csv` and
/// `config.txt` into `out_dir`, exactly as the command-line `run` does.
///
/// # Safety
/// `config` must be a live handle; `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pq_run_to_dir(config: *const PqConfig, out_dir: *const c_char) -> PqStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        cli::cmd_run(cfg, Path::new(str_arg(out_dir, "out_dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pq_result_len(result: *const PqResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.len())
}

/// Total code length in nats.
///
/// # Safety
/// `result` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pq_result_description_length(result: *const PqResult, out: *mut f64) -> PqStatus {
    guard(|| put(out, handle(result, "result")?.0.description_length()))
}

/// # Safety
/// `result` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_result_totals(
    result: *const PqResult,
    errors: *mut u64,
    eval_flops: *mut u64,
    train_flops: *mut u64,
) -> PqStatus {
    guard(|| {
        let r = &handle(result, "result")?.0;
        if errors.is_null() || eval_flops.is_null() || train_flops.is_null() {
            return Err(null("out"));
        }
        errors.write(r.cumulative_errors);
        eval_flops.write(r.flops.eval);
        train_flops.write(r.flops.train);
        Ok(())
    })
}

/// Copies the per-step losses into `buf`. Returns `BufferTooSmall` (and
/// writes the required length to `written`) when `cap` is insufficient.
///
/// # Safety
/// `result` must be a live handle; `buf` must hold `cap` doubles; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn pq_result_step_losses(
    result: *const PqResult,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> PqStatus {
    guard(|| {
        let losses = &handle(result, "result")?.0.per_step_loss;
        put(written, losses.len())?;
        if cap < losses.len() {
            return Err(Fail(
                PqStatus::BufferTooSmall,
                format!("need {} doubles, got {cap}", losses.len()),
            ));
        }
        if !losses.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(losses.as_ptr(), buf, losses.len());
        }
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pq_result_free(result: *mut PqResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

// --- stateless helpers -----------------------------------------------------

/// Probability that a replay stream restarts when the learner moves from
/// `t_prev` to `t_new`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_reset_probability(
    kind: PqReplayKind,
    param_a: f64,
    param_b: f64,
    t_prev: u64,
    t_new: u64,
    out: *mut f64,
) -> PqStatus {
    guard(|| {
        let dist = match kind {
            PqReplayKind::Uniform => ReplayDistribution::Uniform,
            PqReplayKind::Exponential => ReplayDistribution::Exponential { rate: param_a },
            PqReplayKind::Pareto => ReplayDistribution::Pareto {
                scale: param_a,
                shape: param_b,
            },
        };
        dist.validate()?;
        put(out, reset_probability(&dist, t_prev, t_new)?)
    })
}

/// NML parametric complexity of Bernoulli sequences of length `t`, in nats.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pq_nml_complexity(t: usize, out: *mut f64) -> PqStatus {
    guard(|| put(out, nml_complexity(t)?))
}

/// KT code length in nats of a bit sequence (nonzero bytes are ones).
///
/// # Safety
/// `bits` must point to `len` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pq_kt_code_length(bits: *const u8, len: usize, out: *mut f64) -> PqStatus {
    guard(|| {
        let b: Vec<bool> = slice_arg(bits, len, "bits")?.iter().map(|&x| x != 0).collect();
        put(out, kt_code_length(&b))
    })
}

/// Log posterior probabilities of models under a uniform prior, from their
/// description lengths in nats. `log_probs` receives `len` values.
///
/// # Safety
/// `lengths` and `log_probs` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pq_model_posterior(lengths: *const f64, len: usize, log_probs: *mut f64) -> PqStatus {
    guard(|| {
        let post = model_posterior(slice_arg(lengths, len, "lengths")?)?;
        if log_probs.is_null() {
            return Err(null("log_probs"));
        }
        ptr::copy_nonoverlapping(post.log_probs.as_ptr(), log_probs, len);
        Ok(())
    })
}
