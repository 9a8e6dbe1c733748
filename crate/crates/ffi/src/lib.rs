//! C ABI over the smcr pipeline: opaque handles, integer status codes, and a
//! thread-local last-error message. All pointers returned by `*_new`/`*_load`
//! functions are owned by the caller and must be released with the matching
//! `*_free`; passing them to any other allocator is undefined behavior.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use smcr_core::config::TrainConfig;
use smcr_core::data::{load_dataset, DomainDataset};
use smcr_core::numerics::encoder::EncoderParams;
use smcr_core::pipeline::{
    adapt, final_report, init_encoder, load_encoder, save_encoder, synthetic_pretrain, RunReport,
};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmcrStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Configuration rejected (unknown key, bad value, bad combination).
    Config = 3,
    /// Pipeline failure (I/O, numerics, degenerate data, ...).
    Runtime = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(sanitized).unwrap());
}

fn fail(e: smcr_core::Error) -> SmcrStatus {
    set_error(&e.to_string());
    match e {
        smcr_core::Error::Config(_) | smcr_core::Error::Parse { .. } => SmcrStatus::Config,
        _ => SmcrStatus::Runtime,
    }
}

/// Copies the message of the most recent error on this thread into `buf`
/// (NUL-terminated, truncated to `len` bytes). Returns the full message
/// length in bytes, excluding the NUL. `buf` may be null to query the length.
#[no_mangle]
pub extern "C" fn smcr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

unsafe fn utf8_arg<'a>(p: *const c_char) -> Result<&'a str, SmcrStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(SmcrStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SmcrStatus::InvalidUtf8
    })
}

macro_rules! out_arg {
    ($p:expr) => {
        match unsafe { $p.as_mut() } {
            Some(r) => r,
            None => {
                set_error("null output pointer");
                return SmcrStatus::NullArgument;
            }
        }
    };
}

macro_rules! handle_arg {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(r) => &r.0,
            None => {
                set_error("null handle argument");
                return SmcrStatus::NullArgument;
            }
        }
    };
}

/// Opaque dataset handle (one generated or loaded domain).
pub struct SmcrDataset(DomainDataset);
/// Opaque encoder handle.
pub struct SmcrEncoder(EncoderParams);
/// Opaque training-configuration handle.
pub struct SmcrConfig(TrainConfig);

/// Retrieval quality of one adaptation run: per-branch and fused mAP plus
/// fused CMC at ranks 1/5/10.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SmcrMetrics {
    pub map_branch1: f64,
    pub map_branch2: f64,
    pub map_fused: f64,
    pub cmc1_fused: f64,
    pub cmc5_fused: f64,
    pub cmc10_fused: f64,
}

fn metrics_of(report: &RunReport) -> SmcrMetrics {
    SmcrMetrics {
        map_branch1: report.branch1.map,
        map_branch2: report.branch2.map,
        map_fused: report.fused.map,
        cmc1_fused: report.fused.cmc1,
        cmc5_fused: report.fused.cmc5,
        cmc10_fused: report.fused.cmc10,
    }
}

/// Loads a dataset directory written by the `smcr gen-data` stage.
#[no_mangle]
pub unsafe extern "C" fn smcr_dataset_load(
    dir: *const c_char,
    out: *mut *mut SmcrDataset,
) -> SmcrStatus {
    let out = out_arg!(out);
    let dir = match utf8_arg(dir) {
        Ok(s) => s,
        Err(st) => return st,
    };
    match load_dataset(Path::new(dir)) {
        Ok(ds) => {
            *out = Box::into_raw(Box::new(SmcrDataset(ds)));
            SmcrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of samples in the dataset; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn smcr_dataset_len(ds: *const SmcrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Feature dimensionality of the dataset; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn smcr_dataset_dim(ds: *const SmcrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim)
}

#[no_mangle]
pub unsafe extern "C" fn smcr_dataset_free(ds: *mut SmcrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Creates a configuration with library defaults.
#[no_mangle]
pub unsafe extern "C" fn smcr_config_new(out: *mut *mut SmcrConfig) -> SmcrStatus {
    let out = out_arg!(out);
    *out = Box::into_raw(Box::new(SmcrConfig(TrainConfig::default())));
    SmcrStatus::Ok
}

/// Sets one configuration entry using the config-file key names
/// (e.g. "epochs", "alpha", "cluster_eps", "hidden_dims"). Values use the
/// same textual syntax as the config file; unknown keys are rejected.
#[no_mangle]
pub unsafe extern "C" fn smcr_config_set(
    cfg: *mut SmcrConfig,
    key: *const c_char,
    value: *const c_char,
) -> SmcrStatus {
    let cfg = match cfg.as_mut() {
        Some(c) => c,
        None => {
            set_error("null config handle");
            return SmcrStatus::NullArgument;
        }
    };
    let (key, value) = match (utf8_arg(key), utf8_arg(value)) {
        (Ok(k), Ok(v)) => (k, v),
        (Err(st), _) | (_, Err(st)) => return st,
    };
    match cfg.0.apply(key, value).and_then(|()| cfg.0.validate()) {
        Ok(()) => SmcrStatus::Ok,
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn smcr_config_free(cfg: *mut SmcrConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Pretrains an encoder on the synthetic + source pool.
#[no_mangle]
pub unsafe extern "C" fn smcr_pretrain(
    cfg: *const SmcrConfig,
    synthetic: *const SmcrDataset,
    source: *const SmcrDataset,
    out: *mut *mut SmcrEncoder,
) -> SmcrStatus {
    let out = out_arg!(out);
    let cfg = handle_arg!(cfg);
    let synthetic = handle_arg!(synthetic);
    let source = handle_arg!(source);
    match synthetic_pretrain(synthetic, source, cfg) {
        Ok(enc) => {
            *out = Box::into_raw(Box::new(SmcrEncoder(enc)));
            SmcrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Creates a freshly initialized (untrained) encoder for `input_dim`.
#[no_mangle]
pub unsafe extern "C" fn smcr_encoder_init(
    cfg: *const SmcrConfig,
    input_dim: usize,
    out: *mut *mut SmcrEncoder,
) -> SmcrStatus {
    let out = out_arg!(out);
    let cfg = handle_arg!(cfg);
    match init_encoder(input_dim, cfg) {
        Ok(enc) => {
            *out = Box::into_raw(Box::new(SmcrEncoder(enc)));
            SmcrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Runs the full two-branch adaptation. The target dataset must carry
/// ground-truth identities (they are withheld from training and used only
/// for the reported metrics). On success `out_b1`/`out_b2` receive the two
/// branch encoders and `metrics` the final-epoch retrieval quality.
#[no_mangle]
pub unsafe extern "C" fn smcr_adapt(
    cfg: *const SmcrConfig,
    pretrained: *const SmcrEncoder,
    source: *const SmcrDataset,
    target: *const SmcrDataset,
    out_b1: *mut *mut SmcrEncoder,
    out_b2: *mut *mut SmcrEncoder,
    metrics: *mut SmcrMetrics,
) -> SmcrStatus {
    let out_b1 = out_arg!(out_b1);
    let out_b2 = out_arg!(out_b2);
    let metrics = out_arg!(metrics);
    let cfg = handle_arg!(cfg);
    let pretrained = handle_arg!(pretrained);
    let source = handle_arg!(source);
    let target = handle_arg!(target);
    match adapt(pretrained, source, target, cfg) {
        Ok((b1, b2, report)) => {
            *metrics = metrics_of(&report);
            *out_b1 = Box::into_raw(Box::new(SmcrEncoder(b1.encoder)));
            *out_b2 = Box::into_raw(Box::new(SmcrEncoder(b2.encoder)));
            SmcrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Evaluates a pair of branch encoders on a labeled target dataset with the
/// score-fusion weight `alpha`.
#[no_mangle]
pub unsafe extern "C" fn smcr_evaluate(
    b1: *const SmcrEncoder,
    b2: *const SmcrEncoder,
    target: *const SmcrDataset,
    alpha: f64,
    metrics: *mut SmcrMetrics,
) -> SmcrStatus {
    let metrics = out_arg!(metrics);
    let b1 = handle_arg!(b1);
    let b2 = handle_arg!(b2);
    let target = handle_arg!(target);
    match final_report(b1, b2, target, alpha, Vec::new()) {
        Ok(report) => {
            *metrics = metrics_of(&report);
            SmcrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Writes an encoder to the text format used by the CLI stages.
#[no_mangle]
pub unsafe extern "C" fn smcr_encoder_save(
    enc: *const SmcrEncoder,
    path: *const c_char,
) -> SmcrStatus {
    let enc = handle_arg!(enc);
    let path = match utf8_arg(path) {
        Ok(s) => s,
        Err(st) => return st,
    };
    match save_encoder(enc, Path::new(path)) {
        Ok(()) => SmcrStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Loads an encoder written by `smcr_encoder_save` or the CLI.
#[no_mangle]
pub unsafe extern "C" fn smcr_encoder_load(
    path: *const c_char,
    out: *mut *mut SmcrEncoder,
) -> SmcrStatus {
    let out = out_arg!(out);
    let path = match utf8_arg(path) {
        Ok(s) => s,
        Err(st) => return st,
    };
    match load_encoder(Path::new(path)) {
        Ok(enc) => {
            *out = Box::into_raw(Box::new(SmcrEncoder(enc)));
            SmcrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn smcr_encoder_free(enc: *mut SmcrEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}
