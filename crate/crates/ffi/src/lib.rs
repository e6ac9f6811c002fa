//! C ABI over the simulator core.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Every fallible call returns a [`QnetStatus`];
//! on failure [`qnet_last_error_message`] describes the error on the calling
//! thread. Strings handed out by the library must be released with
//! [`qnet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use qnet::cli::{run_config, RunConfig};
use qnet::gates::{apply_gate, Gate, GateKind};
use qnet::qstream::{EnsembleStore, StreamOptions};
use qnet::{Error, Precision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Index = 3,
    Size = 4,
    Numerical = 5,
    Configuration = 6,
    RunFailed = 7,
    Resource = 8,
    Io = 9,
    Panic = 10,
}

pub const QNET_GATE_H: u32 = 0;
pub const QNET_GATE_X: u32 = 1;
pub const QNET_GATE_Y: u32 = 2;
pub const QNET_GATE_Z: u32 = 3;
pub const QNET_GATE_RX: u32 = 4;
pub const QNET_GATE_RY: u32 = 5;
pub const QNET_GATE_RZ: u32 = 6;
pub const QNET_GATE_PHASE: u32 = 7;
pub const QNET_GATE_CNOT: u32 = 8;
pub const QNET_GATE_CPHASE: u32 = 9;
/// Controlled 2x2 unitary; params are the 8 reals `re00, im00, re01, im01,
/// re10, im10, re11, im11`.
pub const QNET_GATE_CU: u32 = 10;
pub const QNET_GATE_SWAP: u32 = 11;
pub const QNET_GATE_TOFFOLI: u32 = 12;

/// Ensemble of identically shaped density matrices.
pub struct QnetStream {
    inner: Arc<EnsembleStore>,
}

/// Seeded random source for measurements.
pub struct QnetRng {
    inner: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QnetStatus {
    match e {
        Error::Index(_) => QnetStatus::Index,
        Error::Size { .. } => QnetStatus::Size,
        Error::Numerical(_) => QnetStatus::Numerical,
        Error::Configuration(_) => QnetStatus::Configuration,
        Error::Resource(_) => QnetStatus::Resource,
        Error::Io(_) | Error::Json(_) => QnetStatus::Io,
        Error::AgentFailed { .. }
        | Error::AgentPanicked { .. }
        | Error::Deadlock { .. }
        | Error::Aborted
        | Error::BrokenLink { .. }
        | Error::Routing { .. }
        | Error::HolderViolation(_) => QnetStatus::RunFailed,
        _ => QnetStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (QnetStatus, String)>) -> QnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QnetStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside qnet".into());
            QnetStatus::Panic
        }
    }
}

fn fail(e: Error) -> (QnetStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (QnetStatus, String) {
    (QnetStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to a live `T` not mutated elsewhere for `'a`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (QnetStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or point to `len` readable `T`s.
unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (QnetStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn gate_kind(code: u32) -> Option<GateKind> {
    GateKind::ALL.get(code as usize).copied()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Allocates `count` systems of `system_size` qubits, each in |0...0>.
/// `single_precision` selects 32-bit components.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn qnet_stream_new(
    system_size: usize,
    count: usize,
    single_precision: bool,
    out: *mut *mut QnetStream,
) -> QnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let precision = if single_precision { Precision::Single } else { Precision::Double };
        let options = StreamOptions { precision, ..StreamOptions::default() };
        let inner = EnsembleStore::with_options(system_size, count, options).map_err(fail)?;
        *out = Box::into_raw(Box::new(QnetStream { inner }));
        Ok(())
    })
}

/// # Safety
/// `stream` must be null or a handle from [`qnet_stream_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qnet_stream_free(stream: *mut QnetStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Number of systems; 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qnet_stream_len(stream: *const QnetStream) -> usize {
    stream.as_ref().map_or(0, |s| s.inner.len())
}

/// Qubits per system; 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qnet_stream_system_size(stream: *const QnetStream) -> usize {
    stream.as_ref().map_or(0, |s| s.inner.system_size())
}

/// Payload bytes of the whole block: systems x 4^N x component size.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qnet_stream_block_bytes(stream: *const QnetStream) -> usize {
    stream.as_ref().map_or(0, |s| s.inner.block_bytes())
}

/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn qnet_rng_new(seed: u64, out: *mut *mut QnetRng) -> QnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(QnetRng { inner: ChaCha8Rng::seed_from_u64(seed) }));
        Ok(())
    })
}

/// # Safety
/// `rng` must be null or a handle from [`qnet_rng_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qnet_rng_free(rng: *mut QnetRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Applies gate `gate` (a `QNET_GATE_*` code) to qubit positions `targets`
/// of system `system`.
///
/// # Safety
/// `stream` must be a live handle; `targets` and `params` must point to
/// `n_targets` and `n_params` elements (or be null when the count is 0).
#[no_mangle]
pub unsafe extern "C" fn qnet_apply_gate(
    stream: *mut QnetStream,
    system: usize,
    gate: u32,
    targets: *const usize,
    n_targets: usize,
    params: *const f64,
    n_params: usize,
) -> QnetStatus {
    guard(|| {
        let stream = deref(stream, "stream")?;
        let targets = slice_in(targets, n_targets, "targets")?;
        let params = slice_in(params, n_params, "params")?;
        let kind = gate_kind(gate).ok_or((QnetStatus::InvalidArgument, format!("unknown gate code {gate}")))?;
        let gate = Gate::from_parts(kind, params).map_err(fail)?;
        let qubits =
            targets.iter().map(|&t| stream.inner.qubit(system, t)).collect::<Result<Vec<_>, _>>().map_err(fail)?;
        let refs: Vec<_> = qubits.iter().collect();
        apply_gate(&gate, &refs).map_err(fail)
    })
}

/// Measures one qubit in the computational basis and collapses its system.
///
/// # Safety
/// `stream` and `rng` must be live handles; `bit` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnet_measure(
    stream: *mut QnetStream,
    system: usize,
    qubit: usize,
    rng: *mut QnetRng,
    bit: *mut u8,
) -> QnetStatus {
    guard(|| {
        let stream = deref(stream, "stream")?;
        let rng = rng.as_mut().ok_or_else(|| null("rng"))?;
        if bit.is_null() {
            return Err(null("bit"));
        }
        let q = stream.inner.qubit(system, qubit).map_err(fail)?;
        *bit = q.measure(&mut rng.inner).map_err(fail)?;
        Ok(())
    })
}

/// Copies the density matrix of `system` into `out` as row-major
/// interleaved (re, im) doubles; `out_len` must be at least `2 * 4^N`.
///
/// # Safety
/// `stream` must be a live handle; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qnet_read_state(
    stream: *const QnetStream,
    system: usize,
    out: *mut f64,
    out_len: usize,
) -> QnetStatus {
    guard(|| {
        let stream = deref(stream, "stream")?;
        let need = 2 * stream.inner.entries_per_system();
        if out_len < need {
            return Err((QnetStatus::InvalidArgument, format!("output holds {out_len} doubles, need {need}")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let state = stream.inner.snapshot(system).map_err(fail)?;
        let dense = state.to_dense();
        let out = slice::from_raw_parts_mut(out, need);
        let d = dense.nrows();
        for r in 0..d {
            for c in 0..d {
                let z = dense[(r, c)];
                out[2 * (r * d + c)] = z.re;
                out[2 * (r * d + c) + 1] = z.im;
            }
        }
        Ok(())
    })
}

/// Runs a demo described by a TOML run-config and hands back the result
/// table and report as a JSON string, to be released with
/// [`qnet_string_free`].
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn qnet_run_demo_json(config_toml: *const c_char, out_json: *mut *mut c_char) -> QnetStatus {
    guard(|| {
        if config_toml.is_null() {
            return Err(null("config_toml"));
        }
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let text = CStr::from_ptr(config_toml)
            .to_str()
            .map_err(|e| (QnetStatus::InvalidArgument, format!("config is not UTF-8: {e}")))?;
        let config = RunConfig::from_toml(text).map_err(fail)?;
        let output = run_config(config).map_err(fail)?;
        let json = serde_json::to_string(&output.to_json()).map_err(|e| fail(e.into()))?;
        *out_json = CString::new(json).map_err(|e| (QnetStatus::Io, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
