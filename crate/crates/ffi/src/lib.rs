//! C ABI over the cascade band filter, the isochronal store and the event
//! gate.
//!
//! Every fallible call returns a [`CaStatus`]; on failure the message is
//! kept per thread and can be copied out with [`ca_last_error_message`].
//! Handles are opaque and must be released with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cascade_activity::events::{DetectorStub, GateParams, GateRunner};
use cascade_activity::isochron::IsochronalStore;
use cascade_activity::motion::{MotionBlock, MotionFrame, DIRECTIONS};
use cascade_activity::pipeline::CameraPipeline;
use cascade_activity::tfilter::{alpha_from_decay, BandFilter, BandParams};
use cascade_activity::Error;

/// Direction bins per block.
pub const CA_DIRECTIONS: usize = 8;
const _: () = assert!(CA_DIRECTIONS == DIRECTIONS);

/// Minutes in a day; valid store slots are `0..CA_MINUTES_PER_DAY`.
pub const CA_MINUTES_PER_DAY: usize = 1440;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    RejectedInput = 3,
    InvalidInput = 4,
    Query = 5,
    Corrupt = 6,
    Io = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// Motion features of one block, laid out as in the library.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CaBlock {
    pub density: f64,
    pub dir_hist: [f64; CA_DIRECTIONS],
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CaBandParams {
    pub t_l1_s: f64,
    pub t_l2_days: f64,
    pub t_s1_s: f64,
    pub t_s2_s: f64,
    pub frame_rate: f64,
    pub shortterm_rate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CaGateParams {
    pub k_sigma: f64,
    pub cooldown_s: f64,
    pub min_threshold: f64,
    pub min_days: u32,
    pub reinvoke_every_s: f64,
}

/// Result of one gate tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CaDecision {
    pub fire: bool,
    pub onset: bool,
    pub activity: f64,
    pub threshold: f64,
}

/// Opaque cascade filter plus per-minute store learner.
pub struct CaFilter {
    inner: CameraPipeline,
    grid: (usize, usize),
}

/// Opaque isochronal store.
pub struct CaStore {
    inner: IsochronalStore,
}

/// Opaque event gate.
pub struct CaGate {
    inner: GateRunner,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: CaStatus, msg: impl Into<String>) -> CaStatus {
    set_error(msg.into());
    status
}

fn status_of(err: &Error) -> CaStatus {
    match err {
        Error::InvalidParameter(_) | Error::Config { .. } => CaStatus::InvalidParameter,
        Error::RejectedInput(_) => CaStatus::RejectedInput,
        Error::InvalidInput(_) | Error::Json(_) => CaStatus::InvalidInput,
        Error::Query(_) => CaStatus::Query,
        Error::Corrupt { .. } => CaStatus::Corrupt,
        Error::Io { .. } => CaStatus::Io,
    }
}

/// Runs `f`, mapping library errors and panics onto status codes.
fn guard(f: impl FnOnce() -> Result<(), CaStatus>) -> CaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CaStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(CaStatus::Internal, "panic inside library call"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, CaStatus>;
}

impl<T> OrStatus<T> for cascade_activity::Result<T> {
    fn or_status(self) -> Result<T, CaStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), CaStatus> {
    if p.is_null() {
        Err(fail(CaStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, CaStatus> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CaStatus::InvalidInput, format!("{name} is not valid UTF-8")))
}

unsafe fn read_frame(blocks: *const CaBlock, n_blocks: usize, grid: (usize, usize), timestamp_ms: u64) -> Result<MotionFrame, CaStatus> {
    non_null(blocks, "blocks")?;
    if n_blocks != grid.0 * grid.1 {
        return Err(fail(
            CaStatus::RejectedInput,
            format!("expected {} blocks for a {}x{} grid, got {n_blocks}", grid.0 * grid.1, grid.0, grid.1),
        ));
    }
    let src = std::slice::from_raw_parts(blocks, n_blocks);
    let blocks = src
        .iter()
        .map(|b| MotionBlock {
            density: b.density,
            dir_hist: b.dir_hist,
        })
        .collect();
    MotionFrame::new(grid.0, grid.1, blocks, timestamp_ms).or_status()
}

/// Copies `frame` into `out` when `out` is non-null.
unsafe fn write_frame(frame: &MotionFrame, out: *mut CaBlock) {
    if out.is_null() {
        return;
    }
    let dst = std::slice::from_raw_parts_mut(out, frame.blocks.len());
    for (d, b) in dst.iter_mut().zip(&frame.blocks) {
        *d = CaBlock {
            density: b.density,
            dir_hist: b.dir_hist,
        };
    }
}

impl From<CaBandParams> for BandParams {
    fn from(p: CaBandParams) -> Self {
        BandParams {
            t_l1_s: p.t_l1_s,
            t_l2_days: p.t_l2_days,
            t_s1_s: p.t_s1_s,
            t_s2_s: p.t_s2_s,
            frame_rate: p.frame_rate,
            shortterm_rate: p.shortterm_rate,
        }
    }
}

impl From<BandParams> for CaBandParams {
    fn from(p: BandParams) -> Self {
        CaBandParams {
            t_l1_s: p.t_l1_s,
            t_l2_days: p.t_l2_days,
            t_s1_s: p.t_s1_s,
            t_s2_s: p.t_s2_s,
            frame_rate: p.frame_rate,
            shortterm_rate: p.shortterm_rate,
        }
    }
}

impl From<CaGateParams> for GateParams {
    fn from(p: CaGateParams) -> Self {
        GateParams {
            k_sigma: p.k_sigma,
            cooldown_s: p.cooldown_s,
            min_threshold: p.min_threshold,
            min_days: p.min_days,
            reinvoke_every_s: p.reinvoke_every_s,
        }
    }
}

impl From<GateParams> for CaGateParams {
    fn from(p: GateParams) -> Self {
        CaGateParams {
            k_sigma: p.k_sigma,
            cooldown_s: p.cooldown_s,
            min_threshold: p.min_threshold,
            min_days: p.min_days,
            reinvoke_every_s: p.reinvoke_every_s,
        }
    }
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string and returns the full message length in bytes,
/// excluding the terminator. The copy is truncated when `len` is too small;
/// pass `buf = NULL` to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ca_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn ca_status_str(status: CaStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        CaStatus::Ok => b"ok\0",
        CaStatus::NullPointer => b"null pointer\0",
        CaStatus::InvalidParameter => b"invalid parameter\0",
        CaStatus::RejectedInput => b"rejected input\0",
        CaStatus::InvalidInput => b"invalid input\0",
        CaStatus::Query => b"query error\0",
        CaStatus::Corrupt => b"corrupt store\0",
        CaStatus::Io => b"i/o error\0",
        CaStatus::BufferTooSmall => b"buffer too small\0",
        CaStatus::Internal => b"internal error\0",
    };
    s.as_ptr().cast()
}

/// Filter coefficient that decays an impulse to 10% after `duration`
/// time units at `rate` samples per unit.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn ca_alpha_from_decay(rate: f64, duration: f64, out: *mut f64) -> CaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = alpha_from_decay(rate, duration).or_status()?;
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ca_band_params_default(out: *mut CaBandParams) -> CaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = BandParams::default().into();
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ca_gate_params_default(out: *mut CaGateParams) -> CaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = GateParams::default().into();
        Ok(())
    })
}

/// Creates a cascade filter for a `grid_w` x `grid_h` block grid.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ca_filter_new(grid_w: usize, grid_h: usize, params: *const CaBandParams, out: *mut *mut CaFilter) -> CaStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let inner = CameraPipeline::new(grid_w, grid_h, &(*params).into()).or_status()?;
        *out = Box::into_raw(Box::new(CaFilter {
            inner,
            grid: (grid_w, grid_h),
        }));
        Ok(())
    })
}

/// # Safety
/// `filter` must be null or a handle from [`ca_filter_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_filter_free(filter: *mut CaFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Feeds one frame of `n_blocks` row-major blocks. Each non-null output
/// buffer receives `n_blocks` blocks of the matching band; `short_tick`
/// reports whether the short-term bands were recomputed. When `store` is
/// non-null the frame's `m_L1` is also learned into it, one update per
/// completed minute.
///
/// # Safety
/// `filter` must be a live handle, `blocks` must point to `n_blocks`
/// readable blocks, each non-null output must have room for `n_blocks`
/// blocks, and `store` must be null or a live store handle.
#[no_mangle]
pub unsafe extern "C" fn ca_filter_step(
    filter: *mut CaFilter,
    timestamp_ms: u64,
    blocks: *const CaBlock,
    n_blocks: usize,
    store: *mut CaStore,
    m_l1: *mut CaBlock,
    m_s1: *mut CaBlock,
    m_s2: *mut CaBlock,
    short_tick: *mut bool,
) -> CaStatus {
    guard(|| {
        non_null(filter, "filter")?;
        let f = &mut *filter;
        let frame = read_frame(blocks, n_blocks, f.grid, timestamp_ms)?;
        let out = if store.is_null() {
            f.inner.step(&frame).or_status()?
        } else {
            let s = &mut (*store).inner;
            if s.grid() != f.grid {
                return Err(fail(CaStatus::RejectedInput, "store grid differs from filter grid"));
            }
            f.inner.step_learn(&frame, s).or_status()?
        };
        write_frame(&out.m_l1, m_l1);
        write_frame(&out.m_s1, m_s1);
        write_frame(&out.m_s2, m_s2);
        if !short_tick.is_null() {
            *short_tick = out.short_tick;
        }
        Ok(())
    })
}

/// Flushes the pending minute of learned `m_L1` into `store`.
///
/// # Safety
/// `filter` and `store` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn ca_filter_flush(filter: *mut CaFilter, store: *mut CaStore) -> CaStatus {
    guard(|| {
        non_null(filter, "filter")?;
        non_null(store, "store")?;
        (*filter).inner.finish_learning(&mut (*store).inner).or_status()?;
        Ok(())
    })
}

/// Filter multiplies per fully-updated tick and filter state frames.
///
/// # Safety
/// `filter` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn ca_filter_counters(filter: *const CaFilter, multiplies: *mut u64, state_frames: *mut u64, full_ticks: *mut u64) -> CaStatus {
    guard(|| {
        non_null(filter, "filter")?;
        let c = (*filter).inner.filter().counters();
        if !multiplies.is_null() {
            *multiplies = c.multiplies;
        }
        if !state_frames.is_null() {
            *state_frames = c.state_frames;
        }
        if !full_ticks.is_null() {
            *full_ticks = c.full_ticks;
        }
        Ok(())
    })
}

/// Creates an empty store whose slots forget to 10% after `t_l2_days`.
///
/// # Safety
/// `camera_id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ca_store_new(camera_id: *const c_char, grid_w: usize, grid_h: usize, t_l2_days: f64, out: *mut *mut CaStore) -> CaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let id = c_str(camera_id, "camera_id")?;
        let inner = IsochronalStore::new(id, grid_w, grid_h, t_l2_days).or_status()?;
        *out = Box::into_raw(Box::new(CaStore { inner }));
        Ok(())
    })
}

/// Loads a store file written by [`ca_store_persist`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ca_store_load(path: *const c_char, out: *mut *mut CaStore) -> CaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let p = c_str(path, "path")?;
        let inner = IsochronalStore::load(Path::new(p)).or_status()?;
        *out = Box::into_raw(Box::new(CaStore { inner }));
        Ok(())
    })
}

/// Atomically writes the store to `path`.
///
/// # Safety
/// `store` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ca_store_persist(store: *const CaStore, path: *const c_char) -> CaStatus {
    guard(|| {
        non_null(store, "store")?;
        let p = c_str(path, "path")?;
        (*store).inner.persist(Path::new(p)).or_status()
    })
}

/// # Safety
/// `store` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_store_free(store: *mut CaStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Folds one sample into minute slot `minute`.
///
/// # Safety
/// `store` must be a live handle and `blocks` must point to `n_blocks`
/// readable blocks.
#[no_mangle]
pub unsafe extern "C" fn ca_store_update(store: *mut CaStore, minute: usize, blocks: *const CaBlock, n_blocks: usize) -> CaStatus {
    guard(|| {
        non_null(store, "store")?;
        let s = &mut (*store).inner;
        let frame = read_frame(blocks, n_blocks, s.grid(), 0)?;
        s.update(minute, &frame).or_status()
    })
}

/// Reads slot `minute`: per-block mean and standard deviation into the
/// non-null buffers of `n_blocks` blocks, and the number of days observed.
///
/// # Safety
/// `store` must be a live handle; each non-null buffer must have room for
/// `n_blocks` blocks.
#[no_mangle]
pub unsafe extern "C" fn ca_store_query(
    store: *const CaStore,
    minute: usize,
    mean: *mut CaBlock,
    std: *mut CaBlock,
    n_blocks: usize,
    days_observed: *mut u32,
) -> CaStatus {
    guard(|| {
        non_null(store, "store")?;
        let s = &(*store).inner;
        let snap = s.query(minute).or_status()?;
        if (!mean.is_null() || !std.is_null()) && n_blocks < snap.mean.blocks.len() {
            return Err(fail(
                CaStatus::BufferTooSmall,
                format!("need {} blocks, buffer holds {n_blocks}", snap.mean.blocks.len()),
            ));
        }
        write_frame(&snap.mean, mean);
        write_frame(&snap.std, std);
        if !days_observed.is_null() {
            *days_observed = snap.days_observed;
        }
        Ok(())
    })
}

/// Creates an event gate ticking every `tick_ms` milliseconds. The
/// detector behind it is a stub that reports no persons; only its
/// invocations are counted.
///
/// # Safety
/// `camera_id` must be a NUL-terminated string; `params` and `out` valid
/// pointers.
#[no_mangle]
pub unsafe extern "C" fn ca_gate_new(camera_id: *const c_char, params: *const CaGateParams, tick_ms: u64, out: *mut *mut CaGate) -> CaStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let id = c_str(camera_id, "camera_id")?;
        let inner = GateRunner::new(id, (*params).into(), tick_ms).or_status()?;
        *out = Box::into_raw(Box::new(CaGate { inner }));
        Ok(())
    })
}

/// # Safety
/// `gate` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_gate_free(gate: *mut CaGate) {
    if !gate.is_null() {
        drop(Box::from_raw(gate));
    }
}

/// Gates one short-term tick against the store statistics of the minute
/// containing `timestamp_ms`.
///
/// # Safety
/// `gate` and `store` must be live handles, `m_s1`/`m_s2` must point to
/// `n_blocks` readable blocks and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_gate_push(
    gate: *mut CaGate,
    store: *const CaStore,
    timestamp_ms: u64,
    m_s1: *const CaBlock,
    m_s2: *const CaBlock,
    n_blocks: usize,
    out: *mut CaDecision,
) -> CaStatus {
    guard(|| {
        non_null(gate, "gate")?;
        non_null(store, "store")?;
        non_null(out, "out")?;
        let s = &(*store).inner;
        let s1 = read_frame(m_s1, n_blocks, s.grid(), timestamp_ms)?;
        let s2 = read_frame(m_s2, n_blocks, s.grid(), timestamp_ms)?;
        let d = (*gate).inner.push(&s1, &s2, s, &DetectorStub::empty()).or_status()?;
        *out = CaDecision {
            fire: d.fire,
            onset: d.onset,
            activity: d.activity,
            threshold: d.threshold,
        };
        Ok(())
    })
}

/// Detector invocations so far.
///
/// # Safety
/// `gate` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ca_gate_invocations(gate: *const CaGate, out: *mut u64) -> CaStatus {
    guard(|| {
        non_null(gate, "gate")?;
        non_null(out, "out")?;
        *out = (*gate).inner.invocations();
        Ok(())
    })
}
