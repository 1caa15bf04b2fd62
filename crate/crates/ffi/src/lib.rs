//! C interface to `stark-core`.
//!
//! Matrices cross the boundary as dense row-major `double` arrays of
//! `n * n` elements. An engine handle carries the worker count and seed and
//! keeps the stage metrics of its most recent run. Every function returns a
//! [`StarkStatus`]; on failure a description is available from
//! [`stark_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stark_core::costmodel::{self, Algo, CostParams};
use stark_core::driver::{self, Algorithm, RunConfig};
use stark_core::{Dense, Error, LeafKernel, StageMetrics};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ResourceLimit = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarkAlgorithm {
    Stark = 0,
    NaiveBlockJoin = 1,
    NaiveBlockCogroup = 2,
    SerialStrassen = 3,
    SerialNaive = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarkCostModel {
    Mllib = 0,
    Marlin = 1,
    Stark = 2,
}

/// Counters of one executed stage.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StarkStageMetrics {
    pub stage_id: u64,
    pub tasks: u64,
    pub records_in: u64,
    pub records_out: u64,
    pub shuffled_elements: u64,
    pub flops: u64,
    pub wall_ms: f64,
}

/// Opaque engine handle.
pub struct StarkEngine {
    workers: usize,
    seed: u64,
    last_stages: Vec<StageMetrics>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> StarkStatus {
    match e {
        Error::MemoryGuard { .. } => StarkStatus::ResourceLimit,
        Error::DimensionMismatch(_) | Error::BlockLargerThanMatrix { .. } => {
            StarkStatus::DimensionMismatch
        }
        Error::NotPowerOfTwo { .. }
        | Error::InvalidThreshold { .. }
        | Error::InvalidParams(_)
        | Error::EmptyRange => StarkStatus::InvalidArgument,
        _ => StarkStatus::Internal,
    }
}

fn fail(status: StarkStatus, msg: impl Into<String>) -> StarkStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning errors and panics into a status plus a message.
fn guarded(f: impl FnOnce() -> Result<(), StarkStatus>) -> StarkStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StarkStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(StarkStatus::Internal, "internal panic"),
    }
}

fn core_error(e: Error) -> StarkStatus {
    fail(status_of(&e), e.to_string())
}

impl From<StarkAlgorithm> for Algorithm {
    fn from(a: StarkAlgorithm) -> Self {
        match a {
            StarkAlgorithm::Stark => Algorithm::Stark,
            StarkAlgorithm::NaiveBlockJoin => Algorithm::NaiveBlockJoin,
            StarkAlgorithm::NaiveBlockCogroup => Algorithm::NaiveBlockCogroup,
            StarkAlgorithm::SerialStrassen => Algorithm::SerialStrassen,
            StarkAlgorithm::SerialNaive => Algorithm::SerialNaive,
        }
    }
}

impl From<StarkCostModel> for Algo {
    fn from(m: StarkCostModel) -> Self {
        match m {
            StarkCostModel::Mllib => Algo::Mllib,
            StarkCostModel::Marlin => Algo::Marlin,
            StarkCostModel::Stark => Algo::Stark,
        }
    }
}

/// Creates an engine with `workers` threads (0 selects the machine's
/// parallelism).
#[no_mangle]
pub extern "C" fn stark_engine_new(workers: usize, seed: u64) -> *mut StarkEngine {
    clear_error();
    let workers = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    Box::into_raw(Box::new(StarkEngine {
        workers,
        seed,
        last_stages: Vec::new(),
    }))
}

/// Releases an engine. NULL is ignored.
///
/// # Safety
/// `engine` must come from [`stark_engine_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stark_engine_free(engine: *mut StarkEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Worker threads used by `engine`, or 0 for NULL.
///
/// # Safety
/// `engine` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stark_engine_workers(engine: *const StarkEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.workers)
}

/// Computes `out = a * b` for `n x n` row-major matrices. `block_size` is
/// the block side of the distributed algorithms and the recursion cutoff of
/// serial Strassen. `leaf_multiplies` may be NULL.
///
/// # Safety
/// `a`, `b` and `out` must each point to `n * n` doubles; `out` must not
/// alias the inputs. `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn stark_multiply(
    engine: *mut StarkEngine,
    algorithm: StarkAlgorithm,
    a: *const f64,
    b: *const f64,
    n: usize,
    block_size: usize,
    out: *mut f64,
    leaf_multiplies: *mut u64,
) -> StarkStatus {
    guarded(|| {
        let engine = engine
            .as_mut()
            .ok_or_else(|| fail(StarkStatus::NullPointer, "engine is NULL"))?;
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(fail(StarkStatus::NullPointer, "matrix pointer is NULL"));
        }
        let len = n
            .checked_mul(n)
            .ok_or_else(|| fail(StarkStatus::InvalidArgument, "n * n overflows"))?;
        let algorithm = Algorithm::from(algorithm);
        let cap = driver::memory_cap().map_err(core_error)?;
        driver::check_memory(algorithm, n, block_size, cap).map_err(core_error)?;

        let da = Dense::from_vec(n, std::slice::from_raw_parts(a, len).to_vec()).map_err(core_error)?;
        let db = Dense::from_vec(n, std::slice::from_raw_parts(b, len).to_vec()).map_err(core_error)?;
        let cfg = RunConfig {
            algorithm,
            block_size,
            workers: engine.workers,
            seed: engine.seed,
            kernel: LeafKernel::Naive,
        };
        let outcome = driver::run(&da, &db, &cfg).map_err(core_error)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(outcome.product.as_slice());
        if let Some(l) = leaf_multiplies.as_mut() {
            *l = outcome.leaf_multiplies;
        }
        engine.last_stages = outcome.stages;
        Ok(())
    })
}

/// Stages executed by the engine's most recent run (0 for serial runs or
/// a NULL handle).
///
/// # Safety
/// `engine` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stark_stage_count(engine: *const StarkEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.last_stages.len())
}

/// Copies the counters of stage `index` (0-based) of the most recent run.
///
/// # Safety
/// `engine` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stark_stage_metrics(
    engine: *const StarkEngine,
    index: usize,
    out: *mut StarkStageMetrics,
) -> StarkStatus {
    guarded(|| {
        let engine = engine
            .as_ref()
            .ok_or_else(|| fail(StarkStatus::NullPointer, "engine is NULL"))?;
        let out = out
            .as_mut()
            .ok_or_else(|| fail(StarkStatus::NullPointer, "output is NULL"))?;
        let s = engine.last_stages.get(index).ok_or_else(|| {
            fail(
                StarkStatus::InvalidArgument,
                format!("stage {index} out of range ({} stages)", engine.last_stages.len()),
            )
        })?;
        *out = StarkStageMetrics {
            stage_id: s.stage_id as u64,
            tasks: s.tasks,
            records_in: s.records_in,
            records_out: s.records_out,
            shuffled_elements: s.shuffled_elements,
            flops: s.flops,
            wall_ms: s.wall_ms,
        };
        Ok(())
    })
}

/// Writes the NUL-terminated label of stage `index` into `buf`. Fails with
/// `BufferTooSmall` when `capacity` cannot hold it.
///
/// # Safety
/// `engine` must be a live handle and `buf` writable for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn stark_stage_label(
    engine: *const StarkEngine,
    index: usize,
    buf: *mut c_char,
    capacity: usize,
) -> StarkStatus {
    guarded(|| {
        let engine = engine
            .as_ref()
            .ok_or_else(|| fail(StarkStatus::NullPointer, "engine is NULL"))?;
        if buf.is_null() {
            return Err(fail(StarkStatus::NullPointer, "buffer is NULL"));
        }
        let label = &engine
            .last_stages
            .get(index)
            .ok_or_else(|| fail(StarkStatus::InvalidArgument, format!("stage {index} out of range")))?
            .label;
        if label.len() + 1 > capacity {
            return Err(fail(
                StarkStatus::BufferTooSmall,
                format!("label needs {} bytes", label.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(label.as_ptr().cast::<c_char>(), buf, label.len());
        *buf.add(label.len()) = 0;
        Ok(())
    })
}

/// Total modelled cost in abstract units for an `n x n` product split
/// `splits` ways per side on `cores` cores.
///
/// # Safety
/// `total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stark_cost_total(
    model: StarkCostModel,
    n: u64,
    splits: u64,
    cores: u64,
    total: *mut f64,
) -> StarkStatus {
    guarded(|| {
        let total = total
            .as_mut()
            .ok_or_else(|| fail(StarkStatus::NullPointer, "output is NULL"))?;
        let params = CostParams::new(n, splits, cores).map_err(core_error)?;
        let value = costmodel::cost(model.into(), &params).total();
        *total = num_traits::ToPrimitive::to_f64(&value).unwrap_or(f64::INFINITY);
        Ok(())
    })
}

/// Stage count of a distributed Strassen run with `splits` blocks per side.
///
/// # Safety
/// `stages` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stark_model_stage_count(n: u64, splits: u64, stages: *mut u32) -> StarkStatus {
    guarded(|| {
        let stages = stages
            .as_mut()
            .ok_or_else(|| fail(StarkStatus::NullPointer, "output is NULL"))?;
        let params = CostParams::new(n, splits, 1).map_err(core_error)?;
        *stages = costmodel::stages_stark(&params);
        Ok(())
    })
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn stark_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
