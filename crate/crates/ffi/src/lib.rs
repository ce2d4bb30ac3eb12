//! C ABI over the selector.
//!
//! Every function returns an [`SrasStatus`]; on failure a description is
//! available from [`sras_last_error`] on the same thread. Models and
//! embedding stores are opaque handles owned by the caller and released with
//! their `*_free` function. Vectors cross the boundary as `float` arrays;
//! candidate matrices are row-major `n × d`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sras::dataio::{read_embedding_store, EmbeddingStore};
use sras::evalbench::cosine_topk;
use sras::policy::argmax_topk;
use sras::reward::{mix, relaxed_f1, RewardConfig};
use sras::scorer::{load_params, save_params, SelectorParams};
use sras::trainer::init_params;
use sras::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Format = 4,
    Data = 5,
    Io = 6,
    Config = 7,
    Training = 8,
    Reward = 9,
    InvalidUtf8 = 10,
    Panic = 11,
}

/// Opaque scorer parameters.
pub struct SrasModel {
    params: SelectorParams,
}

/// Opaque embedding store.
pub struct SrasStore {
    store: EmbeddingStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SrasStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape(_) => SrasStatus::Shape,
            Error::Argument(_) => SrasStatus::InvalidArgument,
            Error::Format { .. } => SrasStatus::Format,
            Error::Data(_) => SrasStatus::Data,
            Error::Training(_) => SrasStatus::Training,
            Error::Reward { .. } => SrasStatus::Reward,
            Error::Config(_) => SrasStatus::Config,
            Error::Io { .. } => SrasStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: SrasStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SrasStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SrasStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            SrasStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(SrasStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(SrasStatus::NullPointer, format!("{name} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(SrasStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SrasStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SrasStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(SrasStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Query and candidate matrix as f64 rows.
unsafe fn candidates(
    query: *const f32,
    docs: *const f32,
    d: usize,
    n: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), Failure> {
    let q = widen(slice(query, d, "query")?);
    let total = n
        .checked_mul(d)
        .ok_or_else(|| fail(SrasStatus::InvalidArgument, "n * d overflows"))?;
    let flat = slice(docs, total, "docs")?;
    let rows = if d == 0 {
        vec![Vec::new(); n]
    } else {
        flat.chunks_exact(d).map(widen).collect()
    };
    Ok((q, rows))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sras_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sras_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sras_model_load(path: *const c_char, out: *mut *mut SrasModel) -> SrasStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = load_params(Path::new(c_str(path, "path")?))?;
        *out = Box::into_raw(Box::new(SrasModel { params }));
        Ok(())
    })
}

/// Fresh seeded parameters with embedding size `d` and hidden size `h`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sras_model_new_random(d: usize, h: usize, seed: u64, out: *mut *mut SrasModel) -> SrasStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = init_params(d, h, seed)?;
        *out = Box::into_raw(Box::new(SrasModel { params }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sras_model_free(model: *mut SrasModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sras_model_dims(model: *const SrasModel, d: *mut usize, h: *mut usize) -> SrasStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        *out_ptr(d, "d")? = m.params.d();
        *out_ptr(h, "h")? = m.params.h();
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sras_model_param_count(model: *const SrasModel, count: *mut usize) -> SrasStatus {
    guard(|| {
        *out_ptr(count, "count")? = non_null(model, "model")?.params.param_count();
        Ok(())
    })
}

/// Writes the model file atomically.
///
/// # Safety
/// `model` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sras_model_save(model: *const SrasModel, path: *const c_char) -> SrasStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        save_params(&m.params, Path::new(c_str(path, "path")?))?;
        Ok(())
    })
}

/// Scores `n` candidates (`docs`, row-major `n × d`) for `query` (length
/// `d`) into `scores` (length `n`).
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn sras_model_score(
    model: *const SrasModel,
    query: *const f32,
    docs: *const f32,
    d: usize,
    n: usize,
    scores: *mut f32,
) -> SrasStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let (q, rows) = candidates(query, docs, d, n)?;
        let views: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let s = m.params.score_candidates(&q, &views)?;
        for (o, v) in slice_mut(scores, n, "scores")?.iter_mut().zip(s.iter()) {
            *o = *v as f32;
        }
        Ok(())
    })
}

/// Indices of the `k` highest-scoring candidates, best first, ties to the
/// lower index.
///
/// # Safety
/// Buffers must hold the stated number of elements; `indices` holds `k`.
#[no_mangle]
pub unsafe extern "C" fn sras_model_select_topk(
    model: *const SrasModel,
    query: *const f32,
    docs: *const f32,
    d: usize,
    n: usize,
    k: usize,
    indices: *mut usize,
) -> SrasStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let (q, rows) = candidates(query, docs, d, n)?;
        let views: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let action = argmax_topk(&m.params.score_candidates(&q, &views)?, k)?;
        slice_mut(indices, k, "indices")?.copy_from_slice(&action.indices);
        Ok(())
    })
}

/// Top-k candidates by cosine similarity to `query`.
///
/// # Safety
/// Buffers must hold the stated number of elements; `indices` holds `k`.
#[no_mangle]
pub unsafe extern "C" fn sras_cosine_topk(
    query: *const f32,
    docs: *const f32,
    d: usize,
    n: usize,
    k: usize,
    indices: *mut usize,
) -> SrasStatus {
    guard(|| {
        let (q, rows) = candidates(query, docs, d, n)?;
        let views: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let action = cosine_topk(&q, &views, k)?;
        slice_mut(indices, k, "indices")?.copy_from_slice(&action.indices);
        Ok(())
    })
}

/// Loads an embedding store file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sras_store_load(path: *const c_char, out: *mut *mut SrasStore) -> SrasStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let store = read_embedding_store(Path::new(c_str(path, "path")?))?;
        *out = Box::into_raw(Box::new(SrasStore { store }));
        Ok(())
    })
}

/// Releases a store. Null is ignored.
///
/// # Safety
/// `store` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sras_store_free(store: *mut SrasStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sras_store_info(store: *const SrasStore, count: *mut usize, dim: *mut usize) -> SrasStatus {
    guard(|| {
        let s = non_null(store, "store")?;
        *out_ptr(count, "count")? = s.store.len();
        *out_ptr(dim, "dim")? = s.store.dim();
        Ok(())
    })
}

/// Copies the vector stored under `id` into `out` (length `dim`).
///
/// # Safety
/// `id` must be NUL-terminated and `out` hold `dim` floats.
#[no_mangle]
pub unsafe extern "C" fn sras_store_get(
    store: *const SrasStore,
    id: *const c_char,
    out: *mut f32,
    dim: usize,
) -> SrasStatus {
    guard(|| {
        let s = non_null(store, "store")?;
        if dim != s.store.dim() {
            return Err(fail(
                SrasStatus::Shape,
                format!("buffer holds {dim} floats, store dimension is {}", s.store.dim()),
            ));
        }
        let v = s.store.require(c_str(id, "id")?)?;
        for (o, x) in slice_mut(out, dim, "out")?.iter_mut().zip(v) {
            *o = *x as f32;
        }
        Ok(())
    })
}

/// Selects `k` of the `n` documents named by `candidate_ids` for the query
/// stored under `query_id`, writing candidate positions to `indices`.
///
/// # Safety
/// `candidate_ids` holds `n` NUL-terminated strings; `indices` holds `k`.
#[no_mangle]
pub unsafe extern "C" fn sras_model_select_ids(
    model: *const SrasModel,
    store: *const SrasStore,
    query_id: *const c_char,
    candidate_ids: *const *const c_char,
    n: usize,
    k: usize,
    indices: *mut usize,
) -> SrasStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let s = &non_null(store, "store")?.store;
        let q = s.require(c_str(query_id, "query_id")?)?;
        let ids = slice(candidate_ids, n, "candidate_ids")?;
        let docs = ids
            .iter()
            .map(|&p| Ok(s.require(c_str(p, "candidate id")?)?))
            .collect::<Result<Vec<_>, Failure>>()?;
        let action = argmax_topk(&m.params.score_candidates(q, &docs)?, k)?;
        slice_mut(indices, k, "indices")?.copy_from_slice(&action.indices);
        Ok(())
    })
}

/// Token-level F1 after answer normalization with the default stopwords.
///
/// # Safety
/// Strings must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sras_relaxed_f1(
    prediction: *const c_char,
    reference: *const c_char,
    out: *mut f64,
) -> SrasStatus {
    guard(|| {
        let cfg = RewardConfig::default();
        let v = relaxed_f1(c_str(prediction, "prediction")?, c_str(reference, "reference")?, &cfg);
        *out_ptr(out, "out")? = v;
        Ok(())
    })
}

/// `alpha · f1 + (1 - alpha) · semantic`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sras_hybrid_reward(f1: f64, semantic: f64, alpha: f64, out: *mut f64) -> SrasStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(fail(SrasStatus::InvalidArgument, format!("alpha must lie in [0, 1], got {alpha}")));
        }
        *out_ptr(out, "out")? = mix(alpha, f1, semantic);
        Ok(())
    })
}
