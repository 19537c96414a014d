//! C ABI over `mosaic-core`.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a
//! [`MosaicStatus`]; on failure, [`mosaic_last_error_message`] describes the
//! problem for the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use mosaic_core::dataset::load_manifest;
use mosaic_core::engines::{Backbone, EngineId, EngineSpec, RankedRecommendation, Recommender, DEFAULT_R};
use mosaic_core::metrics::{jaccard, rbo};
use mosaic_core::scoring::UserProfile;
use mosaic_core::selector::psi;
use mosaic_core::simharness::EvalProfile;
use mosaic_core::similarity::load_similarity_matrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MosaicStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    LoadFailed = 4,
    EngineFailed = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A collection with one or two registered similarity matrices.
pub struct MosaicEngine {
    recommender: Recommender,
}

/// One ranked recommendation set.
pub struct MosaicRecommendation {
    ids: Vec<CString>,
    scores: Vec<f64>,
    objective: f64,
    optimal: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type Outcome = Result<(), (MosaicStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> MosaicStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MosaicStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MosaicStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, (MosaicStatus, String)> {
    if p.is_null() {
        return Err((MosaicStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MosaicStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn text_list<'a>(p: *const *const c_char, n: usize, name: &str) -> Result<Vec<&'a str>, (MosaicStatus, String)> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err((MosaicStatus::NullPointer, format!("{name} is null")));
    }
    std::slice::from_raw_parts(p, n)
        .iter()
        .enumerate()
        .map(|(i, &s)| text(s, &format!("{name}[{i}]")))
        .collect()
}

fn invalid(e: impl std::fmt::Display) -> (MosaicStatus, String) {
    (MosaicStatus::InvalidArgument, e.to_string())
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn mosaic_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a manifest and matrix A (and optionally matrix B; pass NULL to
/// skip). On success `*out` owns a new engine.
#[no_mangle]
pub unsafe extern "C" fn mosaic_engine_open(
    manifest_path: *const c_char,
    matrix_a_path: *const c_char,
    matrix_b_path: *const c_char,
    out: *mut *mut MosaicEngine,
) -> MosaicStatus {
    guard(|| {
        if out.is_null() {
            return Err((MosaicStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let manifest = text(manifest_path, "manifest_path")?;
        let collection = load_manifest(manifest).map_err(|e| (MosaicStatus::LoadFailed, format!("{manifest}: {e}")))?;
        let mut rec = Recommender::new(Arc::new(collection));
        let mut paths = vec![(Backbone::A, text(matrix_a_path, "matrix_a_path")?)];
        if !matrix_b_path.is_null() {
            paths.push((Backbone::B, text(matrix_b_path, "matrix_b_path")?));
        }
        for (backbone, path) in paths {
            let matrix = load_similarity_matrix(path).map_err(|e| (MosaicStatus::LoadFailed, format!("{path}: {e}")))?;
            rec.register(backbone, &matrix)
                .map_err(|e| (MosaicStatus::LoadFailed, format!("{path}: {e}")))?;
        }
        *out = Box::into_raw(Box::new(MosaicEngine { recommender: rec }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mosaic_engine_free(engine: *mut MosaicEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Number of paintings in the engine's collection; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn mosaic_engine_len(engine: *const MosaicEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.recommender.collection().len())
}

unsafe fn run(
    engine: *const MosaicEngine,
    engine_id: *const c_char,
    profile_json: *const c_char,
    r: usize,
) -> Result<RankedRecommendation, (MosaicStatus, String)> {
    let engine = engine
        .as_ref()
        .ok_or((MosaicStatus::NullPointer, "engine is null".to_string()))?;
    let id: EngineId = text(engine_id, "engine_id")?.parse().map_err(invalid)?;
    let stored: EvalProfile = serde_json::from_str(text(profile_json, "profile_json")?).map_err(invalid)?;
    let profile = UserProfile {
        ratings: stored.ratings,
        beta: stored.beta.unwrap_or(0.0),
        xi: stored.xi.unwrap_or(0.0),
    };
    let r = if r == 0 { DEFAULT_R } else { r };
    engine
        .recommender
        .recommend(EngineSpec::new(id).with_r(r), &profile)
        .map_err(|e| (MosaicStatus::EngineFailed, e.to_string()))
}

/// Runs `engine_id` (e.g. "mosaic-a") for a profile given as JSON
/// `{"ratings": {id: 1..5}, "beta": b, "xi": x}`. `r = 0` means 9.
/// `*out_json` receives a string to release with [`mosaic_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mosaic_engine_recommend_json(
    engine: *const MosaicEngine,
    engine_id: *const c_char,
    profile_json: *const c_char,
    r: usize,
    out_json: *mut *mut c_char,
) -> MosaicStatus {
    guard(|| {
        if out_json.is_null() {
            return Err((MosaicStatus::NullPointer, "out_json is null".into()));
        }
        *out_json = ptr::null_mut();
        let out = run(engine, engine_id, profile_json, r)?;
        let json = serde_json::to_string(&out).map_err(invalid)?;
        *out_json = CString::new(json).map_err(invalid)?.into_raw();
        Ok(())
    })
}

/// Same as [`mosaic_engine_recommend_json`] but returns a handle with
/// accessor functions.
#[no_mangle]
pub unsafe extern "C" fn mosaic_engine_recommend(
    engine: *const MosaicEngine,
    engine_id: *const c_char,
    profile_json: *const c_char,
    r: usize,
    out: *mut *mut MosaicRecommendation,
) -> MosaicStatus {
    guard(|| {
        if out.is_null() {
            return Err((MosaicStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let rec = run(engine, engine_id, profile_json, r)?;
        let ids = rec
            .items
            .iter()
            .map(|i| CString::new(i.id.as_str()).map_err(invalid))
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(MosaicRecommendation {
            ids,
            scores: rec.items.iter().map(|i| i.score).collect(),
            objective: rec.objective,
            optimal: rec.optimal,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mosaic_recommendation_len(rec: *const MosaicRecommendation) -> usize {
    rec.as_ref().map_or(0, |r| r.ids.len())
}

/// Id of the item at `index`, or NULL if out of range. Owned by `rec`.
#[no_mangle]
pub unsafe extern "C" fn mosaic_recommendation_item_id(rec: *const MosaicRecommendation, index: usize) -> *const c_char {
    rec.as_ref()
        .and_then(|r| r.ids.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Score of the item at `index`, or NaN if out of range.
#[no_mangle]
pub unsafe extern "C" fn mosaic_recommendation_item_score(rec: *const MosaicRecommendation, index: usize) -> f64 {
    rec.as_ref()
        .and_then(|r| r.scores.get(index).copied())
        .unwrap_or(f64::NAN)
}

#[no_mangle]
pub unsafe extern "C" fn mosaic_recommendation_objective(rec: *const MosaicRecommendation) -> f64 {
    rec.as_ref().map_or(f64::NAN, |r| r.objective)
}

/// Whether the solver proved the set optimal.
#[no_mangle]
pub unsafe extern "C" fn mosaic_recommendation_optimal(rec: *const MosaicRecommendation) -> bool {
    rec.as_ref().is_some_and(|r| r.optimal)
}

#[no_mangle]
pub unsafe extern "C" fn mosaic_recommendation_free(rec: *mut MosaicRecommendation) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mosaic_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Group coverage reward of a set of painting ids under the engine's
/// story groups and weights.
#[no_mangle]
pub unsafe extern "C" fn mosaic_engine_psi(
    engine: *const MosaicEngine,
    ids: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> MosaicStatus {
    guard(|| {
        let engine = engine
            .as_ref()
            .ok_or((MosaicStatus::NullPointer, "engine is null".to_string()))?;
        if out.is_null() {
            return Err((MosaicStatus::NullPointer, "out is null".into()));
        }
        let collection = engine.recommender.collection();
        let mut selected = Vec::with_capacity(n);
        for id in text_list(ids, n, "ids")? {
            let i = collection
                .index_of(id)
                .ok_or((MosaicStatus::OutOfRange, format!("unknown painting {id:?}")))?;
            if !selected.contains(&i) {
                selected.push(i);
            }
        }
        *out = psi(&selected, collection.group_members(), collection.gamma());
        Ok(())
    })
}

/// Intersection over union of two id lists.
#[no_mangle]
pub unsafe extern "C" fn mosaic_jaccard(
    a: *const *const c_char,
    na: usize,
    b: *const *const c_char,
    nb: usize,
    out: *mut f64,
) -> MosaicStatus {
    guard(|| {
        if out.is_null() {
            return Err((MosaicStatus::NullPointer, "out is null".into()));
        }
        *out = jaccard(&text_list(a, na, "a")?, &text_list(b, nb, "b")?);
        Ok(())
    })
}

/// Rank-biased overlap of two equal-length rankings with persistence `p`.
#[no_mangle]
pub unsafe extern "C" fn mosaic_rbo(
    a: *const *const c_char,
    b: *const *const c_char,
    n: usize,
    p: f64,
    out: *mut f64,
) -> MosaicStatus {
    guard(|| {
        if out.is_null() {
            return Err((MosaicStatus::NullPointer, "out is null".into()));
        }
        *out = rbo(&text_list(a, n, "a")?, &text_list(b, n, "b")?, p).map_err(invalid)?;
        Ok(())
    })
}
