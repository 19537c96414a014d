use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mosaic_core::similarity::{cosine_similarity_matrix, save_similarity_matrix, EmbeddingTable};
use mosaic_ffi::*;
use serde_json::{json, Value};

/// Twelve paintings in three groups of four, with two smooth but distinct
/// embedding tables.
fn write_fixture(dir: &Path) -> (CString, CString, CString) {
    let ids: Vec<String> = (0..12).map(|i| format!("p{i}")).collect();
    let manifest = json!({
        "paintings": ids.iter().map(|id| json!({ "id": id, "title": id })).collect::<Vec<_>>(),
        "groups": (0..3).map(|g| json!({
            "group_id": g + 1,
            "member_ids": ids.iter().skip(g).step_by(3).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "popularity": { "p11": 1.0, "p10": 0.5 },
    });
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_vec(&manifest).unwrap()).unwrap();
    let mut paths = Vec::new();
    for (name, phase) in [("a.sim", 0.0), ("b.sim", 1.7)] {
        let mut table = EmbeddingTable::new(4);
        for (i, id) in ids.iter().enumerate() {
            let t = i as f64 * 0.9 + phase;
            table.push(id.clone(), &[t.sin(), t.cos(), (2.0 * t).sin(), 1.0]).unwrap();
        }
        let path = dir.join(name);
        save_similarity_matrix(&cosine_similarity_matrix(&table).unwrap(), &path).unwrap();
        paths.push(path);
    }
    let c = |p: &Path| CString::new(p.to_str().unwrap()).unwrap();
    (c(&manifest_path), c(&paths[0]), c(&paths[1]))
}

fn last_error() -> String {
    let p = mosaic_last_error_message();
    assert!(!p.is_null(), "no error message recorded");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

struct Engine(*mut MosaicEngine);

impl Drop for Engine {
    fn drop(&mut self) {
        unsafe { mosaic_engine_free(self.0) }
    }
}

fn open(dir: &Path) -> Engine {
    let (m, a, b) = write_fixture(dir);
    let mut engine = ptr::null_mut();
    let status = unsafe { mosaic_engine_open(m.as_ptr(), a.as_ptr(), b.as_ptr(), &mut engine) };
    assert_eq!(status, MosaicStatus::Ok);
    assert!(mosaic_last_error_message().is_null());
    Engine(engine)
}

fn profile() -> CString {
    CString::new(json!({ "ratings": { "p0": 5, "p4": 3, "p8": 1 }, "beta": 0.5, "xi": 0.5 }).to_string()).unwrap()
}

fn recommend_json(engine: &Engine, id: &str, r: usize) -> Value {
    let id = CString::new(id).unwrap();
    let mut out: *mut c_char = ptr::null_mut();
    let status = unsafe { mosaic_engine_recommend_json(engine.0, id.as_ptr(), profile().as_ptr(), r, &mut out) };
    assert_eq!(status, MosaicStatus::Ok);
    let v = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { mosaic_string_free(out) };
    v
}

#[test]
fn open_and_recommend() {
    let dir = tempfile::tempdir().unwrap();
    let engine = open(dir.path());
    assert_eq!(unsafe { mosaic_engine_len(engine.0) }, 12);

    let v = recommend_json(&engine, "mosaic-b", 4);
    assert_eq!(v["engine"], "mosaic-b");
    assert_eq!(v["items"].as_array().unwrap().len(), 4);
    assert_eq!(recommend_json(&engine, "base-a", 0)["items"].as_array().unwrap().len(), 9);

    let id = CString::new("mosaic-b").unwrap();
    let mut rec = ptr::null_mut();
    let status = unsafe { mosaic_engine_recommend(engine.0, id.as_ptr(), profile().as_ptr(), 4, &mut rec) };
    assert_eq!(status, MosaicStatus::Ok);
    unsafe {
        assert_eq!(mosaic_recommendation_len(rec), 4);
        for (i, item) in v["items"].as_array().unwrap().iter().enumerate() {
            let got = CStr::from_ptr(mosaic_recommendation_item_id(rec, i)).to_str().unwrap();
            assert_eq!(got, item["id"].as_str().unwrap());
            assert!((mosaic_recommendation_item_score(rec, i) - item["score"].as_f64().unwrap()).abs() < 1e-12);
        }
        assert!(mosaic_recommendation_item_id(rec, 4).is_null());
        assert!(mosaic_recommendation_item_score(rec, 4).is_nan());
        assert!((mosaic_recommendation_objective(rec) - v["objective"].as_f64().unwrap()).abs() < 1e-12);
        assert!(mosaic_recommendation_optimal(rec));
        mosaic_recommendation_free(rec);
    }
}

#[test]
fn error_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
    let mut engine = ptr::null_mut();
    unsafe {
        assert_eq!(
            mosaic_engine_open(ptr::null(), ptr::null(), ptr::null(), &mut engine),
            MosaicStatus::NullPointer
        );
        assert!(last_error().contains("manifest"));
        assert_eq!(
            mosaic_engine_open(missing.as_ptr(), missing.as_ptr(), ptr::null(), &mut engine),
            MosaicStatus::LoadFailed
        );
        assert!(engine.is_null());
    }

    let engine = open(dir.path());
    let mut out: *mut c_char = ptr::null_mut();
    let bad_engine = CString::new("oracle-z").unwrap();
    let good_engine = CString::new("fair-a").unwrap();
    let bad_json = CString::new("{not json").unwrap();
    let unknown = CString::new(r#"{"ratings": {"zzz": 4}}"#).unwrap();
    let invalid_utf8 = [0xffu8 as c_char, 0];
    unsafe {
        let s = mosaic_engine_recommend_json(engine.0, bad_engine.as_ptr(), profile().as_ptr(), 3, &mut out);
        assert_eq!(s, MosaicStatus::InvalidArgument);
        assert!(last_error().contains("oracle-z"));
        let s = mosaic_engine_recommend_json(engine.0, good_engine.as_ptr(), bad_json.as_ptr(), 3, &mut out);
        assert_eq!(s, MosaicStatus::InvalidArgument);
        let s = mosaic_engine_recommend_json(engine.0, good_engine.as_ptr(), unknown.as_ptr(), 3, &mut out);
        assert_eq!(s, MosaicStatus::EngineFailed);
        assert!(last_error().contains("zzz"));
        let s = mosaic_engine_recommend_json(engine.0, invalid_utf8.as_ptr(), profile().as_ptr(), 3, &mut out);
        assert_eq!(s, MosaicStatus::InvalidUtf8);
        let s = mosaic_engine_recommend_json(ptr::null(), good_engine.as_ptr(), profile().as_ptr(), 3, &mut out);
        assert_eq!(s, MosaicStatus::NullPointer);
        assert!(out.is_null());
        let s = mosaic_engine_recommend_json(engine.0, good_engine.as_ptr(), profile().as_ptr(), 3, ptr::null_mut());
        assert_eq!(s, MosaicStatus::NullPointer);

        // a successful call clears the previous message
        let s = mosaic_engine_recommend_json(engine.0, good_engine.as_ptr(), profile().as_ptr(), 3, &mut out);
        assert_eq!(s, MosaicStatus::Ok);
        assert!(mosaic_last_error_message().is_null());
        mosaic_string_free(out);

        assert_eq!(mosaic_engine_len(ptr::null()), 0);
        mosaic_engine_free(ptr::null_mut());
        mosaic_recommendation_free(ptr::null_mut());
        mosaic_string_free(ptr::null_mut());
    }
}

#[test]
fn engine_without_second_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let (m, a, _) = write_fixture(dir.path());
    let mut engine = ptr::null_mut();
    assert_eq!(
        unsafe { mosaic_engine_open(m.as_ptr(), a.as_ptr(), ptr::null(), &mut engine) },
        MosaicStatus::Ok
    );
    let engine = Engine(engine);
    let id = CString::new("pop-b").unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { mosaic_engine_recommend_json(engine.0, id.as_ptr(), profile().as_ptr(), 3, &mut out) };
    assert_eq!(s, MosaicStatus::EngineFailed);
}

fn c_list(ids: &[&str]) -> (Vec<CString>, Vec<*const c_char>) {
    let owned: Vec<CString> = ids.iter().map(|s| CString::new(*s).unwrap()).collect();
    let ptrs = owned.iter().map(|s| s.as_ptr()).collect();
    (owned, ptrs)
}

#[test]
fn metric_functions() {
    let dir = tempfile::tempdir().unwrap();
    let engine = open(dir.path());
    let mut out = 0.0;
    unsafe {
        // p0 and p3 share a group, p1 sits in another: sqrt(2) + 1
        let (_keep, ids) = c_list(&["p0", "p3", "p1"]);
        assert_eq!(mosaic_engine_psi(engine.0, ids.as_ptr(), 3, &mut out), MosaicStatus::Ok);
        assert!((out - (2f64.sqrt() + 1.0)).abs() < 1e-12);
        let (_keep, bad) = c_list(&["p0", "nope"]);
        assert_eq!(mosaic_engine_psi(engine.0, bad.as_ptr(), 2, &mut out), MosaicStatus::OutOfRange);

        let (_ka, a) = c_list(&["x", "y", "z"]);
        let (_kb, b) = c_list(&["y", "z", "w"]);
        assert_eq!(mosaic_jaccard(a.as_ptr(), 3, b.as_ptr(), 3, &mut out), MosaicStatus::Ok);
        assert_eq!(out, 0.5);
        assert_eq!(mosaic_jaccard(ptr::null(), 0, ptr::null(), 0, &mut out), MosaicStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(mosaic_jaccard(ptr::null(), 2, b.as_ptr(), 3, &mut out), MosaicStatus::NullPointer);

        assert_eq!(mosaic_rbo(a.as_ptr(), a.as_ptr(), 3, 0.9, &mut out), MosaicStatus::Ok);
        assert!((out - 1.0).abs() < 1e-12);
        assert_eq!(mosaic_rbo(a.as_ptr(), b.as_ptr(), 3, 0.9, &mut out), MosaicStatus::Ok);
        assert!(out > 0.0 && out < 1.0);
        assert_eq!(mosaic_rbo(a.as_ptr(), b.as_ptr(), 3, 1.5, &mut out), MosaicStatus::InvalidArgument);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mosaic.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "MOSAIC_STATUS_OK",
        "MOSAIC_STATUS_PANIC",
        "typedef struct MosaicEngine MosaicEngine",
        "typedef struct MosaicRecommendation MosaicRecommendation",
        "mosaic_engine_open",
        "mosaic_engine_recommend_json",
        "mosaic_recommendation_item_id",
        "mosaic_string_free",
        "mosaic_engine_psi",
        "mosaic_jaccard",
        "mosaic_rbo",
        "mosaic_last_error_message",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "mosaic.h"

int main(int argc, char **argv) {
    MosaicEngine *engine = NULL;
    if (mosaic_engine_open(argv[1], argv[2], NULL, &engine) != MOSAIC_STATUS_OK) {
        fprintf(stderr, "%s\n", mosaic_last_error_message());
        return 1;
    }
    MosaicRecommendation *rec = NULL;
    if (mosaic_engine_recommend(engine, "mosaic-a", argv[3], 3, &rec) != MOSAIC_STATUS_OK) {
        fprintf(stderr, "%s\n", mosaic_last_error_message());
        return 1;
    }
    for (size_t i = 0; i < mosaic_recommendation_len(rec); i++) {
        printf("%s\n", mosaic_recommendation_item_id(rec, i));
    }
    if (mosaic_engine_open(NULL, NULL, NULL, &engine) != MOSAIC_STATUS_NULL_POINTER) return 2;
    mosaic_recommendation_free(rec);
    mosaic_engine_free(engine);
    return 0;
}
"#;

/// Compiles a small C client against the generated header and the static
/// library, then checks it agrees with the Rust API.
#[test]
fn c_client_links_and_runs() {
    let target = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target.join("libmosaic_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let exe = dir.path().join("client");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler named cc");
    assert!(status.success());

    let (m, a, _) = write_fixture(dir.path());
    let output = Command::new(&exe)
        .arg(m.to_str().unwrap())
        .arg(a.to_str().unwrap())
        .arg(profile().to_str().unwrap())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let printed: Vec<String> = String::from_utf8(output.stdout).unwrap().lines().map(str::to_owned).collect();

    let engine = open(dir.path());
    let expected: Vec<String> = recommend_json(&engine, "mosaic-a", 3)["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["id"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(printed, expected);
}
