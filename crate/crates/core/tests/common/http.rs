//! In-process HTTP driving of the study service.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mosaic_core::engines::Recommender;
use mosaic_core::service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const ADMIN: &str = "test-admin-token";

pub struct Reply {
    pub status: StatusCode,
    pub json: Value,
    pub bytes: Vec<u8>,
}

pub fn open(rec: Arc<Recommender>, dir: &Path, seed: u64) -> (Arc<AppState>, Router) {
    let config = ServiceConfig {
        seed: Some(seed),
        admin_token: Some(ADMIN.into()),
        ..ServiceConfig::default()
    };
    let state = AppState::open(rec, config, dir).unwrap();
    let app = router(state.clone());
    (state, app)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, headers: &[(&str, &str)]) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    let json = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    Reply { status, json, bytes }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, "GET", uri, None, &[]).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, "POST", uri, Some(body), &[]).await
}

/// Creates a session and submits ratings (all 4) and tolerances.
pub async fn elicit(app: &Router, beta: i64, xi: i64) -> (String, Vec<String>) {
    let created = call(app, "POST", "/api/session", None, &[]).await;
    assert_eq!(created.status, StatusCode::CREATED, "{}", created.json);
    let id = created.json["session_id"].as_str().unwrap().to_owned();
    let items: Vec<String> = created.json["elicitation"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["id"].as_str().unwrap().to_owned())
        .collect();
    let ratings: serde_json::Map<String, Value> = items
        .iter()
        .enumerate()
        .map(|(n, id)| (id.clone(), json!(1 + n % 5)))
        .collect();
    let r = post(app, &format!("/api/session/{id}/ratings"), json!({ "ratings": ratings })).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.json);
    let r = post(app, &format!("/api/session/{id}/tolerances"), json!({ "beta": beta, "xi": xi })).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.json);
    (id, items)
}

/// Raw bytes of the `items` array inside a `/next` response body.
pub fn items_bytes(body: &[u8]) -> Vec<u8> {
    let v: Value = serde_json::from_slice(body).unwrap();
    serde_json::to_vec(&v["items"]).unwrap()
}

pub fn likert(values: [i64; 4]) -> Value {
    json!({
        "accuracy": values[0],
        "diversity": values[1],
        "novelty": values[2],
        "serendipity": values[3],
    })
}
