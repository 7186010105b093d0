#![allow(dead_code)]

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use caise_core::detect::DetectionSpec;
use caise_core::synth::render_entry;
use caise_core::{Corpus, CorpusEntry, ImageStore};
use caise_service::{router, AppState, ScriptedProposer};
use serde_json::Value;
use tower::ServiceExt;

pub const SCRIPT: [(&str, &str); 7] = [
    ("find me a red scooter", "[search red scooter]"),
    ("make it brighter by 40 percent", "[adjust_attr brightness 40]"),
    ("rotate it 90 degrees", "[rotate 90]"),
    ("now remove the background", "[image_cutout]"),
    ("show me a plain wall", "[search plain wall]"),
    ("find a zebra", "[search zebra]"),
    ("do the thing", "[rotate sideways]"),
];

fn entry(id: &str, caption: &str, dets: &[(&[&str], [f64; 4])]) -> CorpusEntry {
    CorpusEntry {
        id: id.into(),
        path: format!("images/{id}.png").into(),
        caption: caption.into(),
        tags: vec![],
        detections: dets
            .iter()
            .map(|(c, b)| DetectionSpec {
                bbox: *b,
                concept: c.iter().map(|s| s.to_string()).collect(),
                feature: None,
            })
            .collect(),
    }
}

pub fn corpus() -> Corpus {
    let entries = vec![
        entry("c1", "a red scooter on a street", &[(&["red", "scooter"], [0.3, 0.3, 0.7, 0.7])]),
        entry("c2", "a plain wall", &[]),
        entry("c3", "a juice glass", &[(&["orange", "glass"], [0.2, 0.2, 0.5, 0.6])]),
        entry("c4", "a glass of juice and a red cup", &[(&["red", "cup"], [0.5, 0.5, 0.8, 0.8])]),
    ];
    Corpus::from_entries(entries, ImageStore::Rendered(render_entry), 4).unwrap()
}

pub fn app() -> (Router, AppState) {
    let state = AppState::new(Arc::new(ScriptedProposer::new(SCRIPT)), Arc::new(corpus()));
    (router(state.clone()), state)
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

pub async fn json(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

pub async fn create(app: &Router) -> String {
    let (s, v) = json(app, Method::POST, "/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    v["session_id"].as_str().unwrap().to_string()
}

pub async fn say(app: &Router, id: &str, text: &str) -> (StatusCode, Value) {
    let body = serde_json::json!({ "text": text }).to_string();
    json(app, Method::POST, &format!("/sessions/{id}/utterance"), Some(&body)).await
}

pub async fn resolve(app: &Router, id: &str, body: Value) -> (StatusCode, Value) {
    json(app, Method::POST, &format!("/sessions/{id}/resolve"), Some(&body.to_string())).await
}

pub async fn accept(app: &Router, id: &str) -> (StatusCode, Value) {
    resolve(app, id, serde_json::json!({ "action": "accept" })).await
}
