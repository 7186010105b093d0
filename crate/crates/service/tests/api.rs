mod common;

use axum::http::{Method, StatusCode};
use caise_core::{parse_command, replay, Command};
use caise_service::API_SCHEMA;
use common::*;
use serde_json::{json, Value};

fn validator(def: &str) -> jsonschema::Validator {
    let mut schema: Value = serde_json::from_str(API_SCHEMA).unwrap();
    schema["$ref"] = json!(format!("#/$defs/{def}"));
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(def: &str, body: &Value) {
    let v = validator(def);
    let errors: Vec<String> = v.iter_errors(body).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{def}: {errors:?}\n{body}");
}

#[tokio::test]
async fn four_turn_session_matches_offline_replay() {
    let (app, state) = app();
    let id = create(&app).await;
    for (text, cmd) in &SCRIPT[..4] {
        let (s, p) = say(&app, &id, text).await;
        assert_eq!(s, StatusCode::OK, "{p}");
        assert_eq!(p["proposed_command"], *cmd);
        assert_eq!(p["gate_trace"].as_array().unwrap().len(), p["tokens"].as_array().unwrap().len());
        assert_valid("Proposal", &p);
        let (s, r) = accept(&app, &id).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        assert_eq!(r["executed_command"], *cmd);
        assert_valid("Resolved", &r);
    }
    let (s, snap) = json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_valid("Snapshot", &snap);
    assert_eq!(snap["images"].as_array().unwrap().len(), 4);
    assert_eq!(snap["utterances"].as_array().unwrap().len(), 8);

    let commands: Vec<Command> = snap["commands"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| parse_command(c["command"].as_str().unwrap()).unwrap())
        .collect();
    let offline = replay(&commands, state.corpus()).unwrap();
    let expected = offline.last().unwrap().image.to_png_bytes().unwrap();
    let (s, served) = call(&app, Method::GET, &format!("/sessions/{id}/images/3"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(served, expected);
    for (i, st) in offline.iter().enumerate() {
        assert_eq!(snap["images"][i]["id"], st.record.id);
    }
}

#[tokio::test]
async fn first_image_is_the_retrieved_corpus_image() {
    let (app, state) = app();
    let id = create(&app).await;
    say(&app, &id, "find me a red scooter").await;
    accept(&app, &id).await;
    let (s, png) = call(&app, Method::GET, &format!("/sessions/{id}/images/0"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(png, state.corpus().image("c1").unwrap().to_png_bytes().unwrap());
}

async fn error_class(res: (StatusCode, Value)) -> (u16, String) {
    assert_valid("Error", &res.1);
    (res.0.as_u16(), res.1["error"].as_str().unwrap().to_string())
}

#[tokio::test]
async fn error_codes_follow_the_contract() {
    let (app, _) = app();
    let id = create(&app).await;
    let e = |c: u16, s: &str| (c, s.to_string());

    assert_eq!(error_class(json(&app, Method::GET, "/sessions/nope", None).await).await, e(404, "SessionNotFound"));
    assert_eq!(error_class(say(&app, "nope", "hi").await).await, e(404, "SessionNotFound"));
    assert_eq!(error_class(accept(&app, "nope").await).await, e(404, "SessionNotFound"));
    assert_eq!(error_class(json(&app, Method::GET, "/sessions/nope/images/0", None).await).await, e(404, "SessionNotFound"));
    assert_eq!(error_class(json(&app, Method::GET, &format!("/sessions/{id}/images/0"), None).await).await, e(404, "ImageNotFound"));
    assert_eq!(error_class(accept(&app, &id).await).await, e(409, "NoPendingProposal"));
    assert_eq!(error_class(say(&app, &id, "  ?! ").await).await, e(400, "EmptyUtterance"));

    // Editing before any search: the proposal survives the failure.
    say(&app, &id, "rotate it 90 degrees").await;
    assert_eq!(error_class(say(&app, &id, "find me a red scooter").await).await, e(409, "ProposalPending"));
    assert_eq!(error_class(accept(&app, &id).await).await, e(422, "NoCurrentImage"));
    let (_, snap) = json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(snap["pending"]["proposed_command"], "[rotate 90]");
    assert_eq!(snap["commands"].as_array().unwrap().len(), 0);

    let over = |c: &str| json!({ "action": "override", "command": c });
    assert_eq!(error_class(resolve(&app, &id, over("[rotate 9000]")).await).await, e(400, "RangeError"));
    assert_eq!(error_class(resolve(&app, &id, over("[paint it]")).await).await, e(400, "UnknownCommand"));
    assert_eq!(error_class(resolve(&app, &id, over("[search zebra]")).await).await, e(422, "SearchEmpty"));
    assert_eq!(error_class(resolve(&app, &id, json!({ "action": "override" })).await).await, e(400, "BadRequest"));
    assert_eq!(error_class(resolve(&app, &id, json!({ "action": "maybe" })).await).await, e(400, "BadRequest"));
    let raw = json(&app, Method::POST, &format!("/sessions/{id}/resolve"), Some("{not json")).await;
    assert_eq!(error_class(raw).await, e(400, "BadRequest"));

    let (s, r) = resolve(&app, &id, json!({ "action": "override", "command": "[search plain wall]", "assistant_text": "here is a wall" })).await;
    assert_eq!(s, StatusCode::OK, "{r}");
    assert_eq!(r["image_id"], "corpus:c2");

    // The wall is uniform, so background removal fails and history stays put.
    say(&app, &id, "now remove the background").await;
    assert_eq!(error_class(accept(&app, &id).await).await, e(422, "CutoutFailed"));
    let (_, snap) = json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(snap["images"].as_array().unwrap().len(), 1);
    assert_eq!(snap["pending"]["proposed_command"], "[image_cutout]");
    assert_eq!(snap["utterances"][1]["text"], "here is a wall");
    let (s, _) = resolve(&app, &id, over("[rotate 180]")).await;
    assert_eq!(s, StatusCode::OK);

    say(&app, &id, "do the thing").await;
    assert_eq!(error_class(accept(&app, &id).await).await, e(400, "UnparseableProposal"));
    assert_eq!(error_class(json(&app, Method::GET, "/corpus/search?q=%20", None).await).await, e(400, "BadRequest"));
    assert_eq!(error_class(json(&app, Method::GET, &format!("/sessions/{id}/images/x"), None).await).await, e(400, "BadRequest"));
    assert_eq!(error_class(json(&app, Method::GET, &format!("/sessions/{id}/images/9"), None).await).await, e(404, "ImageNotFound"));
}

#[tokio::test]
async fn sessions_are_isolated() {
    let (app, _) = app();
    let a = create(&app).await;
    let b = create(&app).await;
    assert_ne!(a, b);
    say(&app, &a, "find me a red scooter").await;
    let (s, _) = say(&app, &b, "find me a red scooter").await;
    assert_eq!(s, StatusCode::OK);
    accept(&app, &a).await;
    let (_, snap) = json(&app, Method::GET, &format!("/sessions/{b}"), None).await;
    assert_eq!(snap["images"].as_array().unwrap().len(), 0);
    assert!(snap["pending"].is_object());
}

#[tokio::test]
async fn search_ignores_word_order() {
    let (app, _) = app();
    let (s1, a) = call(&app, Method::GET, "/corpus/search?q=glass%20juice", None).await;
    let (s2, b) = call(&app, Method::GET, "/corpus/search?q=juice%20glass", None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_valid("SearchResponse", &v);
    assert_eq!(v["hits"][0]["rank"], 1);
    let (_, none) = json(&app, Method::GET, "/corpus/search?q=zebra", None).await;
    assert_eq!(none["hits"], json!([]));
}

#[tokio::test]
async fn scripted_sources_follow_context() {
    let (app, _) = app();
    let id = create(&app).await;
    let (_, p) = say(&app, &id, "find me a red scooter").await;
    assert_eq!(p["token_sources"], json!(["generator", "utterance-copy", "utterance-copy"]));
    assert_eq!(p["gate_trace"][1], json!([0.0, 1.0, 0.0]));
    assert_eq!(p["after_utterance"], 0);
}

#[tokio::test]
async fn model_proposals_carry_one_gate_per_token() {
    use caise_model::{GenExt, ModelConfig, Vocab};
    use std::sync::Arc;
    let mut cfg = ModelConfig::micro();
    cfg.feature_dim = 4;
    let model = GenExt::new(cfg, Vocab::build(&[]), 3).unwrap();
    let state = caise_service::AppState::new(Arc::new(model), Arc::new(corpus()));
    let app = caise_service::router(state);
    let id = create(&app).await;
    let (s, p) = say(&app, &id, "find me a red scooter").await;
    assert_eq!(s, StatusCode::OK, "{p}");
    assert_valid("Proposal", &p);
    let n = p["tokens"].as_array().unwrap().len();
    assert_eq!(p["gate_trace"].as_array().unwrap().len(), n);
    assert_eq!(p["token_sources"].as_array().unwrap().len(), n);
    for g in p["gate_trace"].as_array().unwrap() {
        let total: f64 = g.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
