use caise_service::{build_state, ServiceConfig};

#[test]
fn toml_section_and_env_overrides() {
    let mut cfg = ServiceConfig::from_toml("[model]\nhidden = 64\n[service]\nport = 9000\nscript = \"s.json\"\n").unwrap();
    assert_eq!(cfg.port, 9000);
    cfg.apply_env(|k| match k {
        "CAISE_PORT" => Some("9100".into()),
        "CAISE_CORPUS" => Some("/data/manifest.jsonl".into()),
        _ => None,
    })
    .unwrap();
    assert_eq!(cfg.port, 9100);
    assert_eq!(cfg.corpus.as_deref(), Some(std::path::Path::new("/data/manifest.jsonl")));
    assert!(cfg.apply_env(|_| Some("not-a-port".into())).is_err());
}

#[test]
fn unknown_service_keys_are_rejected() {
    assert!(ServiceConfig::from_toml("[service]\nprot = 1\n").is_err());
    assert_eq!(ServiceConfig::from_toml("").unwrap(), ServiceConfig::default());
}

#[test]
fn state_needs_a_proposer() {
    assert!(build_state(&ServiceConfig::default()).is_err());
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(&script, r#"{"script":{"Find me a RED scooter!":"[search red scooter]"},"fallback":"[rotate 90]"}"#).unwrap();
    let cfg = ServiceConfig {
        script: Some(script),
        synthetic_corpus_size: 20,
        ..ServiceConfig::default()
    };
    let state = build_state(&cfg).unwrap();
    assert_eq!(state.corpus().entries().len(), 20);
}
