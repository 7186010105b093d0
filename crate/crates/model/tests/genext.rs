mod common;

use caise_core::detect::hashed_feature;
use caise_core::dialogue::ImageRecord;
use caise_core::{parse_command, Command, ObjectDetection, Speaker, TaskInstance, Utterance};
use caise_model::vocab::{BOS_ID, EOS, EOS_ID};
use caise_model::{apply_ablation, AblationMode, GateMode, GenExt, ModelConfig, ModelError, Vocab};
use caise_nn::{positional_encoding, Tensor};

fn det(image: &str, concept: &[&str], bbox: [f64; 4], dim: usize) -> ObjectDetection {
    let concept: Vec<String> = concept.iter().map(|s| s.to_string()).collect();
    ObjectDetection {
        image_id: image.into(),
        bbox,
        feature: hashed_feature(&concept, &bbox, dim),
        concept,
    }
}

fn instance(utterances: &[&str], images: Vec<Vec<ObjectDetection>>, target: &str) -> TaskInstance {
    TaskInstance {
        dialogue_id: "t".into(),
        turn: images.len(),
        utterances: utterances.iter().enumerate().map(|(i, u)| Utterance::new(if i % 2 == 0 { Speaker::User } else { Speaker::Assistant }, u)).collect(),
        images: images
            .into_iter()
            .enumerate()
            .map(|(i, detections)| ImageRecord { id: format!("img{i}"), detections })
            .collect(),
        history: vec![],
        target: parse_command(target).unwrap(),
        request_type: None,
    }
}

fn micro(instances: &[TaskInstance], seed: u64) -> GenExt {
    GenExt::new(ModelConfig::micro(), Vocab::from_instances(instances), seed).unwrap()
}

fn two_image_instance() -> TaskInstance {
    let d = 4;
    instance(
        &["find a red car", "here you go", "make it red red red"],
        vec![
            vec![
                det("img0", &["red", "car"], [0.1, 0.1, 0.5, 0.5], d),
                det("img0", &["blue", "tree"], [0.5, 0.5, 0.9, 0.9], d),
                det("img0", &["sky", "blue", "ball"], [0.0, 0.6, 0.3, 0.9], d),
            ],
            vec![det("img1", &["red", "car"], [0.1, 0.1, 0.5, 0.5], d), det("img1", &["scooter"], [0.6, 0.1, 0.9, 0.4], d)],
        ],
        "[adjust_color red 0.5]",
    )
}

/// Zeroes every parameter, then wires embedding, decoder, attention and
/// generator so that greedy decoding spells `tokens` followed by the end
/// sentinel with probability 1.
fn rig_sequence(model: &mut GenExt, tokens: &[&str]) {
    let d = model.config.hidden;
    let e = model.config.embed;
    assert!(tokens.len() < e.min(d));
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        model.params.get_mut(id).data_mut().fill(0.0);
    }
    let vocab = model.vocab.clone();
    let pid = |m: &GenExt, n: &str| m.params.id(n).unwrap();
    let table = pid(model, "embed.table");
    model.params.get_mut(table).set(BOS_ID, 0, 1.0);
    for (k, t) in tokens.iter().enumerate() {
        model.params.get_mut(table).set(vocab.id(t).unwrap(), k + 1, 1.0);
    }
    let dec = pid(model, "decoder.w");
    for j in 0..=tokens.len() {
        model.params.get_mut(dec).set(j, 2 * d + j, 5.0);
    }
    let att = pid(model, "attention.w");
    for j in 0..d {
        model.params.get_mut(att).set(j, j, 1.0);
    }
    let gen = pid(model, "generator.w");
    let emitted: Vec<usize> = tokens.iter().map(|t| vocab.id(t).unwrap()).chain([EOS_ID]).collect();
    for (step, &tok) in emitted.iter().enumerate() {
        for j in 0..emitted.len() {
            model.params.get_mut(gen).set(j, tok, if j == step { 2000.0 } else { -2000.0 });
        }
    }
}

#[test]
fn visual_rows_get_image_wise_positional_encoding() {
    let inst = two_image_instance();
    let model = micro(std::slice::from_ref(&inst), 1);
    let s = model.session(&inst).unwrap();
    let v = s.encoder_outputs().v.unwrap();
    assert_eq!(v.rows(), 5);
    let w = model.params.get(model.params.id("visual.w").unwrap());
    let b = model.params.get(model.params.id("visual.b").unwrap());
    let dets: Vec<&ObjectDetection> = inst.images.iter().flat_map(|i| &i.detections).collect();
    for (row, d) in dets.iter().enumerate() {
        let mut x = d.feature.clone();
        x.extend(d.bbox_feature());
        let lin = Tensor::row_vector(x).matmul(w).unwrap();
        let image = if row < 3 { 0 } else { 1 };
        let pe = positional_encoding(image, 8);
        for (c, want) in pe.iter().enumerate() {
            let got = v.get(row, c) - lin.get(0, c) - b.get(0, c);
            assert!((got - want).abs() < 1e-12, "row {row} col {c}");
        }
    }
}

#[test]
fn singleton_similarity_copies_dialogue_state() {
    let inst = instance(&["rotate it by 90 degrees"], vec![vec![det("a", &["cat"], [0.2, 0.2, 0.6, 0.6], 4)]], "[rotate 90]");
    let model = micro(std::slice::from_ref(&inst), 2);
    let out = model.session(&inst).unwrap().encoder_outputs();
    assert_eq!(out.s.as_ref().unwrap().shape(), [1, 1]);
    assert_eq!(out.u_bar.unwrap(), out.u);
}

#[test]
fn masked_vision_uses_null_row() {
    let inst = two_image_instance();
    let mut model = micro(std::slice::from_ref(&inst), 3);
    model.config.ablation = AblationMode::RequestHistory;
    let out = model.session(&inst).unwrap().encoder_outputs();
    assert!(out.v.is_none() && out.c.is_none());
    assert_eq!(&out.v_bar, model.params.get(model.params.id("null_v").unwrap()));
}

#[test]
fn generator_only_mixture_is_generator_distribution() {
    let inst = two_image_instance();
    let model = micro(std::slice::from_ref(&inst), 4).with_gate(GateMode::GeneratorOnly);
    let mut s = model.session(&inst).unwrap();
    let step = s.step(BOS_ID).unwrap();
    assert_eq!(step.gate, [1.0, 0.0, 0.0]);
    assert_eq!(&step.mixture[..model.vocab.len()], &step.generator[..]);
    assert!(step.mixture[model.vocab.len()..].iter().all(|&p| p == 0.0));
}

#[test]
fn out_of_vocabulary_context_token_gets_copy_mass() {
    let inst = two_image_instance();
    let other = instance(&["turn it 90 degrees"], vec![], "[rotate 90]");
    let model = GenExt::new(ModelConfig::micro(), Vocab::from_instances(&[other]), 5).unwrap();
    assert!(model.vocab.id("scooter").is_none());
    let mut s = model.session(&inst).unwrap();
    let oov = s.prepared().oov.clone();
    let pos = model.vocab.len() + oov.iter().position(|t| t == "scooter").unwrap();
    let step = s.step(BOS_ID).unwrap();
    assert!(step.gate[2] > 0.0);
    assert!(step.mixture[pos] > 0.0);

    let base = model.with_gate(GateMode::GeneratorOnly);
    let step = base.session(&inst).unwrap().step(BOS_ID).unwrap();
    assert_eq!(step.mixture[pos], 0.0);
}

#[test]
fn duplicate_context_tokens_scatter_add() {
    let inst = two_image_instance();
    let model = micro(std::slice::from_ref(&inst), 6);
    let mut s = model.session(&inst).unwrap();
    let utt = s.prepared().utterance_tokens.clone();
    let con = s.prepared().concept_tokens.clone();
    let step = s.step(BOS_ID).unwrap();
    let red = model.vocab.id("red").unwrap();
    let u_mass: f64 = utt.iter().zip(&step.utterance_copy).filter(|(t, _)| *t == "red").map(|(_, p)| p).sum();
    let c_mass: f64 = con.iter().zip(&step.concept_copy).filter(|(t, _)| *t == "red").map(|(_, p)| p).sum();
    assert_eq!(utt.iter().filter(|t| *t == "red").count(), 4);
    let expected = step.gate[0] * step.generator[red] + step.gate[1] * u_mass + step.gate[2] * c_mass;
    assert!((step.mixture[red] - expected).abs() < 1e-15);
}

#[test]
fn rigged_parameters_spell_rotate_90() {
    let inst = instance(&["please rotate it 90 degrees"], vec![], "[rotate 90]");
    let mut model = micro(std::slice::from_ref(&inst), 7).with_gate(GateMode::GeneratorOnly);
    rig_sequence(&mut model, &["rotate", "90"]);
    let d = model.greedy_decode(&inst).unwrap();
    assert_eq!(d.tokens, vec!["rotate", "90"]);
    assert!(d.finished);
    assert_eq!(d.command, Some(Command::rotate(90).unwrap()));
    assert_eq!(d.gate_trace.len(), d.tokens.len());
    assert_eq!(d.sources.len(), d.tokens.len());
}

#[test]
fn oracle_parameters_give_zero_loss() {
    let inst = instance(&["remove the background"], vec![], "[image_cutout]");
    let mut model = micro(std::slice::from_ref(&inst), 8).with_gate(GateMode::GeneratorOnly);
    rig_sequence(&mut model, &["image_cutout"]);
    assert_eq!(model.loss(&inst).unwrap(), 0.0);
}

#[test]
fn length_cap_flags_invalid() {
    let inst = instance(&["remove the background"], vec![], "[image_cutout]");
    let mut model = micro(std::slice::from_ref(&inst), 9).with_gate(GateMode::GeneratorOnly);
    rig_sequence(&mut model, &["search", "red"]);
    // Point the end-sentinel detector at "red" so decoding never stops.
    let gen = model.params.id("generator.w").unwrap();
    let red = model.vocab.id("red").unwrap();
    for j in 0..model.config.hidden {
        let w = model.params.get(gen);
        let v = w.get(j, EOS_ID).max(w.get(j, red));
        model.params.get_mut(gen).set(j, red, v);
        model.params.get_mut(gen).set(j, EOS_ID, 0.0);
    }
    let d = model.greedy_decode(&inst).unwrap();
    assert!(!d.finished);
    assert_eq!(d.tokens.len(), model.config.max_decode_len);
    assert_eq!(d.command, None);
}

#[test]
fn random_init_loss_is_finite_and_decoding_terminates() {
    let insts = common::instances(4, 10, 3);
    let model = micro(&insts, 10);
    for inst in &insts {
        let l = model.loss(inst).unwrap();
        assert!(l.is_finite() && l > 0.0);
        let d = model.greedy_decode(inst).unwrap();
        assert!(d.tokens.len() <= model.config.max_decode_len);
        assert_eq!(d.gate_trace.len(), d.tokens.len());
    }
}

#[test]
fn ablation_modes() {
    let utts: Vec<String> = (0..10).map(|i| format!("utterance number {i}")).collect();
    let refs: Vec<&str> = utts.iter().map(String::as_str).collect();
    let inst = instance(&refs, two_image_instance().images.into_iter().map(|i| i.detections).collect(), "[image_cutout]");
    let r = apply_ablation(&inst, AblationMode::RequestOnly);
    assert_eq!(r.utterances, inst.utterances[8..].to_vec());
    assert_eq!(r.detection_count(), 0);
    assert_eq!(apply_ablation(&inst, AblationMode::Full), inst);
    let v = apply_ablation(&inst, AblationMode::VisionOnly);
    assert!(v.utterances.is_empty());
    assert_eq!(v.detection_count(), 5);
    let h = apply_ablation(&inst, AblationMode::DialogHistoryOnly);
    assert_eq!(h.utterances, inst.utterances[..8].to_vec());
    let rv = apply_ablation(&inst, AblationMode::RequestVision);
    assert_eq!((rv.utterances.len(), rv.detection_count()), (2, 5));
    let rh = apply_ablation(&inst, AblationMode::RequestHistory);
    assert_eq!((rh.utterances.len(), rh.detection_count()), (10, 0));
    for m in AblationMode::ALL {
        assert_eq!(m.as_str().parse::<AblationMode>().unwrap(), m);
    }
    assert!("vision".parse::<AblationMode>().is_err());
}

#[test]
fn prepare_errors() {
    let first_turn = instance(&["find a red car"], vec![], "[search red car]");
    let mut model = micro(std::slice::from_ref(&first_turn), 11);
    model.config.ablation = AblationMode::VisionOnly;
    assert!(matches!(model.prepare(&first_turn), Err(ModelError::EmptyContext)));
    let wrong_dim = instance(&["x"], vec![vec![det("a", &["cat"], [0.1, 0.1, 0.2, 0.2], 7)]], "[image_cutout]");
    model.config.ablation = AblationMode::Full;
    assert!(matches!(model.prepare(&wrong_dim), Err(ModelError::FeatureDim { expected: 4, got: 7 })));
}

#[test]
fn within_image_detection_order_does_not_matter() {
    let inst = two_image_instance();
    let model = micro(std::slice::from_ref(&inst), 12);
    let mut permuted = inst.clone();
    permuted.images[0].detections.reverse();
    permuted.images[1].detections.swap(0, 1);
    let (a, b) = (model.loss(&inst).unwrap(), model.loss(&permuted).unwrap());
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let insts = common::instances(4, 4, 5);
    let model = micro(&insts, 13);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let back = GenExt::load(&path).unwrap();
    assert_eq!(back.vocab, model.vocab);
    assert_eq!(back.config, model.config);
    assert_eq!(back.params, model.params);
    for inst in &insts {
        assert_eq!(back.greedy_decode(inst).unwrap(), model.greedy_decode(inst).unwrap());
    }
    assert!(GenExt::from_bytes(b"nonsense").is_err());
}

#[test]
fn target_tokens_end_with_sentinel() {
    let inst = two_image_instance();
    let model = micro(std::slice::from_ref(&inst), 14);
    let p = model.prepare(&inst).unwrap();
    assert_eq!(*p.target.last().unwrap(), model.vocab.id(EOS).unwrap());
    assert_eq!(p.target.len(), inst.target.to_tokens().len() + 1);
}
