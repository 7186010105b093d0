mod common;

use caise_model::vocab::BOS_ID;
use caise_model::{argmax, GateMode, GenExt, ModelConfig, Vocab};
use caise_nn::DEFAULT_STEP;

fn assert_distribution(xs: &[f64], what: &str) {
    if xs.is_empty() {
        return;
    }
    let total: f64 = xs.iter().sum();
    assert!((total - 1.0).abs() < 1e-6, "{what} sums to {total}");
    assert!(xs.iter().all(|&p| p >= 0.0), "{what} has a negative entry");
}

/// 100 decode steps over 10 instances: every distribution is valid and the
/// generator-only clamp reproduces the generator distribution bit for bit.
#[test]
fn hundred_decode_steps_are_distributions() {
    let insts = common::instances(16, 4, 21);
    let mut cfg = ModelConfig::desk();
    cfg.max_decode_len = 10;
    let model = GenExt::new(cfg, Vocab::build(&insts), 2020).unwrap();
    let base = model.with_gate(GateMode::GeneratorOnly);
    let mut steps = 0;
    for inst in insts.iter().take(10) {
        let mut s = model.session(inst).unwrap();
        let mut b = base.session(inst).unwrap();
        let mut prev = BOS_ID;
        for _ in 0..10 {
            let out = s.step(prev).unwrap();
            let clamped = b.step(prev).unwrap();
            assert_distribution(&out.generator, "generator");
            assert_distribution(&out.utterance_copy, "utterance copy");
            assert_distribution(&out.concept_copy, "concept copy");
            assert_distribution(&out.gate, "gate");
            assert_distribution(&out.mixture, "mixture");
            assert_eq!(clamped.gate, [1.0, 0.0, 0.0]);
            assert_eq!(&clamped.mixture[..model.vocab.len()], &out.generator[..]);
            prev = argmax(&out.mixture);
            steps += 1;
        }
    }
    assert_eq!(steps, 100);
}

#[test]
fn full_loss_gradient_check_micro() {
    for seed in [2020, 2021, 2022] {
        let insts = common::instances(4, 3, seed);
        let picks = [0, insts.len() / 2, insts.len() - 1];
        for &i in &picks {
            let inst = &insts[i];
            let model = GenExt::new(ModelConfig::micro(), Vocab::from_instances([inst]), seed).unwrap();
            let report = model.check_gradients(inst, DEFAULT_STEP).unwrap();
            assert!(report.max_rel_error < 1e-4, "seed {seed} instance {i}: {:?}", report.worst());
        }
    }
}
