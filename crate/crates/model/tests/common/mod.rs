#![allow(dead_code)]

use caise_core::corpus::{Corpus, ImageStore};
use caise_core::dialogue::instances_from_dialogues;
use caise_core::synth::{render_entry, synth_corpus, synthesize_dialogues, TemplateBank};
use caise_core::{Dialogue, TaskInstance};

pub fn corpus(feature_dim: usize) -> Corpus {
    Corpus::from_entries(synth_corpus(1, 300), ImageStore::Rendered(render_entry), feature_dim).unwrap()
}

pub fn dialogues(feature_dim: usize, n: usize, seed: u64) -> Vec<Dialogue> {
    synthesize_dialogues(seed, n, &corpus(feature_dim), &TemplateBank::builtin()).unwrap()
}

pub fn instances(feature_dim: usize, n: usize, seed: u64) -> Vec<TaskInstance> {
    instances_from_dialogues(&dialogues(feature_dim, n, seed)).unwrap()
}
