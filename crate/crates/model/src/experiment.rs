//! Multi-seed comparisons of model variants on a fixed dataset.

use caise_core::dialogue::instances_from_dialogues;
use caise_core::eval::EvalReport;
use caise_core::split::{default_ratios, split_dialogues, Splits};
use caise_core::synth::{render_entry, synth_corpus, synthesize_dialogues, TemplateBank};
use caise_core::{Corpus, Dialogue, Exec, ImageStore, TaskInstance};
use serde::{Deserialize, Serialize};

use crate::ablation::AblationMode;
use crate::config::{GateMode, ModelConfig};
use crate::train::{evaluate, train, EpochLog, TrainReport};
use crate::ModelError;

/// Seeds and sizes of the generated benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub corpus_seed: u64,
    pub corpus_size: usize,
    pub dialogue_seed: u64,
    pub dialogues: usize,
    pub split_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            corpus_seed: 1,
            corpus_size: 1000,
            dialogue_seed: 7,
            dialogues: 300,
            split_seed: 2020,
        }
    }
}

impl SyntheticSpec {
    pub fn corpus(&self, feature_dim: usize) -> Result<Corpus, ModelError> {
        Corpus::from_entries(synth_corpus(self.corpus_seed, self.corpus_size), ImageStore::Rendered(render_entry), feature_dim)
            .map_err(|e| ModelError::Data(e.to_string()))
    }

    pub fn dialogues(&self, corpus: &Corpus) -> Result<Vec<Dialogue>, ModelError> {
        synthesize_dialogues(self.dialogue_seed, self.dialogues, corpus, &TemplateBank::builtin()).map_err(|e| ModelError::Data(e.to_string()))
    }

    pub fn dataset(&self, corpus: &Corpus) -> Result<Dataset, ModelError> {
        let ds = self.dialogues(corpus)?;
        let splits = split_dialogues(&ds, default_ratios(), self.split_seed).map_err(|e| ModelError::Data(e.to_string()))?;
        Dataset::from_splits(splits)
    }
}

/// Dialogue splits and the task instances drawn from them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dialogues: Splits<Dialogue>,
    pub train: Vec<TaskInstance>,
    pub val: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
}

impl Dataset {
    pub fn from_splits(dialogues: Splits<Dialogue>) -> Result<Self, ModelError> {
        let inst = |d: &[Dialogue]| instances_from_dialogues(d).map_err(|e| ModelError::Data(e.to_string()));
        Ok(Dataset {
            train: inst(&dialogues.train)?,
            val: inst(&dialogues.val)?,
            test: inst(&dialogues.test)?,
            dialogues,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub gate: GateMode,
    pub ablation: AblationMode,
}

impl Variant {
    /// Both copy heads, all inputs.
    pub fn full() -> Self {
        Variant {
            name: "full".into(),
            gate: GateMode::Adaptive,
            ablation: AblationMode::Full,
        }
    }

    /// Generator only, all inputs.
    pub fn base() -> Self {
        Variant {
            name: "base".into(),
            gate: GateMode::GeneratorOnly,
            ablation: AblationMode::Full,
        }
    }

    pub fn ablation(mode: AblationMode) -> Self {
        Variant {
            name: mode.as_str().into(),
            gate: GateMode::Adaptive,
            ablation: mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    /// One report per seed, each with its test evaluation.
    pub runs: Vec<TrainReport>,
    /// Per-seed test reports averaged.
    pub mean: EvalReport,
}

impl VariantResult {
    pub fn test_reports(&self) -> Vec<EvalReport> {
        self.runs.iter().filter_map(|r| r.test.clone()).collect()
    }
}

/// Trains `variant` once per seed and scores each run on the test split.
pub fn run_variant(
    data: &Dataset,
    base: &ModelConfig,
    variant: &Variant,
    seeds: &[u64],
    exec: Exec,
    mut on_epoch: impl FnMut(u64, &EpochLog),
) -> Result<VariantResult, ModelError> {
    let mut config = base.clone();
    config.gate = variant.gate;
    config.ablation = variant.ablation;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (model, mut report) = train(&data.train, &data.val, &config, seed, exec, |e| on_epoch(seed, e))?;
        report.test = Some(evaluate(&model, &data.test, exec).1);
        runs.push(report);
    }
    let tests: Vec<EvalReport> = runs.iter().filter_map(|r| r.test.clone()).collect();
    Ok(VariantResult {
        variant: variant.clone(),
        mean: EvalReport::mean(&tests),
        runs,
    })
}

/// One row per variant with mean test accuracies.
pub fn results_table(results: &[VariantResult]) -> String {
    let mut out = EvalReport::table_header();
    out.push('\n');
    for r in results {
        out.push_str(&r.mean.table_row(&r.variant.name));
        out.push('\n');
    }
    out
}
