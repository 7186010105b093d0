//! Minibatch Adam training with best-validation model selection.

use std::time::Instant;

use caise_core::eval::{accuracy, EvalItem, EvalReport};
use caise_core::{Exec, TaskInstance};
use caise_nn::{Adam, Grads, ParamStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::genext::{GenExt, Prepared};
use crate::vocab::Vocab;
use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-instance loss over the epoch's minibatches (with dropout).
    pub train_nll: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub parameters: usize,
    pub train_instances: usize,
    pub val_instances: usize,
    /// Instances with nothing visible after ablation; excluded from training.
    pub skipped_instances: usize,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<EvalReport>,
}

/// Summed loss and gradients of a minibatch; instances are processed with
/// `exec` and merged in input order.
pub fn batch_gradients(model: &GenExt, batch: &[(&Prepared, Option<u64>)], exec: Exec) -> Result<(f64, Grads), ModelError> {
    let results = exec.map(batch, |(p, seed)| model.gradients(p, *seed));
    let mut total = 0.0;
    let mut grads = Grads::for_store(&model.params);
    for r in results {
        let (loss, g) = r?;
        total += loss;
        grads.merge(&g);
    }
    Ok((total, grads))
}

/// Greedy-decodes every instance and scores the predictions.
pub fn evaluate(model: &GenExt, instances: &[TaskInstance], exec: Exec) -> (Vec<EvalItem>, EvalReport) {
    let preds = exec.map(instances, |inst| model.predict(inst));
    let items: Vec<EvalItem> = instances
        .iter()
        .zip(preds)
        .map(|(inst, pred)| EvalItem {
            dialogue_id: inst.dialogue_id.clone(),
            pred,
            gt: inst.target.clone(),
        })
        .collect();
    let report = accuracy(&items);
    (items, report)
}

/// Trains from scratch and returns the best-validation model.
///
/// The vocabulary is built from the (unmasked) training instances. With an
/// empty validation set the last epoch is kept.
pub fn train(
    train: &[TaskInstance],
    val: &[TaskInstance],
    config: &ModelConfig,
    seed: u64,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(GenExt, TrainReport), ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    let vocab = Vocab::build(train);
    let mut model = GenExt::new(config.clone(), vocab, seed)?;
    let mut prepared = Vec::with_capacity(train.len());
    let mut skipped = 0;
    for inst in train {
        match model.prepare(inst) {
            Ok(p) => prepared.push(p),
            Err(ModelError::EmptyContext) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if prepared.is_empty() {
        return Err(ModelError::EmptySplit("train after ablation"));
    }
    let mut report = TrainReport {
        seed,
        config: config.clone(),
        vocab_size: model.vocab.len(),
        parameters: model.params.scalar_count(),
        train_instances: prepared.len(),
        val_instances: val.len(),
        skipped_instances: skipped,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: f64::NEG_INFINITY,
        test: None,
    };
    let mut adam = Adam::with_lr(&model.params, config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a1e);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut best: Option<ParamStore> = None;
    let dropout = config.dropout_embed > 0.0 || config.dropout_out > 0.0;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&Prepared, Option<u64>)> = chunk.iter().map(|&i| (&prepared[i], dropout.then(|| rng.gen()))).collect();
            let (loss, mut grads) = batch_gradients(&model, &batch, exec)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b, loss });
            }
            total += loss;
            grads.scale(1.0 / chunk.len() as f64);
            grads.clip_global_norm(config.clip_norm);
            adam.step(&mut model.params, &grads)?;
        }
        let val_accuracy = if val.is_empty() { 0.0 } else { evaluate(&model, val, exec).1.total };
        let log = EpochLog {
            epoch,
            train_nll: total / prepared.len() as f64,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        if val_accuracy > report.best_val_accuracy || val.is_empty() {
            report.best_val_accuracy = val_accuracy;
            report.best_epoch = epoch;
            best = Some(model.params.clone());
        }
        report.epochs.push(log);
    }
    if let Some(best) = best {
        model.params = best;
    }
    if report.best_val_accuracy == f64::NEG_INFINITY {
        report.best_val_accuracy = 0.0;
    }
    Ok((model, report))
}
