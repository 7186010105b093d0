//! Encoder, copy-gated decoder, teacher-forced loss and greedy decoding.

use std::path::Path;

use caise_core::{Command, TaskInstance};
use caise_nn::{check_graph, checkpoint, positional_encoding, BiLstm, Embedding, GradCheckReport, Grads, Graph, Linear, Lstm, NnError, ParamId, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ablation::apply_ablation;
use crate::config::{GateMode, ModelConfig};
use crate::vocab::{Vocab, BOS_ID, EOS, EOS_ID, PAD_ID, UNK_ID};
use crate::ModelError;

/// Probability floor applied before the log in the loss.
pub const PROB_FLOOR: f64 = 1e-12;
pub const CHECKPOINT_FORMAT: &str = "caise-genext/1";

/// Parameter handles for every trainable block.
#[derive(Debug, Clone)]
pub struct Layers {
    pub embedding: Embedding,
    pub utterance_encoder: BiLstm,
    pub dialogue: Lstm,
    pub concept_encoder: BiLstm,
    /// `Linear([V̂; B])`
    pub visual: Linear,
    /// `W_v`, `3d × d`
    pub fusion: Linear,
    pub null_utterance: ParamId,
    pub null_visual: ParamId,
    pub decoder: Lstm,
    /// Projects `[h; ctx; h⊙ctx]` to `e_t`.
    pub attention: Linear,
    pub generator: Linear,
    /// `W_u`
    pub utterance_copy: Linear,
    /// `W_c`
    pub concept_copy: Linear,
    /// `W_g`, `d × 3`
    pub gate: Linear,
}

impl Layers {
    fn new(store: &mut ParamStore, cfg: &ModelConfig, vocab: usize, rng: &mut ChaCha8Rng) -> Self {
        let (d, e) = (cfg.hidden, cfg.embed);
        let null = |store: &mut ParamStore, name: &str, rng: &mut ChaCha8Rng| store.add_uniform(name, 1, d, 0.1, rng);
        Layers {
            embedding: Embedding::new(store, "embed", vocab, e, rng),
            utterance_encoder: BiLstm::new(store, "utt_enc", e, d / 2, rng),
            dialogue: Lstm::new(store, "dialogue", d, d, rng),
            concept_encoder: BiLstm::new(store, "concept_enc", e, d / 2, rng),
            visual: Linear::new(store, "visual", cfg.feature_dim + 5, d, true, rng),
            fusion: Linear::new(store, "fusion", 3 * d, d, false, rng),
            null_utterance: null(store, "null_u", rng),
            null_visual: null(store, "null_v", rng),
            decoder: Lstm::new(store, "decoder", e, d, rng),
            attention: Linear::new(store, "attention", 3 * d, d, true, rng),
            generator: Linear::new(store, "generator", d, vocab, true, rng),
            utterance_copy: Linear::new(store, "copy_u", d, d, false, rng),
            concept_copy: Linear::new(store, "copy_c", d, d, false, rng),
            gate: Linear::new(store, "gate", d, 3, false, rng),
        }
    }
}

/// Target token at one decoding step, resolved against every source.
#[derive(Debug, Clone, PartialEq)]
struct StepTarget {
    generator: Option<usize>,
    utterance: Vec<usize>,
    concept: Vec<usize>,
}

/// An instance converted to ids, after ablation masking.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    utterance_ids: Vec<Vec<usize>>,
    utterance_lens: Vec<usize>,
    /// Surface tokens of all real utterance positions, utterance-major.
    pub utterance_tokens: Vec<String>,
    concept_ids: Vec<Vec<usize>>,
    concept_lens: Vec<usize>,
    /// Surface tokens of all concept positions, detection-major.
    pub concept_tokens: Vec<String>,
    features: Tensor,
    pe: Tensor,
    /// Context tokens outside the vocabulary; extended id `V + i`.
    pub oov: Vec<String>,
    /// Extended ids of the target tokens followed by the end sentinel.
    pub target: Vec<usize>,
    steps: Vec<StepTarget>,
}

impl Prepared {
    pub fn detections(&self) -> usize {
        self.concept_ids.len()
    }

    pub fn utterances(&self) -> usize {
        self.utterance_ids.len()
    }
}

/// Encoder values, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutputs {
    /// `O×d` visual features after the positional encoding; `None` without detections.
    pub v: Option<Tensor>,
    /// Concept token states, one row per concept position.
    pub c: Option<Tensor>,
    /// Utterance token states, one row per real token position.
    pub u_hat: Option<Tensor>,
    /// Dialogue states, one row per utterance (the null row when none are visible).
    pub u: Tensor,
    pub s: Option<Tensor>,
    pub u_bar: Option<Tensor>,
    pub v_bar: Tensor,
}

#[derive(Debug, Clone, Copy)]
struct EncVars {
    v: Option<Var>,
    c: Option<Var>,
    u_hat: Option<Var>,
    u: Var,
    s: Option<Var>,
    u_bar: Option<Var>,
    v_bar: Var,
    h0: Var,
}

#[derive(Debug, Clone, Copy)]
struct StepVars {
    h: Var,
    c: Var,
    e: Var,
    a_g: Var,
    a_u: Option<Var>,
    a_c: Option<Var>,
    gate: Var,
}

/// Everything computed at one decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeStepOutput {
    pub h: Vec<f64>,
    pub e: Vec<f64>,
    /// Over the base vocabulary.
    pub generator: Vec<f64>,
    /// Over utterance token positions; empty when no utterance is visible.
    pub utterance_copy: Vec<f64>,
    /// Over concept token positions; empty when no detection is visible.
    pub concept_copy: Vec<f64>,
    /// Generator, utterance copy, concept copy.
    pub gate: [f64; 3],
    /// Over the extended vocabulary (base vocabulary then [`Prepared::oov`]).
    pub mixture: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenSource {
    Generator,
    UtteranceCopy,
    ConceptCopy,
}

impl TokenSource {
    fn from_gate(g: [f64; 3]) -> Self {
        let mut best = 0;
        for i in 1..3 {
            if g[i] > g[best] {
                best = i;
            }
        }
        [TokenSource::Generator, TokenSource::UtteranceCopy, TokenSource::ConceptCopy][best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub tokens: Vec<String>,
    pub gate_trace: Vec<[f64; 3]>,
    pub sources: Vec<TokenSource>,
    /// False when the length cap was hit before the end sentinel.
    pub finished: bool,
    /// Parsed command; `None` when unfinished or invalid.
    pub command: Option<Command>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    format: String,
    config: ModelConfig,
    vocab: Vocab,
}

#[derive(Debug, Clone)]
pub struct GenExt {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub layers: Layers,
}

fn tensor_rows(g: &Graph, v: Var) -> Tensor {
    g.value(v).clone()
}

impl GenExt {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Layers::new(&mut params, &config, vocab.len(), &mut rng);
        Ok(GenExt { config, vocab, params, layers })
    }

    /// Same parameters with a different gate mode.
    pub fn with_gate(&self, gate: GateMode) -> Self {
        let mut m = self.clone();
        m.config.gate = gate;
        m
    }

    fn ext_id(&self, oov: &mut Vec<String>, token: &str) -> usize {
        if let Some(id) = self.vocab.id(token) {
            return id;
        }
        match oov.iter().position(|t| t == token) {
            Some(i) => self.vocab.len() + i,
            None => {
                oov.push(token.to_string());
                self.vocab.len() + oov.len() - 1
            }
        }
    }

    /// Applies the configured ablation and converts to ids.
    pub fn prepare(&self, instance: &TaskInstance) -> Result<Prepared, ModelError> {
        let inst = apply_ablation(instance, self.config.ablation);
        let detections: Vec<_> = inst.images.iter().enumerate().flat_map(|(k, im)| im.detections.iter().map(move |d| (k, d))).collect();
        if inst.utterances.is_empty() && detections.is_empty() {
            return Err(ModelError::EmptyContext);
        }
        let mut oov = Vec::new();
        let mut utterance_ids = Vec::new();
        let mut utterance_lens = Vec::new();
        let mut utterance_tokens = Vec::new();
        for u in &inst.utterances {
            utterance_lens.push(u.tokens.len());
            if u.tokens.is_empty() {
                utterance_ids.push(vec![PAD_ID]);
            } else {
                utterance_ids.push(u.tokens.iter().map(|t| self.vocab.input_id(t)).collect());
            }
            for t in &u.tokens {
                self.ext_id(&mut oov, t);
                utterance_tokens.push(t.clone());
            }
        }
        let fd = self.config.feature_dim;
        let d = self.config.hidden;
        let mut features = Tensor::zeros(detections.len(), fd + 5);
        let mut pe = Tensor::zeros(detections.len(), d);
        let mut concept_ids = Vec::new();
        let mut concept_lens = Vec::new();
        let mut concept_tokens = Vec::new();
        for (row, (image, det)) in detections.iter().enumerate() {
            if det.feature.len() != fd {
                return Err(ModelError::FeatureDim {
                    expected: fd,
                    got: det.feature.len(),
                });
            }
            let r = features.row_mut(row);
            r[..fd].copy_from_slice(&det.feature);
            r[fd..].copy_from_slice(&det.bbox_feature());
            pe.row_mut(row).copy_from_slice(&positional_encoding(*image, d));
            concept_lens.push(det.concept.len());
            if det.concept.is_empty() {
                concept_ids.push(vec![PAD_ID]);
            } else {
                concept_ids.push(det.concept.iter().map(|t| self.vocab.input_id(t)).collect());
            }
            for t in &det.concept {
                self.ext_id(&mut oov, t);
                concept_tokens.push(t.clone());
            }
        }
        let v = self.vocab.len();
        let mut target = Vec::new();
        let mut steps = Vec::new();
        for t in inst.target.to_tokens().iter().map(String::as_str).chain([EOS]) {
            let id = self.vocab.id(t).or_else(|| oov.iter().position(|o| o == t).map(|i| v + i));
            target.push(id.unwrap_or(UNK_ID));
            steps.push(StepTarget {
                generator: self.vocab.id(t),
                utterance: utterance_tokens.iter().enumerate().filter(|(_, u)| *u == t).map(|(i, _)| i).collect(),
                concept: concept_tokens.iter().enumerate().filter(|(_, c)| *c == t).map(|(i, _)| i).collect(),
            });
        }
        Ok(Prepared {
            utterance_ids,
            utterance_lens,
            utterance_tokens,
            concept_ids,
            concept_lens,
            concept_tokens,
            features,
            pe,
            oov,
            target,
            steps,
        })
    }

    pub fn extended_token(&self, prep: &Prepared, id: usize) -> Option<String> {
        match self.vocab.token(id) {
            Some(t) => Some(t.to_string()),
            None => prep.oov.get(id - self.vocab.len()).cloned(),
        }
    }

    /// Runs a batch of sequences (rows of `ids`, padded with `PAD_ID`) through a BiLSTM.
    fn encode_sequences(&self, g: &mut Graph, enc: &BiLstm, ids: &[Vec<usize>], lens: &[usize]) -> Result<(Var, Option<Var>), NnError> {
        let rows = ids.len();
        let steps = ids.iter().map(Vec::len).max().unwrap_or(1);
        let mut xs = Vec::with_capacity(steps);
        let mut masks = Vec::with_capacity(steps);
        for t in 0..steps {
            let col: Vec<usize> = ids.iter().map(|r| r.get(t).copied().unwrap_or(PAD_ID)).collect();
            let x = self.layers.embedding.forward(g, &col)?;
            xs.push(g.dropout(x, self.config.dropout_embed));
            masks.push(ids.iter().map(|r| if t < r.len() { 1.0 } else { 0.0 }).collect::<Vec<f64>>());
        }
        let s = enc.forward(g, &xs, Some(&masks))?;
        let summary = g.concat_cols(&[s.forward[steps - 1], s.backward[0]])?;
        let positions: Vec<usize> = lens.iter().enumerate().flat_map(|(i, &n)| (0..n).map(move |t| t * rows + i)).collect();
        if positions.is_empty() {
            return Ok((summary, None));
        }
        let mut per_step = Vec::with_capacity(steps);
        for t in 0..steps {
            per_step.push(g.concat_cols(&[s.forward[t], s.backward[t]])?);
        }
        let stacked = g.concat_rows(&per_step)?;
        Ok((summary, Some(g.gather_rows(stacked, &positions)?)))
    }

    fn encode(&self, g: &mut Graph, p: &Prepared) -> Result<EncVars, NnError> {
        let l = &self.layers;
        let (u, u_hat, h0) = if p.utterance_ids.is_empty() {
            let nu = g.param(l.null_utterance);
            (nu, None, nu)
        } else {
            let (summary, u_hat) = self.encode_sequences(g, &l.utterance_encoder, &p.utterance_ids, &p.utterance_lens)?;
            let (mut h, mut c) = l.dialogue.zero_state(g, 1);
            let mut hs = Vec::with_capacity(p.utterance_ids.len());
            for i in 0..p.utterance_ids.len() {
                let x = g.slice_rows(summary, i, 1)?;
                (h, c) = l.dialogue.step(g, x, h, c)?;
                hs.push(h);
            }
            (g.concat_rows(&hs)?, u_hat, h)
        };
        if p.concept_ids.is_empty() {
            let nv = g.param(l.null_visual);
            return Ok(EncVars { v: None, c: None, u_hat, u, s: None, u_bar: None, v_bar: nv, h0 });
        }
        let feats = g.constant(p.features.clone());
        let v = l.visual.forward(g, feats)?;
        let pe = g.constant(p.pe.clone());
        let v = g.add(v, pe)?;
        let s = g.matmul_t(v, u)?;
        let a = g.softmax_rows(s);
        let u_bar = g.matmul(a, u)?;
        let vu = g.mul(v, u_bar)?;
        let cat = g.concat_cols(&[v, u_bar, vu])?;
        let v_bar = l.fusion.forward(g, cat)?;
        let (_, c) = self.encode_sequences(g, &l.concept_encoder, &p.concept_ids, &p.concept_lens)?;
        Ok(EncVars { v: Some(v), c, u_hat, u, s: Some(s), u_bar: Some(u_bar), v_bar, h0 })
    }

    fn keep_mask(&self, enc: &EncVars) -> [bool; 3] {
        match self.config.gate {
            GateMode::GeneratorOnly => [true, false, false],
            GateMode::Adaptive => [true, enc.u_hat.is_some(), enc.c.is_some()],
        }
    }

    fn step(&self, g: &mut Graph, enc: &EncVars, input: usize, h: Var, c: Var) -> Result<StepVars, NnError> {
        let l = &self.layers;
        let x = l.embedding.forward(g, &[input])?;
        let x = g.dropout(x, self.config.dropout_embed);
        let (h, c) = l.decoder.step(g, x, h, c)?;
        let scores = g.matmul_t(h, enc.v_bar)?;
        let alpha = g.softmax_rows(scores);
        let ctx = g.matmul(alpha, enc.v_bar)?;
        let hc = g.mul(h, ctx)?;
        let cat = g.concat_cols(&[h, ctx, hc])?;
        let e = l.attention.forward(g, cat)?;
        let e_out = g.dropout(e, self.config.dropout_out);
        let logits = l.generator.forward(g, e_out)?;
        let a_g = g.softmax_rows(logits);
        let keep = self.keep_mask(enc);
        let a_u = match enc.u_hat {
            Some(u_hat) if keep[1] => {
                let q = l.utterance_copy.forward(g, h)?;
                let sc = g.matmul_t(q, u_hat)?;
                Some(g.softmax_rows(sc))
            }
            _ => None,
        };
        let a_c = match enc.c {
            Some(cv) if keep[2] => {
                let q = l.concept_copy.forward(g, e_out)?;
                let sc = g.matmul_t(q, cv)?;
                Some(g.softmax_rows(sc))
            }
            _ => None,
        };
        let gl = l.gate.forward(g, e_out)?;
        let gate = g.masked_softmax_rows(gl, &keep)?;
        Ok(StepVars { h, c, e, a_g, a_u, a_c, gate })
    }

    fn input_id(&self, ext: usize) -> usize {
        if ext < self.vocab.len() {
            ext
        } else {
            UNK_ID
        }
    }

    /// Summed teacher-forced negative log-likelihood as a graph node.
    pub fn loss_node(&self, g: &mut Graph, p: &Prepared) -> Result<Var, NnError> {
        let enc = self.encode(g, p)?;
        let (mut h, mut c) = (enc.h0, g.constant(Tensor::zeros(1, self.config.hidden)));
        let mut input = BOS_ID;
        let mut nlls = Vec::with_capacity(p.steps.len());
        for (step, &next) in p.steps.iter().zip(&p.target) {
            let sv = self.step(g, &enc, input, h, c)?;
            let mut terms = Vec::new();
            if let Some(id) = step.generator {
                let pick = g.pick_sum(sv.a_g, &[(0, id)])?;
                let w = g.slice_cols(sv.gate, 0, 1)?;
                terms.push(g.mul(pick, w)?);
            }
            for (dist, positions, slot) in [(sv.a_u, &step.utterance, 1), (sv.a_c, &step.concept, 2)] {
                if let Some(dist) = dist {
                    if !positions.is_empty() {
                        let pos: Vec<(usize, usize)> = positions.iter().map(|&j| (0, j)).collect();
                        let pick = g.pick_sum(dist, &pos)?;
                        let w = g.slice_cols(sv.gate, slot, 1)?;
                        terms.push(g.mul(pick, w)?);
                    }
                }
            }
            let prob = if terms.is_empty() { g.constant(Tensor::scalar(0.0)) } else { g.add_all(&terms)? };
            nlls.push(g.neg_log_floor(prob, PROB_FLOOR)?);
            (h, c) = (sv.h, sv.c);
            input = self.input_id(next);
        }
        g.add_all(&nlls)
    }

    /// Teacher-forced loss without dropout.
    pub fn loss(&self, instance: &TaskInstance) -> Result<f64, ModelError> {
        let p = self.prepare(instance)?;
        let mut g = Graph::new(&self.params);
        let l = self.loss_node(&mut g, &p)?;
        Ok(g.scalar(l))
    }

    /// Loss and parameter gradients. Dropout is active when `dropout_seed` is given.
    pub fn gradients(&self, p: &Prepared, dropout_seed: Option<u64>) -> Result<(f64, Grads), ModelError> {
        let mut g = match dropout_seed {
            Some(s) => Graph::training(&self.params, ChaCha8Rng::seed_from_u64(s)),
            None => Graph::new(&self.params),
        };
        let l = self.loss_node(&mut g, p)?;
        Ok((g.scalar(l), g.backward(l)))
    }

    /// Finite-difference check of the full loss on one instance.
    pub fn check_gradients(&self, instance: &TaskInstance, step: f64) -> Result<GradCheckReport, ModelError> {
        let p = self.prepare(instance)?;
        let mut params = self.params.clone();
        Ok(check_graph(&mut params, |g| self.loss_node(g, &p), step)?)
    }

    pub fn session(&self, instance: &TaskInstance) -> Result<DecodeSession<'_>, ModelError> {
        let prep = self.prepare(instance)?;
        let mut graph = Graph::new(&self.params);
        let enc = self.encode(&mut graph, &prep)?;
        let c = graph.constant(Tensor::zeros(1, self.config.hidden));
        Ok(DecodeSession {
            model: self,
            h: enc.h0,
            c,
            graph,
            prep,
            enc,
        })
    }

    /// Argmax decoding until the end sentinel or the length cap.
    pub fn greedy_decode(&self, instance: &TaskInstance) -> Result<Decoded, ModelError> {
        let mut s = self.session(instance)?;
        let mut out = Decoded {
            tokens: Vec::new(),
            gate_trace: Vec::new(),
            sources: Vec::new(),
            finished: false,
            command: None,
        };
        let mut prev = BOS_ID;
        for _ in 0..self.config.max_decode_len {
            let step = s.step(prev)?;
            let next = argmax(&step.mixture);
            if next == EOS_ID {
                out.finished = true;
                break;
            }
            out.tokens.push(self.extended_token(&s.prep, next).unwrap_or_default());
            out.gate_trace.push(step.gate);
            out.sources.push(TokenSource::from_gate(step.gate));
            prev = next;
        }
        if out.finished {
            out.command = Command::from_tokens(&out.tokens).ok();
        }
        Ok(out)
    }

    /// Decoded command, or `None` for an unusable prediction.
    pub fn predict(&self, instance: &TaskInstance) -> Option<Command> {
        self.greedy_decode(instance).ok().and_then(|d| d.command)
    }

    fn meta_json(&self) -> serde_json::Value {
        serde_json::to_value(CheckpointMeta {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        })
        .expect("serializable")
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        Ok(checkpoint::to_bytes(&self.meta_json(), &self.params)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let (meta, store) = checkpoint::from_bytes(bytes)?;
        let meta: CheckpointMeta = serde_json::from_value(meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unsupported model format `{}`", meta.format)));
        }
        let mut model = GenExt::new(meta.config, meta.vocab, 0)?;
        checkpoint::restore_into(&mut model.params, &store)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        GenExt::from_bytes(&std::fs::read(path)?)
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Step-by-step inference over one encoded instance.
pub struct DecodeSession<'m> {
    model: &'m GenExt,
    graph: Graph<'m>,
    prep: Prepared,
    enc: EncVars,
    h: Var,
    c: Var,
}

impl DecodeSession<'_> {
    pub fn prepared(&self) -> &Prepared {
        &self.prep
    }

    pub fn encoder_outputs(&self) -> EncoderOutputs {
        let g = &self.graph;
        let e = &self.enc;
        EncoderOutputs {
            v: e.v.map(|v| tensor_rows(g, v)),
            c: e.c.map(|v| tensor_rows(g, v)),
            u_hat: e.u_hat.map(|v| tensor_rows(g, v)),
            u: tensor_rows(g, e.u),
            s: e.s.map(|v| tensor_rows(g, v)),
            u_bar: e.u_bar.map(|v| tensor_rows(g, v)),
            v_bar: tensor_rows(g, e.v_bar),
        }
    }

    /// Advances the decoder by one token, given as an extended-vocabulary id.
    pub fn step(&mut self, prev: usize) -> Result<DecodeStepOutput, ModelError> {
        let m = self.model;
        let sv = m.step(&mut self.graph, &self.enc, m.input_id(prev), self.h, self.c)?;
        (self.h, self.c) = (sv.h, sv.c);
        let g = &self.graph;
        let gate: [f64; 3] = g.value(sv.gate).data().try_into().expect("three gate weights");
        let generator = g.value(sv.a_g).data().to_vec();
        let utterance_copy = sv.a_u.map(|v| g.value(v).data().to_vec()).unwrap_or_default();
        let concept_copy = sv.a_c.map(|v| g.value(v).data().to_vec()).unwrap_or_default();
        let base = m.vocab.len();
        let mut mixture = vec![0.0; base + self.prep.oov.len()];
        for (slot, p) in mixture.iter_mut().zip(&generator) {
            *slot = gate[0] * p;
        }
        let ext = |t: &str| m.vocab.id(t).unwrap_or_else(|| base + self.prep.oov.iter().position(|o| o == t).expect("context token"));
        if gate[1] != 0.0 {
            for (t, p) in self.prep.utterance_tokens.iter().zip(&utterance_copy) {
                mixture[ext(t)] += gate[1] * p;
            }
        }
        if gate[2] != 0.0 {
            for (t, p) in self.prep.concept_tokens.iter().zip(&concept_copy) {
                mixture[ext(t)] += gate[2] * p;
            }
        }
        Ok(DecodeStepOutput {
            h: g.value(sv.h).data().to_vec(),
            e: g.value(sv.e).data().to_vec(),
            generator,
            utterance_copy,
            concept_copy,
            gate,
            mixture,
        })
    }
}
