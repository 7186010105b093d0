//! Parameterized layers built on [`Graph`] ops.

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{NnError, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, bias: bool, rng: &mut R) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input, output, rng);
        let b = bias.then(|| store.add(format!("{name}.b"), Tensor::zeros(1, output)));
        Linear { w, b }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let w = g.param(self.w);
        let b = self.b.map(|b| g.param(b));
        g.linear(x, w, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: ParamId,
}

impl Embedding {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut R) -> Self {
        Embedding {
            table: store.add_uniform(format!("{name}.table"), vocab, dim, 0.1, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Result<Var, NnError> {
        let e = g.param(self.table);
        g.embed(e, ids)
    }
}

/// One LSTM direction. Weights are `(input + hidden) × 4·hidden` in
/// input, forget, candidate, output gate order.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input + hidden, 4 * hidden, rng);
        let mut bias = Tensor::zeros(1, 4 * hidden);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{name}.b"), bias);
        Lstm { w, b, input, hidden }
    }

    /// Zero initial state for a batch of `n` rows.
    pub fn zero_state(&self, g: &mut Graph, n: usize) -> (Var, Var) {
        let h = g.constant(Tensor::zeros(n, self.hidden));
        let c = g.constant(Tensor::zeros(n, self.hidden));
        (h, c)
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> Result<(Var, Var), NnError> {
        lstm_step(g, x, h, c, self)
    }

    /// Runs over `xs` (each `n×input`). Rows whose mask entry is 0 at a step
    /// keep their previous state, so padded positions are skipped.
    pub fn run(&self, g: &mut Graph, xs: &[Var], masks: Option<&[Vec<f64>]>, init: (Var, Var)) -> Result<Vec<Var>, NnError> {
        let (mut h, mut c) = init;
        let mut out = Vec::with_capacity(xs.len());
        for (t, &x) in xs.iter().enumerate() {
            let (nh, nc) = self.step(g, x, h, c)?;
            match masks {
                Some(m) if m[t].iter().any(|&v| v != 1.0) => {
                    h = g.blend_rows(nh, h, &m[t])?;
                    c = g.blend_rows(nc, c, &m[t])?;
                }
                _ => {
                    h = nh;
                    c = nc;
                }
            }
            out.push(h);
        }
        Ok(out)
    }
}

/// `(h_t, c_t)` from `x_t` and the previous state.
pub fn lstm_step(g: &mut Graph, x: Var, h_prev: Var, c_prev: Var, p: &Lstm) -> Result<(Var, Var), NnError> {
    let xh = g.concat_cols(&[x, h_prev])?;
    let w = g.param(p.w);
    let b = g.param(p.b);
    let pre = g.linear(xh, w, Some(b))?;
    g.lstm_cell(pre, c_prev)
}

#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

/// Per-position states of both directions.
#[derive(Debug, Clone)]
pub struct BiStates {
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

impl BiLstm {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        BiLstm {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, xs: &[Var], masks: Option<&[Vec<f64>]>) -> Result<BiStates, NnError> {
        bilstm(g, xs, masks, self)
    }
}

/// Runs both directions over a (possibly padded) batch of sequences.
/// Padding must come after the real positions of each row; the backward
/// direction then starts from zero state at each row's last real position.
pub fn bilstm(g: &mut Graph, xs: &[Var], masks: Option<&[Vec<f64>]>, p: &BiLstm) -> Result<BiStates, NnError> {
    let n = match xs.first() {
        Some(&x) => g.shape(x)[0],
        None => return Ok(BiStates { forward: vec![], backward: vec![] }),
    };
    let init = p.fwd.zero_state(g, n);
    let forward = p.fwd.run(g, xs, masks, init)?;
    let rev: Vec<Var> = xs.iter().rev().copied().collect();
    let rev_masks: Option<Vec<Vec<f64>>> = masks.map(|m| m.iter().rev().cloned().collect());
    let init = p.bwd.zero_state(g, n);
    let mut backward = p.bwd.run(g, &rev, rev_masks.as_deref(), init)?;
    backward.reverse();
    Ok(BiStates { forward, backward })
}

/// Sinusoidal encoding: `sin` at even, `cos` at odd components.
pub fn positional_encoding(index: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = index as f64 / rate;
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}
