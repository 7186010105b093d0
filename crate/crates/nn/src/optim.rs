//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::params::{Grads, ParamStore};
use crate::tensor::{mismatch, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, t)| Tensor::zeros(t.rows(), t.cols())).collect();
        Adam {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn with_lr(store: &ParamStore, lr: f64) -> Self {
        Adam::new(store, AdamConfig { lr, ..AdamConfig::default() })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. Parameters without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> Result<(), NnError> {
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let p = store.get_mut(id);
            if let Some(g) = grads.get(id) {
                if g.shape() != p.shape() {
                    return Err(mismatch("adam_step", p.shape(), g.shape()));
                }
            }
            let g = grads.get(id).map(Tensor::data);
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g.map_or(0.0, |g| g[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::row_vector(vec![1.0, -2.0]));
        let mut adam = Adam::with_lr(&store, 0.1);
        let mut g = Grads::for_store(&store);
        g.accumulate(a, &Tensor::zeros(1, 2));
        adam.step(&mut store, &g).unwrap();
        let empty = Grads::for_store(&store);
        adam.step(&mut store, &empty).unwrap();
        assert_eq!(store.get(a).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::row_vector(vec![0.0, 0.0, 0.0]));
        let mut adam = Adam::with_lr(&store, 0.01);
        let mut g = Grads::for_store(&store);
        g.accumulate(a, &Tensor::row_vector(vec![3.0, -0.002, 250.0]));
        adam.step(&mut store, &g).unwrap();
        for (x, sign) in store.get(a).data().iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - sign * 0.01).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(1, 2));
        let mut adam = Adam::with_lr(&store, 0.1);
        let mut g = Grads::for_store(&store);
        g.accumulate(a, &Tensor::zeros(2, 1));
        assert!(matches!(adam.step(&mut store, &g), Err(NnError::ShapeMismatch { .. })));
    }
}
