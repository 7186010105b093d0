//! Central finite-difference check of reverse-mode gradients.

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Var};
use crate::params::{Grads, ParamStore};
use crate::tensor::NnError;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub name: String,
    pub scalars: usize,
    /// `‖num − ana‖ / (‖num‖ + ‖ana‖)`, 0 when both vanish.
    pub rel_error: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&BlockError> {
        self.blocks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

fn finite(v: f64) -> Result<f64, NnError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NnError::NonFiniteLoss(v))
    }
}

/// Compares `analytic` against central differences of `loss` for every
/// parameter block. `params` is perturbed in place and restored.
pub fn grad_check<F>(params: &mut ParamStore, analytic: &Grads, mut loss: F, step: f64) -> Result<GradCheckReport, NnError>
where
    F: FnMut(&ParamStore) -> Result<f64, NnError>,
{
    finite(loss(params)?)?;
    let ids: Vec<_> = params.ids().collect();
    let mut blocks = Vec::with_capacity(ids.len());
    for id in ids {
        let n = params.get(id).len();
        let mut diff_sq = 0.0;
        let mut num_sq = 0.0;
        let mut ana_sq = 0.0;
        let mut max_abs_diff = 0.0f64;
        for j in 0..n {
            let orig = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = orig + step;
            let up = loss(params);
            params.get_mut(id).data_mut()[j] = orig - step;
            let down = loss(params);
            params.get_mut(id).data_mut()[j] = orig;
            let num = (finite(up?)? - finite(down?)?) / (2.0 * step);
            let ana = analytic.get(id).map_or(0.0, |g| g.data()[j]);
            diff_sq += (num - ana).powi(2);
            num_sq += num * num;
            ana_sq += ana * ana;
            max_abs_diff = max_abs_diff.max((num - ana).abs());
        }
        let denom = num_sq.sqrt() + ana_sq.sqrt();
        let rel_error = if denom < 1e-12 { 0.0 } else { diff_sq.sqrt() / denom };
        blocks.push(BlockError {
            name: params.name(id).to_string(),
            scalars: n,
            rel_error,
            max_abs_diff,
        });
    }
    let max_rel_error = blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { blocks, max_rel_error })
}

/// [`grad_check`] for a loss expressed as a graph builder; the analytic
/// gradient comes from [`Graph::backward`] on an evaluation graph.
pub fn check_graph<F>(params: &mut ParamStore, build: F, step: f64) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Graph) -> Result<Var, NnError>,
{
    let analytic = {
        let mut g = Graph::new(params);
        let loss = build(&mut g)?;
        finite(g.scalar(loss))?;
        g.backward(loss)
    };
    grad_check(
        params,
        &analytic,
        |p| {
            let mut g = Graph::new(p);
            let loss = build(&mut g)?;
            Ok(g.scalar(loss))
        },
        step,
    )
}
