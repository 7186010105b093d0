//! Dialogue-level train/validation/test splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dialogue::Dialogue;

/// Reference split of 1,611 dialogues.
pub const REFERENCE_SPLIT: [usize; 3] = [1052, 262, 297];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("need at least 3 dialogues to split, got {0}")]
    TooFewDialogues(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
}

/// Default proportions, exactly the reference split's shares.
pub fn default_ratios() -> [f64; 3] {
    let total: usize = REFERENCE_SPLIT.iter().sum();
    REFERENCE_SPLIT.map(|n| n as f64 / total as f64)
}

/// Largest-remainder apportionment of `n` items; ties in the fractional
/// part go to the earlier split.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3], SplitError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadRatios(ratios));
    }
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let mut remaining = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[i] += 1;
        remaining -= 1;
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then consecutive train/val/test slices.
pub fn split_items<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<Splits<T>, SplitError> {
    if items.len() < 3 {
        return Err(SplitError::TooFewDialogues(items.len()));
    }
    let [a, b, _] = split_sizes(items.len(), ratios)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |range: std::ops::Range<usize>| order[range].iter().map(|&i| items[i].clone()).collect();
    Ok(Splits {
        train: pick(0..a),
        val: pick(a..a + b),
        test: pick(a + b..items.len()),
    })
}

pub fn split_dialogues(ds: &[Dialogue], ratios: [f64; 3], seed: u64) -> Result<Splits<Dialogue>, SplitError> {
    split_items(ds, ratios, seed)
}
