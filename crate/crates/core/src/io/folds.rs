//! Shuffle-then-chunk k-fold splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Five folds over `0..n`: a seeded permutation cut into five contiguous
/// validation chunks whose sizes differ by at most one (larger chunks first).
/// Index lists are sorted ascending.
pub fn make_folds(n: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if n < NUM_FOLDS {
        return Err(Error::Invalid(format!(
            "need at least {NUM_FOLDS} patches for {NUM_FOLDS} folds, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / NUM_FOLDS, n % NUM_FOLDS);
    let mut start = 0;
    let mut folds = Vec::with_capacity(NUM_FOLDS);
    for fold in 0..NUM_FOLDS {
        let size = base + usize::from(fold < extra);
        let mut val = perm[start..start + size].to_vec();
        val.sort_unstable();
        let mut train: Vec<usize> = perm[..start].iter().chain(&perm[start + size..]).copied().collect();
        train.sort_unstable();
        folds.push(FoldSplit { fold, train, val });
        start += size;
    }
    Ok(folds)
}
