use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IMAGES_PER_SET: usize = 70;
pub const TEST_SIZE: usize = 50;
pub const TRAIN_SIZE: usize = 20;
/// Training-set sizes studied by the size sweep.
pub const SUBSAMPLE_SIZES: [usize; 4] = [1, 5, 10, 20];

/// A 70-image set divided into 50 held-out test items and 20 training items.
/// The training items are in a seeded random order, so every prefix is a
/// random subsample and smaller subsamples nest inside larger ones.
#[derive(Clone, Debug)]
pub struct EvalSplit<T> {
    pub test: Vec<T>,
    pub train: Vec<T>,
}

impl<T> EvalSplit<T> {
    /// The first `k` training items.
    pub fn subsample(&self, k: usize) -> Result<&[T]> {
        self.train
            .get(..k)
            .ok_or_else(|| Error::contract(format!("subsample of {k} from {} training items", self.train.len())))
    }
}

pub fn split_evaluation_sets<T: Clone>(items: &[T], seed: u64) -> Result<EvalSplit<T>> {
    if items.len() != IMAGES_PER_SET {
        return Err(Error::contract(format!(
            "evaluation split needs exactly {IMAGES_PER_SET} images, got {}",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok(EvalSplit { test: pick(&order[..TEST_SIZE]), train: pick(&order[TEST_SIZE..]) })
}

/// Stratified image-level split: each class sends `round(len · val_fraction)`
/// of its items to validation. Returns `(train, val)` index lists.
pub fn train_val_split<L: Ord>(labels: &[L], val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::contract(format!("validation fraction {val_fraction} outside [0, 1)")));
    }
    let mut groups: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let n_val = (members.len() as f64 * val_fraction).round() as usize;
        let n_val = n_val.min(members.len().saturating_sub(1));
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}
