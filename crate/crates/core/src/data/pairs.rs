use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Two items (by index into the labelled collection) and whether they share a class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSample {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

impl PairSample {
    /// The binary target: 1 for same class, 0 otherwise.
    pub fn y(&self) -> f64 {
        if self.same {
            1.0
        } else {
            0.0
        }
    }
}

fn group<L: Ord>(labels: &[L]) -> BTreeMap<&L, Vec<usize>> {
    let mut groups: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

/// Draws `n` random pairs: `⌈n/2⌉` same-class and `⌊n/2⌋` different-class,
/// never pairing an item with itself, in shuffled order.
pub fn sample_pairs<L: Ord>(labels: &[L], n: usize, seed: u64) -> Result<Vec<PairSample>> {
    let groups = group(labels);
    let classes: Vec<&Vec<usize>> = groups.values().collect();
    if classes.len() < 2 {
        return Err(Error::contract(format!(
            "pair sampling needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let pairable: Vec<&Vec<usize>> = classes.iter().copied().filter(|c| c.len() >= 2).collect();
    let n_same = n.div_ceil(2);
    if n_same > 0 && pairable.is_empty() {
        return Err(Error::contract("no class has two items to form a same-class pair"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n_same {
        let members = pairable[rng.gen_range(0..pairable.len())];
        let picked: Vec<&usize> = members.choose_multiple(&mut rng, 2).collect();
        pairs.push(PairSample { a: *picked[0], b: *picked[1], same: true });
    }
    for _ in n_same..n {
        let ca = rng.gen_range(0..classes.len());
        let mut cb = rng.gen_range(0..classes.len() - 1);
        if cb >= ca {
            cb += 1;
        }
        let a = *classes[ca].choose(&mut rng).expect("non-empty class");
        let b = *classes[cb].choose(&mut rng).expect("non-empty class");
        pairs.push(PairSample { a, b, same: false });
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

/// Every unordered pair of distinct items, labelled by class agreement.
pub fn all_pairs<L: PartialEq>(labels: &[L]) -> Vec<PairSample> {
    let mut out = Vec::new();
    for a in 0..labels.len() {
        for b in a + 1..labels.len() {
            out.push(PairSample { a, b, same: labels[a] == labels[b] });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_from_two_by_two() {
        let labels = ["a", "a", "b", "b"];
        let pairs = sample_pairs(&labels, 4, 3).unwrap();
        assert_eq!(pairs.iter().filter(|p| p.same).count(), 2);
        assert_eq!(pairs.iter().filter(|p| !p.same).count(), 2);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(sample_pairs(&[1, 1, 1], 4, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn all_singletons_cannot_form_same_pairs() {
        assert!(sample_pairs(&[1, 2, 3], 2, 0).is_err());
    }

    #[test]
    fn all_pairs_counts() {
        let pairs = all_pairs(&[0, 0, 1, 1, 1]);
        assert_eq!(pairs.len(), 10);
        assert_eq!(pairs.iter().filter(|p| p.same).count(), 1 + 3);
    }

    proptest! {
        #[test]
        fn pairs_are_balanced_valid_and_reproducible(
            labels in proptest::collection::vec(0u8..4, 4..40),
            n in 0usize..60,
            seed in any::<u64>(),
        ) {
            let groups = group(&labels);
            prop_assume!(groups.len() >= 2 && groups.values().any(|g| g.len() >= 2));
            let pairs = sample_pairs(&labels, n, seed).unwrap();
            prop_assert_eq!(pairs.len(), n);
            let same = pairs.iter().filter(|p| p.same).count() as i64;
            prop_assert!((same - (n as i64 - same)).abs() <= 1);
            // relabel every emitted pair from scratch
            for p in &pairs {
                prop_assert!(p.a != p.b);
                prop_assert_eq!(p.same, labels[p.a] == labels[p.b]);
            }
            prop_assert_eq!(&pairs, &sample_pairs(&labels, n, seed).unwrap());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let labels: Vec<u8> = (0..30).map(|i| i % 3).collect();
        assert_ne!(sample_pairs(&labels, 20, 1).unwrap(), sample_pairs(&labels, 20, 2).unwrap());
    }
}
