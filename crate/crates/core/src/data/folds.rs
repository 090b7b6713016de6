//! Stratified k-fold partitioning.
//!
//! Within each class the sample indices are shuffled by seed and dealt
//! round-robin to folds; the dealing pointer continues across classes so
//! fold totals stay balanced too. Per-fold class counts differ by at most
//! one, and folds partition the index set exactly.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub n_folds: usize,
    /// sample index -> fold index
    pub assignment: Vec<usize>,
    /// Folds holding no positive sample; AUC is undefined there.
    pub missing_positive_folds: Vec<usize>,
}

impl FoldSplit {
    pub fn val_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

pub fn stratified_folds(labels: &[u8], n_folds: usize, seed: u64) -> Result<FoldSplit> {
    if n_folds < 2 {
        return Err(Error::parameter("stratified_folds", format!("need at least 2 folds, got {n_folds}")));
    }
    if labels.len() < n_folds {
        return Err(Error::parameter(
            "stratified_folds",
            format!("{} samples cannot fill {} folds", labels.len(), n_folds),
        ));
    }
    let mut assignment = vec![usize::MAX; labels.len()];
    let mut next_fold = 0usize;
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = rng_from_seed(derive_seed(seed, &[class as u64]));
        members.shuffle(&mut rng);
        for idx in members {
            assignment[idx] = next_fold;
            next_fold = (next_fold + 1) % n_folds;
        }
    }
    let mut has_positive = vec![false; n_folds];
    for (i, &fold) in assignment.iter().enumerate() {
        if labels[i] == 1 {
            has_positive[fold] = true;
        }
    }
    let missing_positive_folds =
        (0..n_folds).filter(|&f| !has_positive[f]).collect();
    Ok(FoldSplit { n_folds, assignment, missing_positive_folds })
}

/// Stratified train/validation cut: roughly `fraction` of each class goes
/// to validation, clamped so both sides keep at least one member of any
/// class with two or more samples.
pub fn stratified_holdout(
    labels: &[u8],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::parameter(
            "stratified_holdout",
            format!("fraction must lie in (0,1), got {fraction}"),
        ));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = rng_from_seed(derive_seed(seed, &[7, class as u64]));
        members.shuffle(&mut rng);
        let n = members.len();
        let take = if n < 2 {
            0 // a singleton class stays in training
        } else {
            ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
        };
        val.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(n: usize, pos: usize) -> Vec<u8> {
        (0..n).map(|i| u8::from(i < pos)).collect()
    }

    fn class_counts(split: &FoldSplit, labels: &[u8], class: u8) -> Vec<usize> {
        let mut counts = vec![0usize; split.n_folds];
        for (i, &f) in split.assignment.iter().enumerate() {
            if labels[i] == class {
                counts[f] += 1;
            }
        }
        counts
    }

    #[test]
    fn exact_divisibility_gives_equal_folds() {
        let l = labels(100, 10);
        let split = stratified_folds(&l, 5, 42).unwrap();
        assert_eq!(class_counts(&split, &l, 1), vec![2; 5]);
        let totals: Vec<usize> =
            (0..5).map(|f| split.val_indices(f).len()).collect();
        assert_eq!(totals, vec![20; 5]);
        assert!(split.missing_positive_folds.is_empty());
    }

    #[test]
    fn two_positives_land_in_two_distinct_folds() {
        let l = labels(25, 2);
        let split = stratified_folds(&l, 5, 9).unwrap();
        let counts = class_counts(&split, &l, 1);
        assert_eq!(counts.iter().filter(|&&c| c == 1).count(), 2);
        assert_eq!(counts.iter().sum::<usize>(), 2);
        assert_eq!(split.missing_positive_folds.len(), 3);
    }

    #[test]
    fn deterministic_in_seed() {
        let l = labels(40, 13);
        assert_eq!(stratified_folds(&l, 4, 5).unwrap(), stratified_folds(&l, 4, 5).unwrap());
        assert_ne!(
            stratified_folds(&l, 4, 5).unwrap().assignment,
            stratified_folds(&l, 4, 6).unwrap().assignment
        );
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(stratified_folds(&labels(10, 5), 1, 0).is_err());
        assert!(stratified_folds(&labels(3, 1), 5, 0).is_err());
    }

    #[test]
    fn train_and_val_partition() {
        let l = labels(23, 7);
        let split = stratified_folds(&l, 4, 11).unwrap();
        for f in 0..4 {
            let mut all = split.train_indices(f);
            all.extend(split.val_indices(f));
            all.sort_unstable();
            assert_eq!(all, (0..23).collect::<Vec<_>>());
        }
    }

    #[test]
    fn holdout_keeps_both_classes_in_both_sides() {
        let l = labels(50, 9);
        let (train, val) = stratified_holdout(&l, 0.1, 3).unwrap();
        assert_eq!(train.len() + val.len(), 50);
        assert_eq!(val.iter().filter(|&&i| l[i] == 1).count(), 1);
        assert_eq!(val.iter().filter(|&&i| l[i] == 0).count(), 4);
        let mut joined: Vec<usize> = train.iter().chain(val.iter()).copied().collect();
        joined.sort_unstable();
        assert_eq!(joined, (0..50).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn per_fold_class_counts_differ_by_at_most_one(
            n in 6usize..120,
            pos_frac in 0.05f64..0.95,
            n_folds in 2usize..6,
            seed in 0u64..1000,
        ) {
            prop_assume!(n >= n_folds);
            let pos = ((n as f64 * pos_frac) as usize).min(n);
            let l = labels(n, pos);
            let split = stratified_folds(&l, n_folds, seed).unwrap();
            for class in [0u8, 1u8] {
                let counts = class_counts(&split, &l, class);
                let max = counts.iter().max().unwrap();
                let min = counts.iter().min().unwrap();
                prop_assert!(max - min <= 1, "class {class}: {counts:?}");
            }
            // exact partition
            prop_assert!(split.assignment.iter().all(|&f| f < n_folds));
        }
    }
}
