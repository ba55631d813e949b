//! Stratified k-fold assignment.

use rand::seq::SliceRandom;

use super::{ConditionClass, DatasetError, LabeledDataset, Split};
use crate::seeded;

/// Fold index per burst. Within each class the bursts are shuffled and dealt
/// round-robin, so per-class fold counts differ by at most one; the dealing
/// offset carries over between classes to keep fold totals level.
pub fn kfold_split(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<usize>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::BadK(k));
    }
    let counts = dataset.class_counts();
    for c in ConditionClass::ALL {
        let n = counts[c.index()];
        if n > 0 && n < k {
            return Err(DatasetError::TooFewForFolds { class: c, count: n, k });
        }
    }
    let mut rng = seeded(seed);
    let mut folds = vec![0usize; dataset.len()];
    let mut offset = 0;
    for c in ConditionClass::ALL {
        let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.bursts[i].label == c).collect();
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            folds[i] = (offset + j) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(folds)
}

/// Tags fold `test_fold` as test, the next fold (cyclically) as validation
/// and the rest as train. With `k = 2` there is no validation fold.
pub fn assign_fold_splits(dataset: &mut LabeledDataset, folds: &[usize], k: usize, test_fold: usize) {
    let val_fold = (k >= 3).then(|| (test_fold + 1) % k);
    for (s, &f) in dataset.splits.iter_mut().zip(folds) {
        *s = if f == test_fold {
            Split::Test
        } else if Some(f) == val_fold {
            Split::Val
        } else {
            Split::Train
        };
    }
}
