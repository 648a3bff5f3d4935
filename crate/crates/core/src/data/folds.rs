use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AgeGroup, DataError, Dataset};
use crate::rng::stream;

/// Fold index per record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified split on (age group, callback). Strata are visited in the
/// order young+, young-, older+, older-; each stratum is shuffled and dealt
/// round-robin, continuing from the fold where the previous stratum stopped
/// so that total fold sizes also stay within one record of each other.
pub fn kfold_split(data: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    let n = data.len();
    if k < 2 || k > n {
        return Err(DataError::TooFewRecords { records: n, k });
    }
    let mut rng = stream(seed, "kfold", 0);
    let mut fold_of = vec![0usize; n];
    let mut next = 0usize;
    for (group, label) in [
        (AgeGroup::Young, true),
        (AgeGroup::Young, false),
        (AgeGroup::Older, true),
        (AgeGroup::Older, false),
    ] {
        let mut members: Vec<usize> = data
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.age_group == group && r.callback == label)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}
