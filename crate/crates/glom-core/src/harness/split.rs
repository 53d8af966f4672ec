//! Patient-level fold assignment: the unit of splitting is the patient, so
//! no patient's chips can land on both sides of a fold boundary.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::Stream;

const SPLIT_STREAM_TAG: u64 = 0x5f01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub seed: u64,
}

impl FoldSplit {
    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.assignment.get(patient_id).copied()
    }

    pub fn fold_members(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Deterministic seeded shuffle followed by round-robin assignment, so fold
/// sizes differ by at most one.
pub fn assign_folds(patient_ids: &[String], k: usize, seed: u64) -> Result<FoldSplit> {
    let mut unique: Vec<&String> = patient_ids.iter().collect();
    unique.sort();
    unique.dedup();
    if k == 0 || k > unique.len() {
        return Err(Error::Data(format!(
            "cannot split {} patients into {k} folds",
            unique.len()
        )));
    }
    let mut rng = Stream::derive(seed, &[SPLIT_STREAM_TAG]);
    rng.shuffle(&mut unique);
    let assignment = unique
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i % k))
        .collect();
    Ok(FoldSplit {
        k,
        assignment,
        seed,
    })
}
