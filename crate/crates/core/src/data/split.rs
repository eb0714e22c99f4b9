use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DataError, Dataset};

/// Row indices of one outer fold and its inner construction/validation split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    pub fold: usize,
    pub construction: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldAssignment {
    /// Construction and validation rows together, ascending.
    pub fn train(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.construction.iter().chain(&self.validation).copied().collect();
        rows.sort_unstable();
        rows
    }
}

pub fn stratified_group_kfold(data: &Dataset, folds: usize, seed: u64) -> Result<Vec<FoldAssignment>, DataError> {
    stratified_group_kfold_with(data, folds, 0.2, seed)
}

/// Group-level stratified k-fold with an inner stratified group split of the
/// training side (`validation_fraction` of each class's training groups).
///
/// Groups are keyed by id and sorted before a seeded shuffle, so the result
/// does not depend on row order in the source table.
pub fn stratified_group_kfold_with(
    data: &Dataset,
    folds: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<Vec<FoldAssignment>, DataError> {
    let mut groups: BTreeMap<&str, (bool, Vec<usize>)> = BTreeMap::new();
    for (row, (g, &y)) in data.groups().iter().zip(data.labels()).enumerate() {
        let entry = groups.entry(g.as_str()).or_insert((y, Vec::new()));
        if entry.0 != y {
            return Err(DataError::MixedGroupLabel(g.clone()));
        }
        entry.1.push(row);
    }
    let mut positive: Vec<&str> = groups.iter().filter(|(_, v)| v.0).map(|(k, _)| *k).collect();
    let mut negative: Vec<&str> = groups.iter().filter(|(_, v)| !v.0).map(|(k, _)| *k).collect();
    if folds < 2 || positive.len() < folds || negative.len() < folds {
        return Err(DataError::TooFewGroups { folds, positive: positive.len(), negative: negative.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positive.shuffle(&mut rng);
    negative.shuffle(&mut rng);

    // Round-robin per class; negatives continue where positives stopped so fold sizes stay level.
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, g) in positive.iter().enumerate() {
        fold_of.insert(g, i % folds);
    }
    for (j, g) in negative.iter().enumerate() {
        fold_of.insert(g, (j + positive.len()) % folds);
    }

    let rows_of = |ids: &[&str]| -> Vec<usize> {
        let mut rows: Vec<usize> = ids.iter().flat_map(|g| groups[g].1.iter().copied()).collect();
        rows.sort_unstable();
        rows
    };

    let mut out = Vec::with_capacity(folds);
    for fold in 0..folds {
        let test: Vec<&str> = positive.iter().chain(&negative).filter(|g| fold_of[*g] == fold).copied().collect();
        let mut inner_rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(fold as u64 + 1)));
        let mut construction = Vec::new();
        let mut validation = Vec::new();
        for class in [&positive, &negative] {
            let mut train: Vec<&str> = class.iter().filter(|g| fold_of[*g] != fold).copied().collect();
            train.sort_unstable();
            train.shuffle(&mut inner_rng);
            let n = train.len();
            let mut n_val = (validation_fraction * n as f64).round() as usize;
            if n >= 2 {
                n_val = n_val.clamp(1, n - 1);
            } else {
                n_val = 0;
            }
            validation.extend_from_slice(&train[..n_val]);
            construction.extend_from_slice(&train[n_val..]);
        }
        out.push(FoldAssignment {
            fold,
            construction: rows_of(&construction),
            validation: rows_of(&validation),
            test: rows_of(&test),
        });
    }
    Ok(out)
}
