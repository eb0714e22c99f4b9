//! Cohort ingestion, temporal summaries, frozen feature statistics and
//! group-aware fold assignment.

mod catalog;
mod split;
mod stats;
mod table;
mod temporal;

use thiserror::Error;

pub use catalog::{FeatureCatalog, FeatureKind, FeatureSpec};
pub use split::{stratified_group_kfold, stratified_group_kfold_with, FoldAssignment};
pub use stats::{fit_feature_stats, BinaryStats, CategoricalStats, FeatureStat, FeatureStats, NumericStats, QUANTILE_GRID};
pub use table::{load_table, write_table, Column, Dataset, SplitTag, TableOptions};
pub use temporal::{derive_temporal, load_measurements, summarize_series, Measurement, Series, TemporalSummary, WindowSpec, TEMPORAL_STATS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("cannot read {0}")]
    FileUnreadable(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("label on row {row} is `{value}`, expected 0 or 1")]
    NonBinaryLabel { row: usize, value: String },
    #[error("timestamps for `{variable}` in group `{group}` are not strictly increasing")]
    NonMonotoneTimestamps { group: String, variable: String },
    #[error("split `{0}` has no rows")]
    EmptySplit(SplitTag),
    #[error("too few groups for {folds} folds: {positive} positive and {negative} negative groups")]
    TooFewGroups { folds: usize, positive: usize, negative: usize },
    #[error("group `{0}` contains both outcome labels")]
    MixedGroupLabel(String),
    #[error("operation expects the {expected} split but received {found}")]
    WrongSplit { expected: SplitTag, found: SplitTag },
    #[error("column length mismatch: {0}")]
    LengthMismatch(String),
}
