//! Coverage masks, rule evaluation and the statistics built on them.

mod compare;
mod mask;
mod metrics;
mod rule_eval;
mod threshold;

use thiserror::Error;

use crate::data::SplitTag;

pub use compare::{
    bootstrap_mean_ci, cohens_d, holm_bonferroni, paired_comparison, paired_t, wilcoxon_signed_rank, BaselineComparison,
    ComparisonReport, BOOTSTRAP_RESAMPLES, EXACT_WILCOXON_MAX, MISSING_METRIC,
};
pub use mask::{CoverageMask, LabelMask, MaskRecord};
pub(crate) use metrics::histogram_twice_u;
pub use metrics::{auroc, auroc_discrete, auroc_tally, discrete_tally, jaccard_positive, mask_auroc, AucTally};
pub use rule_eval::{evaluate_rule, evaluate_rule_with, evaluate_rules, resolve_quantile, resolve_zscore, score_rules};
pub use threshold::{
    report_at, risk_table, risk_table_with, select_threshold, Confusion, EvalReport, RiskInversion, RiskRow, RiskTable,
    ThresholdObjective, DEFAULT_SMALL_BIN,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("both outcome classes must be present")]
    SingleClass,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("masks come from different splits: {left} vs {right}")]
    SplitMismatch { left: SplitTag, right: SplitTag },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("feature `{0}` has no usable statistics for z-score or quantile rules")]
    UnusableStats(String),
    #[error("checklist has no rules")]
    EmptyChecklist,
    #[error("scores contain NaN")]
    NonFiniteScore,
    #[error("paired comparison needs at least two folds, got {0}")]
    InsufficientFolds(usize),
    #[error("{0}")]
    InvalidInput(String),
}
