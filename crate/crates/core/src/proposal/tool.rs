//! Aggregate-only view of the construction split.
//!
//! Every value returned here is a count, rate, quantile or metric over many
//! rows. Nothing exposes row indices, group ids or individual cells.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{Dataset, FeatureKind, FeatureStat, FeatureStats, NumericStats, QUANTILE_GRID};
use crate::eval::EvalError;
use crate::grammar::{serialize_rule, DerivedExpr, Direction, Rule, RuleFamily};
use crate::pool::RulePool;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureDigest {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureSummary {
    Numeric { missing_rate: f64, mean: f64, std: f64, quantiles: Vec<(f64, f64)> },
    Categorical { missing_rate: f64, frequencies: BTreeMap<String, usize> },
    Binary { missing_rate: f64, true_rate: Option<f64> },
    Unusable,
}

/// Grid quantiles of a derived quantity over rows where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub defined: usize,
    pub quantiles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateMetrics {
    pub auroc: f64,
    pub fires: usize,
    pub fires_positive: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Largest positive-class Jaccard with a retained rule, with that rule's ordinal.
    pub max_jaccard: Option<(usize, f64)>,
    /// Gain over that rule under the pool's redundancy mode.
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolEntry {
    pub ordinal: usize,
    pub rule: String,
    pub family: RuleFamily,
    pub auroc: f64,
    pub positive_coverage: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CohortSummary {
    pub rows: usize,
    pub positives: usize,
}

/// Handle given to proposers.
pub struct ToolInterface<'a> {
    data: &'a Dataset,
    stats: &'a FeatureStats,
    pool: &'a RulePool,
}

fn grid_pairs(s: &NumericStats) -> Vec<(f64, f64)> {
    QUANTILE_GRID.iter().copied().zip(s.grid.iter().copied()).collect()
}

impl<'a> ToolInterface<'a> {
    pub fn new(data: &'a Dataset, stats: &'a FeatureStats, pool: &'a RulePool) -> Self {
        ToolInterface { data, stats, pool }
    }

    pub fn cohort(&self) -> CohortSummary {
        CohortSummary { rows: self.data.n_rows(), positives: self.data.n_positive() }
    }

    pub fn catalog(&self) -> Vec<FeatureDigest> {
        self.data
            .catalog()
            .iter()
            .map(|f| FeatureDigest { name: f.name.clone(), kind: f.kind, unit: f.unit.clone() })
            .collect()
    }

    pub fn feature_summary(&self, name: &str) -> Option<FeatureSummary> {
        Some(match self.stats.get(name)? {
            FeatureStat::Numeric(s) => FeatureSummary::Numeric {
                missing_rate: s.missing_rate,
                mean: s.mean,
                std: s.std,
                quantiles: grid_pairs(s),
            },
            FeatureStat::Categorical(c) => {
                FeatureSummary::Categorical { missing_rate: c.missing_rate, frequencies: c.frequencies.clone() }
            }
            FeatureStat::Binary(b) => FeatureSummary::Binary { missing_rate: b.missing_rate, true_rate: b.true_rate },
            FeatureStat::AllMissing => FeatureSummary::Unusable,
        })
    }

    fn summarize(&self, values: Vec<Option<f64>>) -> Option<DistributionSummary> {
        let s = NumericStats::from_values(&values)?;
        Some(DistributionSummary { defined: s.count, quantiles: grid_pairs(&s) })
    }

    /// Distribution of `left / right` or `left - right`; undefined rows are skipped.
    pub fn derived_summary(&self, expr: &DerivedExpr) -> Option<DistributionSummary> {
        let a = self.data.numeric(&expr.left)?;
        let b = self.data.numeric(&expr.right)?;
        let values = a.iter().zip(b).map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => expr.apply(*x, *y),
            _ => None,
        });
        self.summarize(values.collect())
    }

    /// Distribution of the signed percent change used by percent-change rules.
    pub fn percent_change_summary(&self, t0: &str, t1: &str, direction: Direction) -> Option<DistributionSummary> {
        let a = self.data.numeric(t0)?;
        let b = self.data.numeric(t1)?;
        let values = a.iter().zip(b).map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) if *x != 0.0 => Some(match direction {
                Direction::Increase => 100.0 * (y - x) / x,
                Direction::Decrease => 100.0 * (x - y) / x,
            }),
            _ => None,
        });
        self.summarize(values.collect())
    }

    /// Scores a candidate without admitting it.
    pub fn evaluate_candidate(&self, rule: &Rule) -> Result<CandidateMetrics, EvalError> {
        let ev = self.pool.evaluate(rule.clone(), self.data, self.stats).map_err(|e| EvalError::InvalidInput(e.to_string()))?;
        let scored = ev.scored?;
        let near = self.pool.most_similar(&scored);
        let labels = self.pool.labels();
        Ok(CandidateMetrics {
            auroc: scored.auroc,
            fires: scored.mask.count(),
            fires_positive: scored.pos_mask.count(),
            positives: labels.positives(),
            negatives: labels.negatives(),
            max_jaccard: near.map(|n| (n.ordinal, n.jaccard)),
            gain: near.map(|n| n.gain),
        })
    }

    pub fn pool_summary(&self) -> Vec<PoolEntry> {
        self.pool
            .records()
            .iter()
            .map(|r| PoolEntry {
                ordinal: r.ordinal,
                rule: serialize_rule(&r.rule),
                family: r.family,
                auroc: r.auroc_con,
                positive_coverage: r.pos_count(),
            })
            .collect()
    }

    pub fn pool(&self) -> &RulePool {
        self.pool
    }

    pub fn auc_threshold(&self) -> f64 {
        self.pool.gate().auc_threshold
    }

    pub fn is_duplicate(&self, rule: &Rule) -> bool {
        let text = serialize_rule(rule);
        self.pool.records().iter().any(|r| r.text == text)
    }
}
