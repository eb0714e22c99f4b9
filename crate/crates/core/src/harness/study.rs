use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureStats};
use crate::eval::{evaluate_rule, jaccard_positive, paired_comparison, ComparisonReport, EvalError};
use crate::grammar::{estimate_rule_space, CardinalityReport, GrammarError, Rule, SECONDS_PER_YEAR};

use super::run::{run, Backend, MeanSd, RunError, RunReport};
use crate::pool::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub max_rules: usize,
    pub completed_folds: usize,
    pub auroc: Option<MeanSd>,
    pub rules: Option<MeanSd>,
    pub fold_aurocs: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("max_rules,completed_folds,mean_auroc,sd_auroc,mean_rules\n");
        for r in &self.rows {
            let f = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.max_rules,
                r.completed_folds,
                f(r.auroc.map(|m| m.mean)),
                f(r.auroc.map(|m| m.sd)),
                f(r.rules.map(|m| m.mean))
            ));
        }
        out
    }
}

/// Runs the pipeline once per rule budget `M`.
pub fn sweep_rule_budget(
    data: &Dataset,
    config: &PipelineConfig,
    task: &str,
    backend: &Backend,
    budgets: &[usize],
) -> Result<SweepReport, RunError> {
    if budgets.iter().any(|&m| m == 0) {
        return Err(RunError::Config("rule budgets must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(budgets.len());
    for &m in budgets {
        let cfg = PipelineConfig { max_rules: m, ..config.clone() };
        let report = run(data, &cfg, task, backend)?.report;
        rows.push(SweepRow {
            max_rules: m,
            completed_folds: report.aggregate.completed_folds,
            auroc: report.aggregate.auroc,
            rules: report.aggregate.rules,
            fold_aurocs: report.fold_aurocs(),
        });
    }
    Ok(SweepReport { rows })
}

/// Paired per-fold comparison of held-out AUROC across reports; the first is the reference.
pub fn compare_reports(names: &[String], reports: &[RunReport], seed: u64) -> Result<ComparisonReport, EvalError> {
    if names.len() != reports.len() || reports.len() < 2 {
        return Err(EvalError::InvalidInput("need at least two named reports".into()));
    }
    let folds = reports.iter().map(|r| r.folds.len()).max().unwrap_or(0);
    let matrix: Vec<Vec<Option<f64>>> = reports
        .iter()
        .map(|r| {
            let mut v = r.fold_aurocs();
            v.resize(folds, None);
            v
        })
        .collect();
    paired_comparison(names, &matrix, 0, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceReport {
    pub cardinality: CardinalityReport,
    pub rows: u64,
    pub primitive_matrix_bytes: Option<u128>,
    pub universe_matrix_bytes: Option<u128>,
    pub seconds_per_rule: f64,
    pub time_wall_seconds: f64,
    pub time_wall_years: f64,
}

pub fn estimate_space(p: u64, t: u64, rows: u64, seconds_per_rule: f64) -> Result<SpaceReport, GrammarError> {
    let cardinality = estimate_rule_space(p, t)?;
    let time_wall_seconds = cardinality.time_wall_seconds(seconds_per_rule);
    Ok(SpaceReport {
        primitive_matrix_bytes: cardinality.primitive_matrix_bytes(rows),
        universe_matrix_bytes: cardinality.universe_matrix_bytes(rows),
        rows,
        seconds_per_rule,
        time_wall_seconds,
        time_wall_years: time_wall_seconds / SECONDS_PER_YEAR,
        cardinality,
    })
}

/// For each target rule, the best positive-class Jaccard against `found`,
/// with the index of the matching rule.
pub fn match_rules(
    targets: &[Rule],
    target_stats: &FeatureStats,
    found: &[Rule],
    found_stats: &FeatureStats,
    data: &Dataset,
) -> Result<Vec<Option<(usize, f64)>>, EvalError> {
    let found_masks = found.iter().map(|r| evaluate_rule(r, data, found_stats)).collect::<Result<Vec<_>, _>>()?;
    targets
        .iter()
        .map(|t| {
            let tm = evaluate_rule(t, data, target_stats)?;
            let mut best: Option<(usize, f64)> = None;
            for (i, m) in found_masks.iter().enumerate() {
                let j = jaccard_positive(&tm, m, data.labels())?;
                if best.is_none_or(|(_, b)| j > b) {
                    best = Some((i, j));
                }
            }
            Ok(best)
        })
        .collect()
}
