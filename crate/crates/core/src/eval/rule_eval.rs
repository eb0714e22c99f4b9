use super::{CoverageMask, EvalError};
use crate::data::{Column, Dataset, FeatureStats, NumericStats};
use crate::grammar::{CmpOp, DerivedExpr, Direction, LogicOp, Rule};
use crate::par::ExecMode;

/// A rule bound to concrete columns, ready for row-wise testing.
enum Bound<'a> {
    Threshold { col: &'a [Option<f64>], op: CmpOp, c: f64 },
    Range { col: &'a [Option<f64>], low: f64, high: f64 },
    Categorical { codes: &'a [Option<u32>], allowed: Vec<bool> },
    Binary(&'a [Option<bool>]),
    Derived { left: &'a [Option<f64>], right: &'a [Option<f64>], expr: &'a DerivedExpr, op: CmpOp, c: f64 },
    Count { cols: Vec<&'a [Option<bool>]>, min: u32 },
    Logical { op: LogicOp, children: Vec<Bound<'a>> },
    Pct { t0: &'a [Option<f64>], t1: &'a [Option<f64>], pct: f64, op: CmpOp, direction: Direction },
    ZScore { col: &'a [Option<f64>], mean: f64, std: f64, op: CmpOp, z: f64 },
}

impl Bound<'_> {
    fn test(&self, i: usize) -> bool {
        match self {
            Bound::Threshold { col, op, c } => col[i].is_some_and(|x| op.apply(x, *c)),
            Bound::Range { col, low, high } => col[i].is_some_and(|x| *low <= x && x <= *high),
            Bound::Categorical { codes, allowed } => codes[i].is_some_and(|c| allowed[c as usize]),
            Bound::Binary(col) => col[i] == Some(true),
            Bound::Derived { left, right, expr, op, c } => match (left[i], right[i]) {
                (Some(a), Some(b)) => expr.apply(a, b).is_some_and(|v| op.apply(v, *c)),
                _ => false,
            },
            Bound::Count { cols, min } => {
                let mut n = 0u32;
                for col in cols {
                    match col[i] {
                        Some(true) => n += 1,
                        Some(false) => {}
                        None => return false,
                    }
                }
                n >= *min
            }
            Bound::Logical { op, children } => match op {
                LogicOp::And => children.iter().all(|c| c.test(i)),
                LogicOp::Or => children.iter().any(|c| c.test(i)),
            },
            Bound::Pct { t0, t1, pct, op, direction } => match (t0[i], t1[i]) {
                (Some(a), Some(b)) if a != 0.0 => {
                    let change = match direction {
                        Direction::Increase => 100.0 * (b - a) / a,
                        Direction::Decrease => 100.0 * (a - b) / a,
                    };
                    op.apply(change, *pct)
                }
                _ => false,
            },
            Bound::ZScore { col, mean, std, op, z } => col[i].is_some_and(|x| op.apply((x - mean) / std, *z)),
        }
    }
}

fn numeric<'a>(d: &'a Dataset, name: &str) -> Result<&'a [Option<f64>], EvalError> {
    match d.column(name) {
        None => Err(EvalError::UnknownFeature(name.to_owned())),
        Some(Column::Numeric(v)) => Ok(v),
        Some(c) => Err(EvalError::TypeMismatch(format!("`{name}` is {}, expected numeric", c.kind()))),
    }
}

fn binary<'a>(d: &'a Dataset, name: &str) -> Result<&'a [Option<bool>], EvalError> {
    match d.column(name) {
        None => Err(EvalError::UnknownFeature(name.to_owned())),
        Some(Column::Binary(v)) => Ok(v),
        Some(c) => Err(EvalError::TypeMismatch(format!("`{name}` is {}, expected binary", c.kind()))),
    }
}

fn usable_stats<'a>(stats: &'a FeatureStats, name: &str) -> Result<&'a NumericStats, EvalError> {
    stats.numeric(name).ok_or_else(|| EvalError::UnusableStats(name.to_owned()))
}

/// Threshold value of a quantile rule under frozen statistics.
pub fn resolve_quantile(feature: &str, q: f64, stats: &FeatureStats) -> Result<f64, EvalError> {
    Ok(usable_stats(stats, feature)?.quantile(q))
}

/// Mean and standard deviation used by a z-score rule; zero spread is unusable.
pub fn resolve_zscore(feature: &str, stats: &FeatureStats) -> Result<(f64, f64), EvalError> {
    let s = usable_stats(stats, feature)?;
    if s.std > 0.0 && s.std.is_finite() {
        Ok((s.mean, s.std))
    } else {
        Err(EvalError::UnusableStats(feature.to_owned()))
    }
}

fn bind<'a>(rule: &'a Rule, d: &'a Dataset, stats: &FeatureStats) -> Result<Bound<'a>, EvalError> {
    Ok(match rule {
        Rule::NumericThreshold { feature, op, threshold } => {
            Bound::Threshold { col: numeric(d, feature)?, op: *op, c: *threshold }
        }
        Rule::NumericRange { feature, low, high } => Bound::Range { col: numeric(d, feature)?, low: *low, high: *high },
        Rule::CategoricalIn { feature, categories } => match d.column(feature) {
            None => return Err(EvalError::UnknownFeature(feature.clone())),
            Some(Column::Categorical { codes, levels }) => {
                Bound::Categorical { codes, allowed: levels.iter().map(|l| categories.contains(l)).collect() }
            }
            Some(c) => return Err(EvalError::TypeMismatch(format!("`{feature}` is {}, expected categorical", c.kind()))),
        },
        Rule::BinaryTrue { feature } => Bound::Binary(binary(d, feature)?),
        Rule::DerivedThreshold { expr, op, threshold } => Bound::Derived {
            left: numeric(d, &expr.left)?,
            right: numeric(d, &expr.right)?,
            expr,
            op: *op,
            c: *threshold,
        },
        Rule::CountPresent { features, min_count } => Bound::Count {
            cols: features.iter().map(|f| binary(d, f)).collect::<Result<_, _>>()?,
            min: *min_count,
        },
        Rule::Logical { op, rules } => Bound::Logical {
            op: *op,
            children: rules.iter().map(|r| bind(r, d, stats)).collect::<Result<_, _>>()?,
        },
        Rule::PercentChange { feature_t0, feature_t1, pct, op, direction } => Bound::Pct {
            t0: numeric(d, feature_t0)?,
            t1: numeric(d, feature_t1)?,
            pct: *pct,
            op: *op,
            direction: *direction,
        },
        Rule::ZScoreThreshold { feature, op, z } => {
            let col = numeric(d, feature)?;
            let (mean, std) = resolve_zscore(feature, stats)?;
            Bound::ZScore { col, mean, std, op: *op, z: *z }
        }
        Rule::QuantileThreshold { feature, op, q } => {
            let col = numeric(d, feature)?;
            Bound::Threshold { col, op: *op, c: resolve_quantile(feature, *q, stats)? }
        }
    })
}

/// Coverage mask of `rule` on `data`; any missing required input makes the row false.
///
/// Counts as one read of `data`.
pub fn evaluate_rule(rule: &Rule, data: &Dataset, stats: &FeatureStats) -> Result<CoverageMask, EvalError> {
    evaluate_rule_with(rule, data, stats, ExecMode::default())
}

pub fn evaluate_rule_with(
    rule: &Rule,
    data: &Dataset,
    stats: &FeatureStats,
    mode: ExecMode,
) -> Result<CoverageMask, EvalError> {
    let bound = bind(rule, data, stats)?;
    data.mark_read();
    Ok(CoverageMask::from_fn(data.n_rows(), data.split(), mode, |i| bound.test(i)))
}

/// Evaluates many rules, one task per rule, results in input order.
pub fn evaluate_rules(
    rules: &[Rule],
    data: &Dataset,
    stats: &FeatureStats,
    mode: ExecMode,
) -> Vec<Result<CoverageMask, EvalError>> {
    crate::par::map(mode, rules, |r| evaluate_rule_with(r, data, stats, ExecMode::Sequential))
}

/// Unit-weighted scores: the number of rules each row satisfies.
pub fn score_rules(rules: &[Rule], data: &Dataset, stats: &FeatureStats, mode: ExecMode) -> Result<Vec<u32>, EvalError> {
    if rules.is_empty() {
        return Err(EvalError::EmptyChecklist);
    }
    let bound: Vec<Bound> = rules.iter().map(|r| bind(r, data, stats)).collect::<Result<_, _>>()?;
    data.mark_read();
    let mut scores = vec![0u32; data.n_rows()];
    crate::par::fill(mode, &mut scores, |i| bound.iter().filter(|b| b.test(i)).count() as u32);
    Ok(scores)
}
