//! Typed rule language for unit-weighted checklists.
//!
//! A [`Rule`] is a binary predicate over one row of the deployable feature
//! representation. Rules are exchanged as one JSON object per line; see
//! [`parse_rule`] and [`serialize_rule`] for the wire format.

mod display;
mod parse;
mod serialize;
mod space;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use display::rule_text;
pub use parse::{parse_rule, parse_rule_value};
pub use serialize::{canonical_json, rule_to_value, serialize_rule, write_canonical};
pub use space::{estimate_rule_space, CardinalityReport, SECONDS_PER_YEAR};
pub(crate) use parse::validate_rule;

/// Comparison operator shared by every thresholded rule form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl CmpOp {
    pub const ALL: [CmpOp; 4] = [CmpOp::Gt, CmpOp::Ge, CmpOp::Lt, CmpOp::Le];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        match s {
            ">" => Some(CmpOp::Gt),
            ">=" => Some(CmpOp::Ge),
            "<" => Some(CmpOp::Lt),
            "<=" => Some(CmpOp::Le),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
        }
    }
}

/// The two arithmetic forms a derived rule may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DerivedOp {
    Ratio,
    Difference,
}

impl DerivedOp {
    pub fn symbol(self) -> char {
        match self {
            DerivedOp::Ratio => '/',
            DerivedOp::Difference => '-',
        }
    }
}

/// `left / right` or `left - right` over two numeric features.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivedExpr {
    pub op: DerivedOp,
    pub left: String,
    pub right: String,
}

impl DerivedExpr {
    pub fn ratio(left: impl Into<String>, right: impl Into<String>) -> Self {
        DerivedExpr { op: DerivedOp::Ratio, left: left.into(), right: right.into() }
    }

    pub fn difference(left: impl Into<String>, right: impl Into<String>) -> Self {
        DerivedExpr { op: DerivedOp::Difference, left: left.into(), right: right.into() }
    }

    /// `None` when the ratio's divisor is zero.
    #[inline]
    pub fn apply(&self, left: f64, right: f64) -> Option<f64> {
        match self.op {
            DerivedOp::Ratio if right == 0.0 => None,
            DerivedOp::Ratio => Some(left / right),
            DerivedOp::Difference => Some(left - right),
        }
    }
}

impl fmt::Display for DerivedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.left, self.op.symbol(), self.right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicOp {
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

/// A binary predicate from the checklist rule language.
///
/// Percent-change rules compare a signed relative change expressed in
/// percent: for `Increase` the compared value is `100 * (t1 - t0) / t0`, for
/// `Decrease` it is `100 * (t0 - t1) / t0`. A `min_count` rule counts the
/// listed binary features that are true.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    NumericThreshold { feature: String, op: CmpOp, threshold: f64 },
    NumericRange { feature: String, low: f64, high: f64 },
    CategoricalIn { feature: String, categories: std::collections::BTreeSet<String> },
    BinaryTrue { feature: String },
    DerivedThreshold { expr: DerivedExpr, op: CmpOp, threshold: f64 },
    CountPresent { features: Vec<String>, min_count: u32 },
    Logical { op: LogicOp, rules: Vec<Rule> },
    PercentChange { feature_t0: String, feature_t1: String, pct: f64, op: CmpOp, direction: Direction },
    ZScoreThreshold { feature: String, op: CmpOp, z: f64 },
    QuantileThreshold { feature: String, op: CmpOp, q: f64 },
}

/// The eight rule families of the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFamily {
    Threshold,
    Range,
    Categorical,
    Binary,
    Derived,
    Count,
    Logical,
    TemporalDistributional,
}

impl RuleFamily {
    pub const ALL: [RuleFamily; 8] = [
        RuleFamily::Threshold,
        RuleFamily::Range,
        RuleFamily::Categorical,
        RuleFamily::Binary,
        RuleFamily::Derived,
        RuleFamily::Count,
        RuleFamily::Logical,
        RuleFamily::TemporalDistributional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleFamily::Threshold => "threshold",
            RuleFamily::Range => "range",
            RuleFamily::Categorical => "categorical",
            RuleFamily::Binary => "binary",
            RuleFamily::Derived => "derived",
            RuleFamily::Count => "count",
            RuleFamily::Logical => "logical",
            RuleFamily::TemporalDistributional => "temporal_distributional",
        }
    }
}

impl fmt::Display for RuleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrammarError {
    #[error("malformed rule: {0}")]
    MalformedSyntax(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("logical depth {depth} exceeds the maximum of {max}")]
    DepthExceeded { depth: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub fn rule_family(rule: &Rule) -> RuleFamily {
    match rule {
        Rule::NumericThreshold { .. } => RuleFamily::Threshold,
        Rule::NumericRange { .. } => RuleFamily::Range,
        Rule::CategoricalIn { .. } => RuleFamily::Categorical,
        Rule::BinaryTrue { .. } => RuleFamily::Binary,
        Rule::DerivedThreshold { .. } => RuleFamily::Derived,
        Rule::CountPresent { .. } => RuleFamily::Count,
        Rule::Logical { .. } => RuleFamily::Logical,
        Rule::PercentChange { .. } | Rule::ZScoreThreshold { .. } | Rule::QuantileThreshold { .. } => {
            RuleFamily::TemporalDistributional
        }
    }
}

impl Rule {
    pub fn family(&self) -> RuleFamily {
        rule_family(self)
    }

    /// Number of nested logical operations; atomic rules have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Rule::Logical { rules, .. } => 1 + rules.iter().map(Rule::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Atomic predicates at the bottom of the tree.
    pub fn leaf_count(&self) -> usize {
        match self {
            Rule::Logical { rules, .. } => rules.iter().map(Rule::leaf_count).sum(),
            _ => 1,
        }
    }

    pub fn is_atomic(&self) -> bool {
        !matches!(self, Rule::Logical { .. })
    }

    /// Every feature name the predicate reads, in first-seen order.
    pub fn features(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_features(&mut out);
        out
    }

    fn collect_features<'a>(&'a self, out: &mut Vec<&'a str>) {
        let push = |name: &'a str, out: &mut Vec<&'a str>| {
            if !out.contains(&name) {
                out.push(name);
            }
        };
        match self {
            Rule::NumericThreshold { feature, .. }
            | Rule::NumericRange { feature, .. }
            | Rule::CategoricalIn { feature, .. }
            | Rule::BinaryTrue { feature }
            | Rule::ZScoreThreshold { feature, .. }
            | Rule::QuantileThreshold { feature, .. } => push(feature, out),
            Rule::DerivedThreshold { expr, .. } => {
                push(&expr.left, out);
                push(&expr.right, out);
            }
            Rule::CountPresent { features, .. } => {
                for f in features {
                    push(f, out);
                }
            }
            Rule::PercentChange { feature_t0, feature_t1, .. } => {
                push(feature_t0, out);
                push(feature_t1, out);
            }
            Rule::Logical { rules, .. } => {
                for r in rules {
                    r.collect_features(out);
                }
            }
        }
    }

    /// Checks the catalog-independent invariants of the rule language.
    pub fn validate_structure(&self, max_depth: usize) -> Result<(), GrammarError> {
        let depth = self.depth();
        if depth > max_depth {
            return Err(GrammarError::DepthExceeded { depth, max: max_depth });
        }
        self.validate_params()
    }

    fn validate_params(&self) -> Result<(), GrammarError> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(GrammarError::InvalidParameter(format!("{name} must be finite")))
            }
        };
        match self {
            Rule::NumericThreshold { threshold, .. } | Rule::DerivedThreshold { threshold, .. } => {
                finite("threshold", *threshold)
            }
            Rule::NumericRange { low, high, .. } => {
                finite("low", *low)?;
                finite("high", *high)?;
                if low > high {
                    return Err(GrammarError::InvalidParameter(format!("range low {low} exceeds high {high}")));
                }
                Ok(())
            }
            Rule::CategoricalIn { categories, .. } => {
                if categories.is_empty() {
                    return Err(GrammarError::InvalidParameter("categorical_in needs at least one category".into()));
                }
                Ok(())
            }
            Rule::BinaryTrue { .. } => Ok(()),
            Rule::CountPresent { features, min_count } => {
                if features.is_empty() {
                    return Err(GrammarError::InvalidParameter("count_present needs at least one feature".into()));
                }
                let mut seen = std::collections::BTreeSet::new();
                for f in features {
                    if !seen.insert(f) {
                        return Err(GrammarError::InvalidParameter(format!("count_present lists `{f}` twice")));
                    }
                }
                if *min_count < 1 || *min_count as usize > features.len() {
                    return Err(GrammarError::InvalidParameter(format!(
                        "min_count {min_count} outside 1..={}",
                        features.len()
                    )));
                }
                Ok(())
            }
            Rule::Logical { rules, .. } => {
                if rules.len() < 2 {
                    return Err(GrammarError::InvalidParameter("logical rules need at least two children".into()));
                }
                rules.iter().try_for_each(Rule::validate_params)
            }
            Rule::PercentChange { feature_t0, feature_t1, pct, .. } => {
                finite("pct", *pct)?;
                if feature_t0 == feature_t1 {
                    return Err(GrammarError::InvalidParameter("percent_change needs two distinct columns".into()));
                }
                Ok(())
            }
            Rule::ZScoreThreshold { z, .. } => finite("z", *z),
            Rule::QuantileThreshold { q, .. } => {
                if q.is_finite() && *q > 0.0 && *q < 1.0 {
                    Ok(())
                } else {
                    Err(GrammarError::InvalidParameter(format!("quantile level {q} outside (0,1)")))
                }
            }
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&rule_text(self))
    }
}
