use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::FeatureStats;
use crate::eval::{resolve_quantile, resolve_zscore, EvalError};
use crate::grammar::{rule_text, rule_to_value, Rule};

use super::{AssemblyError, Checklist, Provenance};

pub const CARD_FORMAT: &str = "checklist-card/1";

/// Replaces quantile and z-score cutpoints with the numbers they resolve to
/// under the frozen statistics.
pub fn resolve_rule(rule: &Rule, stats: &FeatureStats) -> Result<Rule, EvalError> {
    Ok(match rule {
        Rule::QuantileThreshold { feature, op, q } => {
            Rule::NumericThreshold { feature: feature.clone(), op: *op, threshold: resolve_quantile(feature, *q, stats)? }
        }
        Rule::ZScoreThreshold { feature, op, z } => {
            let (mean, std) = resolve_zscore(feature, stats)?;
            Rule::NumericThreshold { feature: feature.clone(), op: *op, threshold: mean + z * std }
        }
        Rule::Logical { op, rules } => Rule::Logical {
            op: *op,
            rules: rules.iter().map(|r| resolve_rule(r, stats)).collect::<Result<_, _>>()?,
        },
        other => other.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FrozenStat {
    Quantile { feature: String, q: f64, value: f64 },
    Zscore { feature: String, mean: f64, std: f64 },
}

fn frozen(rule: &Rule, stats: &FeatureStats, out: &mut Vec<FrozenStat>) -> Result<(), EvalError> {
    match rule {
        Rule::QuantileThreshold { feature, q, .. } => {
            out.push(FrozenStat::Quantile { feature: feature.clone(), q: *q, value: resolve_quantile(feature, *q, stats)? })
        }
        Rule::ZScoreThreshold { feature, .. } => {
            let (mean, std) = resolve_zscore(feature, stats)?;
            out.push(FrozenStat::Zscore { feature: feature.clone(), mean, std });
        }
        Rule::Logical { rules, .. } => {
            for r in rules {
                frozen(r, stats, out)?;
            }
        }
        _ => {}
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardRule {
    pub rule: Value,
    pub text: String,
    /// The rule with every distribution-relative cutpoint replaced by a number.
    pub resolved: Value,
    pub points: u32,
}

/// Machine-readable twin of the Markdown card.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardJson {
    pub format: String,
    pub name: String,
    pub description: String,
    pub rules: Vec<CardRule>,
    pub total_range: [u32; 2],
    pub threshold: u32,
    pub frozen_stats: Vec<FrozenStat>,
    pub validation_auroc: f64,
    pub provenance: Provenance,
}

pub fn card_json(c: &Checklist) -> Result<CardJson, AssemblyError> {
    let k = c.k.ok_or(AssemblyError::NotFinalized)?;
    let mut rules = Vec::with_capacity(c.rules.len());
    let mut frozen_stats = Vec::new();
    for r in &c.rules {
        rules.push(CardRule {
            rule: rule_to_value(r),
            text: rule_text(r),
            resolved: rule_to_value(&resolve_rule(r, &c.stats)?),
            points: 1,
        });
        frozen(r, &c.stats, &mut frozen_stats)?;
    }
    Ok(CardJson {
        format: CARD_FORMAT.into(),
        name: c.name.clone(),
        description: c.description.clone(),
        rules,
        total_range: [0, c.max_score()],
        threshold: k,
        frozen_stats,
        validation_auroc: c.val_auroc,
        provenance: c.provenance.clone(),
    })
}

/// Four significant digits, for display only.
fn display_number(x: f64) -> f64 {
    format!("{x:.3e}").parse().unwrap_or(x)
}

fn rounded(rule: &Rule) -> Rule {
    match rule {
        Rule::NumericThreshold { feature, op, threshold } => {
            Rule::NumericThreshold { feature: feature.clone(), op: *op, threshold: display_number(*threshold) }
        }
        Rule::Logical { op, rules } => Rule::Logical { op: *op, rules: rules.iter().map(rounded).collect() },
        other => other.clone(),
    }
}

fn has_relative(rule: &Rule) -> bool {
    match rule {
        Rule::QuantileThreshold { .. } | Rule::ZScoreThreshold { .. } => true,
        Rule::Logical { rules, .. } => rules.iter().any(has_relative),
        _ => false,
    }
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|")
}

/// Markdown card: one `+1` row per rule, the total range and the threshold line.
pub fn render_card(c: &Checklist) -> Result<String, AssemblyError> {
    let k = c.k.ok_or(AssemblyError::NotFinalized)?;
    let m = c.max_score();
    let mut out = format!("### {} (N-of-{m})\n\n", cell(&c.name));
    if !c.description.is_empty() {
        out.push_str(&c.description);
        out.push_str("\n\n");
    }
    out.push_str("| Checklist rule (satisfied?) | Points |\n| --- | :---: |\n");
    for r in &c.rules {
        let line = if has_relative(r) {
            let fixed = rounded(&resolve_rule(r, &c.stats)?);
            format!("{} [{}]", rule_text(&fixed), rule_text(r))
        } else {
            rule_text(r)
        };
        out.push_str(&format!("| {} | +1 |\n", cell(&line)));
    }
    out.push_str(&format!("| **Total score** | **0-{m}** |\n"));
    out.push_str(&format!("| **High-risk threshold** | **S(x) ≥ {k}** |\n"));
    Ok(out)
}

