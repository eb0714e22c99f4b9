//! Seeded grammar sampler that stands in for a language-model proposer.
//!
//! Each call samples a screen of candidates across the rule families,
//! scores them through the tool interface and returns the best few.
//! Families named in the diversity guidance are sampled more often and win
//! ties against the rest.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tool::{FeatureSummary, ToolInterface};
use super::{ProposalBatch, ProposalContext, ProposalError, Proposer};
use crate::data::FeatureKind;
use crate::grammar::{serialize_rule, validate_rule, CmpOp, DerivedExpr, DerivedOp, Direction, LogicOp, Rule, RuleFamily};
use crate::par::{self, ExecMode};

/// Rounds to two significant figures, the precision of typical bedside cut-points.
pub fn round_clinical(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.1e}").parse().unwrap_or(x)
}

const Z_LEVELS: [f64; 6] = [-2.0, -1.5, -1.0, 1.0, 1.5, 2.0];
const Q_LEVELS: [f64; 6] = [0.1, 0.2, 0.25, 0.75, 0.8, 0.9];
const LOGIC_TOP: usize = 8;
const GUIDED_WEIGHT: u32 = 4;
/// AUROC charged per leaf beyond the first when ranking screened candidates.
const LEAF_PENALTY: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct HeuristicProposer {
    rng: ChaCha8Rng,
    screen_width: usize,
    logic_depth: usize,
    mode: ExecMode,
}

struct Features {
    numeric: Vec<(String, Vec<f64>)>,
    categorical: Vec<(String, Vec<String>)>,
    binary: Vec<String>,
    /// `(x__first, x__last)` pairs.
    temporal: Vec<(String, String)>,
}

impl Features {
    fn collect(tool: &ToolInterface) -> Self {
        let mut f = Features { numeric: Vec::new(), categorical: Vec::new(), binary: Vec::new(), temporal: Vec::new() };
        let catalog = tool.catalog();
        for d in &catalog {
            match (d.kind, tool.feature_summary(&d.name)) {
                (FeatureKind::Numeric, Some(FeatureSummary::Numeric { quantiles, .. })) => {
                    f.numeric.push((d.name.clone(), quantiles.iter().map(|q| q.1).collect()))
                }
                (FeatureKind::Categorical, Some(FeatureSummary::Categorical { frequencies, .. })) => {
                    let mut levels: Vec<(String, usize)> = frequencies.into_iter().collect();
                    levels.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                    f.categorical.push((d.name.clone(), levels.into_iter().map(|l| l.0).collect()))
                }
                (FeatureKind::Binary, Some(FeatureSummary::Binary { .. })) => f.binary.push(d.name.clone()),
                _ => {}
            }
        }
        let names: BTreeSet<&str> = f.numeric.iter().map(|n| n.0.as_str()).collect();
        for n in &names {
            if let Some(base) = n.strip_suffix("__first") {
                let last = format!("{base}__last");
                if names.contains(last.as_str()) {
                    f.temporal.push((n.to_string(), last));
                }
            }
        }
        f
    }
}

fn derived_with(rng: &mut ChaCha8Rng, tool: &ToolInterface, numeric: &[String]) -> Result<Rule, ProposalError> {
    if numeric.len() < 2 {
        return Err(ProposalError::NoNumericFeatures);
    }
    let pair: Vec<&String> = numeric.choose_multiple(rng, 2).collect();
    let op = if rng.random_bool(0.7) { DerivedOp::Ratio } else { DerivedOp::Difference };
    let expr = DerivedExpr { op, left: pair[0].clone(), right: pair[1].clone() };
    let summary = tool.derived_summary(&expr).ok_or(ProposalError::NoNumericFeatures)?;
    best_cut(tool, summary.quantiles.iter().map(|q| q.1), &[CmpOp::Ge, CmpOp::Lt], |threshold, op| Rule::DerivedThreshold { expr: expr.clone(), op, threshold })
        .ok_or(ProposalError::NoNumericFeatures)
}

/// Scans cut points and comparisons, keeping the best on construction.
fn best_cut(
    tool: &ToolInterface,
    grid: impl IntoIterator<Item = f64>,
    ops: &[CmpOp],
    make: impl Fn(f64, CmpOp) -> Rule,
) -> Option<Rule> {
    let mut best: Option<(f64, Rule)> = None;
    for value in grid {
        for &op in ops {
            let rule = make(round_clinical(value), op);
            let Ok(m) = tool.evaluate_candidate(&rule) else { continue };
            if best.as_ref().is_none_or(|b| m.auroc > b.0) {
                best = Some((m.auroc, rule));
            }
        }
    }
    best.map(|b| b.1)
}

impl HeuristicProposer {
    pub fn new(seed: u64, screen_width: usize, logic_depth: usize, mode: ExecMode) -> Self {
        HeuristicProposer { rng: ChaCha8Rng::seed_from_u64(seed), screen_width: screen_width.max(1), logic_depth, mode }
    }

    /// A ratio or difference rule over two distinct numeric features.
    pub fn sample_derived(&mut self, tool: &ToolInterface) -> Result<Rule, ProposalError> {
        let numeric: Vec<String> = Features::collect(tool).numeric.into_iter().map(|n| n.0).collect();
        self.derived_from(tool, &numeric)
    }

    fn derived_from(&mut self, tool: &ToolInterface, numeric: &[String]) -> Result<Rule, ProposalError> {
        derived_with(&mut self.rng, tool, numeric)
    }

    fn available(&self, f: &Features, tool: &ToolInterface) -> Vec<RuleFamily> {
        let atomic_in_pool = tool.pool().records().iter().filter(|r| r.rule.is_atomic()).count();
        RuleFamily::ALL
            .iter()
            .copied()
            .filter(|fam| match fam {
                RuleFamily::Threshold | RuleFamily::Range | RuleFamily::TemporalDistributional => !f.numeric.is_empty(),
                RuleFamily::Categorical => f.categorical.iter().any(|c| !c.1.is_empty()),
                RuleFamily::Binary => !f.binary.is_empty(),
                RuleFamily::Derived => f.numeric.len() >= 2,
                RuleFamily::Count => f.binary.len() >= 2,
                RuleFamily::Logical => self.logic_depth >= 1 && atomic_in_pool >= 2,
            })
            .collect()
    }

    fn sample(&mut self, family: RuleFamily, f: &Features, tool: &ToolInterface) -> Option<Rule> {
        let rng = &mut self.rng;
        Some(match family {
            RuleFamily::Threshold => {
                let (name, grid) = f.numeric.choose(rng)?;
                let make = |threshold, op| Rule::NumericThreshold { feature: name.clone(), op, threshold };
                return best_cut(tool, grid.iter().copied(), &[CmpOp::Ge, CmpOp::Lt], make);
            }
            RuleFamily::Range => {
                let (name, grid) = f.numeric.choose(rng)?;
                let i = rng.random_range(0..grid.len() - 2);
                let j = rng.random_range(i + 2..grid.len().min(i + 11));
                let (low, high) = (round_clinical(grid[i]), round_clinical(grid[j]));
                if !(low < high) {
                    return None;
                }
                Rule::NumericRange { feature: name.clone(), low, high }
            }
            RuleFamily::Categorical => {
                let (name, levels) = f.categorical.choose(rng)?;
                let max = (levels.len().saturating_sub(1)).clamp(1, 3);
                let k = rng.random_range(1..=max);
                let categories = levels.choose_multiple(rng, k).cloned().collect();
                Rule::CategoricalIn { feature: name.clone(), categories }
            }
            RuleFamily::Binary => Rule::BinaryTrue { feature: f.binary.choose(rng)?.clone() },
            RuleFamily::Count => {
                let size = rng.random_range(2..=f.binary.len().min(4));
                let mut features: Vec<String> = f.binary.choose_multiple(rng, size).cloned().collect();
                features.sort();
                let min_count = rng.random_range(1..=size as u32);
                Rule::CountPresent { features, min_count }
            }
            RuleFamily::Derived => {
                let numeric: Vec<String> = f.numeric.iter().map(|n| n.0.clone()).collect();
                return derived_with(rng, tool, &numeric).ok();
            }
            RuleFamily::Logical => {
                let mut top: Vec<&crate::pool::RuleRecord> =
                    tool.pool().records().iter().filter(|r| r.rule.is_atomic()).collect();
                top.sort_by(|a, b| b.auroc_con.total_cmp(&a.auroc_con).then(a.ordinal.cmp(&b.ordinal)));
                top.truncate(LOGIC_TOP);
                let pair: Vec<&&crate::pool::RuleRecord> = top.choose_multiple(rng, 2).collect();
                if pair.len() < 2 {
                    return None;
                }
                let op = if rng.random_bool(0.5) { LogicOp::And } else { LogicOp::Or };
                Rule::Logical { op, rules: vec![pair[0].rule.clone(), pair[1].rule.clone()] }
            }
            RuleFamily::TemporalDistributional => match rng.random_range(0..3) {
                0 if !f.temporal.is_empty() => {
                    let (t0, t1) = f.temporal.choose(rng)?.clone();
                    let direction = if rng.random_bool(0.5) { Direction::Increase } else { Direction::Decrease };
                    let summary = tool.percent_change_summary(&t0, &t1, direction)?;
                    // upper half of the change distribution
                    let upper: Vec<f64> = summary.quantiles.iter().filter(|q| q.0 >= 0.5).map(|q| q.1).collect();
                    let make = |pct, op| Rule::PercentChange {
                        feature_t0: t0.clone(),
                        feature_t1: t1.clone(),
                        pct,
                        op,
                        direction,
                    };
                    return best_cut(tool, upper, &[CmpOp::Ge], make);
                }
                1 => {
                    let (name, _) = f.numeric.choose(rng)?;
                    let z = *Z_LEVELS.choose(rng)?;
                    let op = if z > 0.0 { CmpOp::Ge } else { CmpOp::Le };
                    Rule::ZScoreThreshold { feature: name.clone(), op, z }
                }
                _ => {
                    let (name, _) = f.numeric.choose(rng)?;
                    let q = *Q_LEVELS.choose(rng)?;
                    let op = if q > 0.5 { CmpOp::Ge } else { CmpOp::Le };
                    Rule::QuantileThreshold { feature: name.clone(), op, q }
                }
            },
        })
    }

    /// Draws up to `screen_width` distinct, valid candidates not already in the pool.
    fn screen(&mut self, tool: &ToolInterface, guidance: &[RuleFamily]) -> Vec<Rule> {
        let f = Features::collect(tool);
        let families = self.available(&f, tool);
        if families.is_empty() {
            return Vec::new();
        }
        let weights: Vec<u32> =
            families.iter().map(|fam| if guidance.contains(fam) { GUIDED_WEIGHT } else { 1 }).collect();
        let total: u32 = weights.iter().sum();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for _ in 0..self.screen_width * 4 {
            if out.len() == self.screen_width {
                break;
            }
            let mut pick = self.rng.random_range(0..total);
            let mut family = families[0];
            for (fam, w) in families.iter().zip(&weights) {
                if pick < *w {
                    family = *fam;
                    break;
                }
                pick -= w;
            }
            let Some(rule) = self.sample(family, &f, tool) else { continue };
            if validate_rule(&rule, tool.pool().catalog(), self.logic_depth).is_err() || tool.is_duplicate(&rule) {
                continue;
            }
            if seen.insert(serialize_rule(&rule)) {
                out.push(rule);
            }
        }
        out
    }
}

impl Proposer for HeuristicProposer {
    fn source(&self) -> &'static str {
        "heuristic"
    }

    fn propose(&mut self, tool: &ToolInterface, ctx: &ProposalContext, batch: usize) -> Result<ProposalBatch, ProposalError> {
        let mut candidates = self.screen(tool, &ctx.guidance);
        // shuffle before the stable sort so equal keys do not always favour early families
        candidates.shuffle(&mut self.rng);
        let metrics = par::map(self.mode, &candidates, |r| tool.evaluate_candidate(r).ok());
        let gate = tool.pool().gate().clone();
        let mut ranked: Vec<(bool, bool, f64, usize)> = metrics
            .iter()
            .enumerate()
            .filter_map(|(i, m)| {
                let m = m.as_ref()?;
                let redundant = gate.jaccard_enabled
                    && m.max_jaccard.is_some_and(|(_, j)| j > gate.jaccard_threshold)
                    && m.gain.is_some_and(|g| g < gate.min_pos_gain);
                let admissible = m.auroc >= gate.auc_threshold && !redundant;
                let guided = ctx.guidance.contains(&candidates[i].family());
                if let Rule::Logical { rules, .. } = &candidates[i] {
                    // a compound has to earn its extra leaves over its best part
                    let best_part = rules
                        .iter()
                        .filter_map(|r| tool.evaluate_candidate(r).ok())
                        .map(|p| p.auroc)
                        .fold(0.5, f64::max);
                    if m.auroc < best_part + LEAF_PENALTY {
                        return None;
                    }
                }
                let leaves = candidates[i].leaf_count() as f64;
                Some((admissible, guided, m.auroc - LEAF_PENALTY * (leaves - 1.0), i))
            })
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.total_cmp(&a.2)).then(a.3.cmp(&b.3)));
        let rules = ranked.iter().take(batch).map(|r| candidates[r.3].clone()).collect();
        Ok(ProposalBatch { rules, raw: None, malformed: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clinical_rounding() {
        assert_eq!(round_clinical(29.4), 29.0);
        assert_eq!(round_clinical(1.4567), 1.5);
        assert_eq!(round_clinical(0.012345), 0.012);
        assert_eq!(round_clinical(-153.0), -150.0);
        assert_eq!(round_clinical(0.0), 0.0);
        assert_eq!(round_clinical(96.0), 96.0);
    }
}
