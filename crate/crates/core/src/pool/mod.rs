//! The retained rule pool and its retention gate.
//!
//! A candidate is admitted when its construction-split AUROC reaches the
//! threshold, it is not a structural duplicate, and its positive-class
//! overlap with every retained rule is at most `δ`, unless it beats the most
//! similar retained rule by the configured gain. The pool is append-only and
//! every decision is logged, so replaying the log rebuilds it exactly.

mod config;
mod snapshot;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    AssemblyMode, DiversityTargets, GateConfig, PipelineConfig, PlausibilityMode, ProposerKind, RedundancyMode, RefineMode,
};
pub use snapshot::{SnapshotHeader, SNAPSHOT_FORMAT};

use crate::data::{Dataset, FeatureCatalog, FeatureStats, SplitTag};
use crate::eval::{evaluate_rule_with, mask_auroc, CoverageMask, EvalError, LabelMask};
use crate::grammar::{serialize_rule, Rule, RuleFamily};
use crate::par::{self, ExecMode};

/// Slack on gain comparisons so a gain computed as exactly `min_pos_gain` is not lost to rounding.
pub const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pool is bound to the {expected} split but received {found}")]
    WrongSplit { expected: SplitTag, found: SplitTag },
    #[error("pool covers {expected} rows but the dataset has {found}")]
    RowMismatch { expected: usize, found: usize },
    #[error("i/o failure: {0}")]
    IoFailure(String),
    #[error("malformed pool file: {0}")]
    Format(String),
    #[error("replay diverged at event {seq}: recorded {recorded}, replayed {replayed}")]
    ReplayDiverged { seq: usize, recorded: String, replayed: String },
}

/// Retained record closest to a candidate by positive-class Jaccard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub ordinal: usize,
    pub jaccard: f64,
    /// AUROC or coverage gain over that record, per the redundancy mode.
    pub gain: f64,
}

/// Why a record was let in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Admission {
    /// Overlap at most `δ` with every retained rule.
    Novel { nearest: Option<Similarity> },
    /// Overlap above `δ`, admitted on gain over the most similar rule.
    GainException { nearest: Similarity },
    /// Overlap check disabled.
    Unchecked { nearest: Option<Similarity> },
}

impl Admission {
    pub fn nearest(&self) -> Option<Similarity> {
        match *self {
            Admission::Novel { nearest } | Admission::Unchecked { nearest } => nearest,
            Admission::GainException { nearest } => Some(nearest),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    LowAuroc { auroc: f64 },
    Redundant { nearest: Similarity },
    Duplicate { ordinal: usize },
    UnusableStats { detail: String },
    /// Vetoed by the plausibility gate after passing the statistical checks.
    Implausible { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Accept { ordinal: usize },
    Reject(RejectReason),
}

impl Decision {
    pub fn is_accept(&self) -> bool {
        matches!(self, Decision::Accept { .. })
    }

    fn label(&self) -> String {
        serde_json::to_string(self).expect("decision serializes")
    }
}

/// A retained rule with its cached construction-split coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleRecord {
    pub ordinal: usize,
    pub rule: Rule,
    /// Canonical JSON of `rule`.
    pub text: String,
    pub family: RuleFamily,
    pub auroc_con: f64,
    pub mask: CoverageMask,
    pub pos_mask: CoverageMask,
    pub admission: Admission,
}

impl RuleRecord {
    pub fn pos_count(&self) -> usize {
        self.pos_mask.count()
    }
}

/// A candidate scored on the construction split but not yet admitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub rule: Rule,
    pub text: String,
    pub family: RuleFamily,
    pub scored: Result<Scored, EvalError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub mask: CoverageMask,
    pub pos_mask: CoverageMask,
    pub auroc: f64,
}

/// Outcome of the statistical checks, before any plausibility veto.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Admit(Admission),
    Reject(RejectReason),
}

/// One logged gate decision.
#[derive(Debug, Clone, PartialEq)]
pub struct GateEvent {
    pub seq: usize,
    pub rule: Rule,
    pub decision: Decision,
}

#[derive(Debug, Clone)]
pub struct RulePool {
    gate: GateConfig,
    split: SplitTag,
    labels: LabelMask,
    catalog: Arc<FeatureCatalog>,
    records: Vec<RuleRecord>,
    by_text: HashMap<String, usize>,
    family_counts: BTreeMap<RuleFamily, usize>,
    events: Vec<GateEvent>,
}

impl PartialEq for RulePool {
    fn eq(&self, other: &Self) -> bool {
        self.gate == other.gate
            && self.split == other.split
            && self.labels == other.labels
            && self.records == other.records
            && self.events == other.events
    }
}

impl RulePool {
    /// An empty pool bound to the labels and split of `construction`.
    pub fn new(gate: GateConfig, construction: &Dataset) -> Result<Self, PoolError> {
        match construction.split() {
            SplitTag::Construction | SplitTag::Full => {}
            found => return Err(PoolError::WrongSplit { expected: SplitTag::Construction, found }),
        }
        Ok(Self::from_parts(gate, construction.split(), LabelMask::new(construction.labels(), construction.split()), construction.catalog_arc()))
    }

    fn from_parts(gate: GateConfig, split: SplitTag, labels: LabelMask, catalog: Arc<FeatureCatalog>) -> Self {
        RulePool {
            gate,
            split,
            labels,
            catalog,
            records: Vec::new(),
            by_text: HashMap::new(),
            family_counts: RuleFamily::ALL.iter().map(|&f| (f, 0)).collect(),
            events: Vec::new(),
        }
    }

    pub fn gate(&self) -> &GateConfig {
        &self.gate
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn catalog(&self) -> &FeatureCatalog {
        &self.catalog
    }

    pub fn labels(&self) -> &LabelMask {
        &self.labels
    }

    pub fn records(&self) -> &[RuleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, ordinal: usize) -> Option<&RuleRecord> {
        self.records.get(ordinal)
    }

    pub fn events(&self) -> &[GateEvent] {
        &self.events
    }

    pub fn family_counts(&self) -> &BTreeMap<RuleFamily, usize> {
        &self.family_counts
    }

    pub fn rules(&self) -> Vec<Rule> {
        self.records.iter().map(|r| r.rule.clone()).collect()
    }

    fn check_data(&self, data: &Dataset) -> Result<(), PoolError> {
        if data.split() != self.split {
            return Err(PoolError::WrongSplit { expected: self.split, found: data.split() });
        }
        if data.n_rows() != self.labels.0.len() {
            return Err(PoolError::RowMismatch { expected: self.labels.0.len(), found: data.n_rows() });
        }
        Ok(())
    }

    fn score(&self, rule: Rule, data: &Dataset, stats: &FeatureStats, mode: ExecMode) -> Evaluated {
        let text = serialize_rule(&rule);
        let family = rule.family();
        let scored = evaluate_rule_with(&rule, data, stats, mode).and_then(|mask| {
            let pos_mask = mask.restrict(&self.labels)?;
            let fired_pos = pos_mask.count() as u64;
            let fired_neg = (mask.count() - pos_mask.count()) as u64;
            let auroc = mask_auroc(fired_pos, fired_neg, self.labels.positives() as u64, self.labels.negatives() as u64);
            Ok(Scored { mask, pos_mask, auroc })
        });
        Evaluated { rule, text, family, scored }
    }

    /// Scores a candidate on the construction split without touching the pool.
    pub fn evaluate(&self, rule: Rule, data: &Dataset, stats: &FeatureStats) -> Result<Evaluated, PoolError> {
        self.check_data(data)?;
        Ok(self.score(rule, data, stats, ExecMode::Parallel))
    }

    /// Scores candidates concurrently, results in input order.
    pub fn evaluate_batch(
        &self,
        rules: Vec<Rule>,
        data: &Dataset,
        stats: &FeatureStats,
        mode: ExecMode,
    ) -> Result<Vec<Evaluated>, PoolError> {
        self.check_data(data)?;
        Ok(par::map(mode, &rules, |r| self.score(r.clone(), data, stats, ExecMode::Sequential)))
    }

    /// The retained record maximizing positive-class Jaccard with `pos_mask`
    /// (earliest ordinal on ties), with the candidate's gain over it.
    pub fn most_similar(&self, scored: &Scored) -> Option<Similarity> {
        most_similar_among(&self.records, scored, &self.gate, &self.labels)
    }

    /// Applies the statistical checks in order: duplicate, evaluability, AUROC, overlap.
    pub fn check(&self, candidate: &Evaluated) -> Verdict {
        if let Some(&ordinal) = self.by_text.get(&candidate.text) {
            return Verdict::Reject(RejectReason::Duplicate { ordinal });
        }
        let scored = match &candidate.scored {
            Ok(s) => s,
            Err(e) => return Verdict::Reject(RejectReason::UnusableStats { detail: e.to_string() }),
        };
        gate_verdict(&self.records, scored, &self.gate, &self.labels)
    }

    fn commit(&mut self, candidate: Evaluated, admission: Admission) -> usize {
        let scored = candidate.scored.expect("admitted candidates are scored");
        let ordinal = self.records.len();
        self.by_text.insert(candidate.text.clone(), ordinal);
        *self.family_counts.entry(candidate.family).or_insert(0) += 1;
        self.records.push(RuleRecord {
            ordinal,
            rule: candidate.rule,
            text: candidate.text,
            family: candidate.family,
            auroc_con: scored.auroc,
            mask: scored.mask,
            pos_mask: scored.pos_mask,
            admission,
        });
        ordinal
    }

    fn log(&mut self, rule: Rule, decision: Decision) {
        let seq = self.events.len();
        self.events.push(GateEvent { seq, rule, decision });
    }

    /// Runs an evaluated candidate through the gate, then through `veto` if it passed.
    ///
    /// `veto` returns a reason to reject a statistically admissible rule; it
    /// cannot admit or reorder anything.
    pub fn decide<F>(&mut self, candidate: Evaluated, veto: F) -> Decision
    where
        F: FnOnce(&Evaluated) -> Option<String>,
    {
        let decision = match self.check(&candidate) {
            Verdict::Reject(reason) => Decision::Reject(reason),
            Verdict::Admit(admission) => match veto(&candidate) {
                Some(detail) => Decision::Reject(RejectReason::Implausible { detail }),
                None => {
                    let rule = candidate.rule.clone();
                    let ordinal = self.commit(candidate, admission);
                    self.log(rule, Decision::Accept { ordinal });
                    return Decision::Accept { ordinal };
                }
            },
        };
        self.log(candidate.rule, decision.clone());
        decision
    }

    /// Evaluates and gates one candidate.
    pub fn consider(&mut self, rule: Rule, data: &Dataset, stats: &FeatureStats) -> Result<Decision, PoolError> {
        let candidate = self.evaluate(rule, data, stats)?;
        Ok(self.decide(candidate, |_| None))
    }

    /// Evaluates a batch concurrently, then gates it in order through a single writer.
    pub fn consider_batch(
        &mut self,
        rules: Vec<Rule>,
        data: &Dataset,
        stats: &FeatureStats,
        mode: ExecMode,
    ) -> Result<Vec<Decision>, PoolError> {
        let evaluated = self.evaluate_batch(rules, data, stats, mode)?;
        Ok(evaluated.into_iter().map(|c| self.decide(c, |_| None)).collect())
    }

    /// Families whose retained count is below target.
    pub fn diversity_guidance(&self, targets: &DiversityTargets) -> Vec<RuleFamily> {
        RuleFamily::ALL
            .iter()
            .copied()
            .filter(|f| {
                let want = targets.minima.get(f).copied().unwrap_or(0);
                self.family_counts.get(f).copied().unwrap_or(0) < want
            })
            .collect()
    }

    /// Re-checks every stored invariant; returns human-readable violations.
    pub fn audit(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut tally: BTreeMap<RuleFamily, usize> = RuleFamily::ALL.iter().map(|&f| (f, 0)).collect();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (j, rec) in self.records.iter().enumerate() {
            *tally.entry(rec.family).or_insert(0) += 1;
            if rec.ordinal != j {
                out.push(format!("record {j} carries ordinal {}", rec.ordinal));
            }
            if let Some(i) = seen.insert(rec.text.as_str(), j) {
                out.push(format!("records {i} and {j} are the same rule"));
            }
            if !(rec.auroc_con >= self.gate.auc_threshold) {
                out.push(format!("record {j} has AUROC {} below {}", rec.auroc_con, self.gate.auc_threshold));
            }
            let scored = Scored { mask: rec.mask.clone(), pos_mask: rec.pos_mask.clone(), auroc: rec.auroc_con };
            match gate_verdict(&self.records[..j], &scored, &self.gate, &self.labels) {
                Verdict::Admit(a) if a == rec.admission => {}
                other => out.push(format!("record {j} would now be {other:?}, stored {:?}", rec.admission)),
            }
            if self.gate.jaccard_enabled {
                let exception = matches!(rec.admission, Admission::GainException { .. });
                for earlier in &self.records[..j] {
                    let jac = earlier.pos_mask.jaccard(&rec.pos_mask).unwrap_or(f64::NAN);
                    if !(jac <= self.gate.jaccard_threshold) && !exception {
                        out.push(format!("records {} and {j} overlap at {jac} without a gain exception", earlier.ordinal));
                    }
                }
            }
        }
        if tally != self.family_counts {
            out.push(format!("family counts {:?} differ from tally {tally:?}", self.family_counts));
        }
        out
    }

    /// Rebuilds a pool by feeding logged candidates back through the gate.
    ///
    /// Vetoed events are vetoed again; any other disagreement is an error.
    pub fn replay(
        gate: GateConfig,
        events: &[GateEvent],
        data: &Dataset,
        stats: &FeatureStats,
    ) -> Result<RulePool, PoolError> {
        let mut pool = RulePool::new(gate, data)?;
        for ev in events {
            let candidate = pool.evaluate(ev.rule.clone(), data, stats)?;
            let recorded_veto = match &ev.decision {
                Decision::Reject(RejectReason::Implausible { detail }) => Some(detail.clone()),
                _ => None,
            };
            let replayed = pool.decide(candidate, |_| recorded_veto);
            if replayed != ev.decision {
                return Err(PoolError::ReplayDiverged { seq: ev.seq, recorded: ev.decision.label(), replayed: replayed.label() });
            }
        }
        Ok(pool)
    }
}

fn most_similar_among(records: &[RuleRecord], scored: &Scored, gate: &GateConfig, labels: &LabelMask) -> Option<Similarity> {
    let mut best: Option<(usize, usize, f64)> = None;
    for rec in records {
        let inter = rec.pos_mask.intersection_count(&scored.pos_mask).expect("pool masks share a split");
        let union = rec.pos_count() + scored.pos_mask.count() - inter;
        let jaccard = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        if best.is_none_or(|(_, _, j)| jaccard > j) {
            best = Some((rec.ordinal, inter, jaccard));
        }
    }
    best.map(|(ordinal, inter, jaccard)| {
        let gain = match gate.redundancy {
            RedundancyMode::AucGain => scored.auroc - records[ordinal].auroc_con,
            RedundancyMode::CoverageGain => (scored.pos_mask.count() - inter) as f64 / labels.positives() as f64,
        };
        Similarity { ordinal, jaccard, gain }
    })
}

fn gate_verdict(records: &[RuleRecord], scored: &Scored, gate: &GateConfig, labels: &LabelMask) -> Verdict {
    if !(scored.auroc >= gate.auc_threshold) {
        return Verdict::Reject(RejectReason::LowAuroc { auroc: scored.auroc });
    }
    let nearest = most_similar_among(records, scored, gate, labels);
    if !gate.jaccard_enabled {
        return Verdict::Admit(Admission::Unchecked { nearest });
    }
    match nearest {
        Some(n) if n.jaccard > gate.jaccard_threshold => {
            if n.gain >= gate.min_pos_gain - GAIN_EPSILON {
                Verdict::Admit(Admission::GainException { nearest: n })
            } else {
                Verdict::Reject(RejectReason::Redundant { nearest: n })
            }
        }
        _ => Verdict::Admit(Admission::Novel { nearest }),
    }
}
