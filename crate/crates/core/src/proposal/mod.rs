//! Candidate generation behind an aggregate-only tool boundary.
//!
//! Proposers see feature metadata, summary statistics and candidate
//! metrics, never row-level data. The offline [`HeuristicProposer`] makes
//! every run reproducible without network access; [`RemoteProposer`] and
//! [`RemoteReviewer`] talk to a chat-completion endpoint.

mod heuristic;
mod prompts;
mod remote;
mod tool;
mod transcript;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use heuristic::{round_clinical, HeuristicProposer};
pub use prompts::{render, PromptSet, PROMPT_FILES};
pub use remote::{
    complete_with_retry, parse_rule_lines, parse_verdict, CallBudget, CallCategory, ChatClient, ChatRequest, Exchange,
    RecordingClient, RemoteProposer, RemoteReviewer, RemoteSettings, RetryPolicy, ScriptedClient, TransportError,
    GATE_BUDGET_EXHAUSTED, GATE_PARSE_FAILURE,
};
pub use tool::{CandidateMetrics, CohortSummary, DistributionSummary, FeatureDigest, FeatureSummary, PoolEntry, ToolInterface};
pub use transcript::{Transcript, TranscriptEntry};

use crate::grammar::{Rule, RuleFamily};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProposalError {
    #[error("ratio and difference rules need at least two numeric features")]
    NoNumericFeatures,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("all {count} response lines were malformed")]
    AllLinesMalformed { count: usize, raw: String, malformed: Vec<MalformedLine> },
    #[error("{0:?} call budget exhausted")]
    BudgetExhausted(CallCategory),
    #[error("prompt asset missing: {0}")]
    MissingAsset(String),
    #[error("prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub line: usize,
    pub text: String,
    pub error: String,
}

/// Rules produced by one proposal call, with the raw response if any.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalBatch {
    pub rules: Vec<Rule>,
    pub raw: Option<String>,
    pub malformed: Vec<MalformedLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityVerdict {
    pub plausible: bool,
    pub reason: String,
}

/// Outcome tallies from the previous iteration.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Feedback {
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub malformed: usize,
}

/// Inputs a proposer may condition on, all derived from [`ToolInterface`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalContext {
    pub task_description: String,
    pub variable_list: String,
    pub analysis_context: String,
    pub tool_summaries: String,
    pub guidance: Vec<RuleFamily>,
    pub feedback: Feedback,
    pub auc_threshold: f64,
    pub iteration: usize,
}

fn short(x: f64) -> String {
    format!("{}", round_clinical(x))
}

impl ProposalContext {
    pub fn build(tool: &ToolInterface, task: &str, guidance: Vec<RuleFamily>, feedback: Feedback, iteration: usize) -> Self {
        let catalog = tool.catalog();
        let variable_list = catalog
            .iter()
            .map(|f| match &f.unit {
                Some(u) => format!("{} ({}, {u})", f.name, f.kind),
                None => format!("{} ({})", f.name, f.kind),
            })
            .collect::<Vec<_>>()
            .join("\n");
        let cohort = tool.cohort();
        let mut analysis = vec![format!("cohort: {} rows, {} positive", cohort.rows, cohort.positives)];
        for f in &catalog {
            let line = match tool.feature_summary(&f.name) {
                Some(FeatureSummary::Numeric { missing_rate, mean, std, quantiles }) => {
                    let pick = |q: f64| quantiles.iter().find(|p| (p.0 - q).abs() < 1e-9).map(|p| short(p.1)).unwrap_or_default();
                    format!(
                        "{}: missing {:.2}, mean {}, sd {}, q05 {}, q25 {}, q50 {}, q75 {}, q95 {}",
                        f.name,
                        missing_rate,
                        short(mean),
                        short(std),
                        pick(0.05),
                        pick(0.25),
                        pick(0.5),
                        pick(0.75),
                        pick(0.95)
                    )
                }
                Some(FeatureSummary::Categorical { missing_rate, frequencies }) => {
                    let levels: Vec<String> = frequencies.iter().map(|(k, v)| format!("{k} {v}")).collect();
                    format!("{}: missing {missing_rate:.2}, levels {}", f.name, levels.join(", "))
                }
                Some(FeatureSummary::Binary { missing_rate, true_rate }) => format!(
                    "{}: missing {missing_rate:.2}, true rate {}",
                    f.name,
                    true_rate.map(|r| format!("{r:.2}")).unwrap_or_else(|| "n/a".into())
                ),
                Some(FeatureSummary::Unusable) | None => format!("{}: no usable values", f.name),
            };
            analysis.push(line);
        }
        let pool = tool.pool_summary();
        let mut summaries = Vec::new();
        if !guidance.is_empty() {
            let names: Vec<&str> = guidance.iter().map(|g| g.as_str()).collect();
            summaries.push(format!("under-represented rule families: {}", names.join(", ")));
        }
        if iteration > 0 {
            let rejected: Vec<String> = feedback.rejected.iter().map(|(k, v)| format!("{k} {v}")).collect();
            summaries.push(format!(
                "previous round: {} accepted, rejected [{}], {} malformed",
                feedback.accepted,
                rejected.join(", "),
                feedback.malformed
            ));
        }
        summaries.push(format!("pool holds {} rules", pool.len()));
        let mut best: Vec<&PoolEntry> = pool.iter().collect();
        best.sort_by(|a, b| b.auroc.total_cmp(&a.auroc).then(a.ordinal.cmp(&b.ordinal)));
        for e in best.iter().take(10) {
            summaries.push(format!("retained AUROC {:.3}: {}", e.auroc, e.rule));
        }
        ProposalContext {
            task_description: task.to_owned(),
            variable_list,
            analysis_context: analysis.join("\n"),
            tool_summaries: summaries.join("\n"),
            guidance,
            feedback,
            auc_threshold: tool.auc_threshold(),
            iteration,
        }
    }
}

pub trait Proposer {
    fn source(&self) -> &'static str;
    fn propose(&mut self, tool: &ToolInterface, ctx: &ProposalContext, batch: usize) -> Result<ProposalBatch, ProposalError>;
}

/// Replays recorded batches in order; empty once exhausted.
#[derive(Debug, Clone, Default)]
pub struct ReplayProposer {
    batches: VecDeque<Vec<Rule>>,
}

impl ReplayProposer {
    pub fn new(batches: Vec<Vec<Rule>>) -> Self {
        ReplayProposer { batches: batches.into() }
    }
}

impl Proposer for ReplayProposer {
    fn source(&self) -> &'static str {
        "replay"
    }

    fn propose(&mut self, _: &ToolInterface, _: &ProposalContext, _: usize) -> Result<ProposalBatch, ProposalError> {
        Ok(ProposalBatch { rules: self.batches.pop_front().unwrap_or_default(), raw: None, malformed: Vec::new() })
    }
}

/// Eliminative review of a statistically admissible rule.
pub trait PlausibilityReviewer {
    fn review(&mut self, rule: &Rule) -> Result<PlausibilityVerdict, ProposalError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl PlausibilityReviewer for AcceptAll {
    fn review(&mut self, _: &Rule) -> Result<PlausibilityVerdict, ProposalError> {
        Ok(PlausibilityVerdict { plausible: true, reason: "accept_all".into() })
    }
}

/// Serves recorded verdicts in order; rejects once exhausted.
#[derive(Debug, Clone, Default)]
pub struct ReplayReviewer {
    verdicts: VecDeque<PlausibilityVerdict>,
}

impl ReplayReviewer {
    pub fn new(verdicts: Vec<PlausibilityVerdict>) -> Self {
        ReplayReviewer { verdicts: verdicts.into() }
    }
}

impl PlausibilityReviewer for ReplayReviewer {
    fn review(&mut self, _: &Rule) -> Result<PlausibilityVerdict, ProposalError> {
        Ok(self
            .verdicts
            .pop_front()
            .unwrap_or(PlausibilityVerdict { plausible: false, reason: "replay-exhausted".into() }))
    }
}
