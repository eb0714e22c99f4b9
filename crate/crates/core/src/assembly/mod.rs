//! Phase two: choosing at most `M` retained rules, bounded refinement and
//! fixing the decision threshold on validation data.

mod card;
mod search;
mod view;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{Dataset, FeatureStats, SplitTag};
use crate::eval::{score_rules, select_threshold, EvalError, EvalReport, ThresholdObjective};
use crate::grammar::Rule;
use crate::par::ExecMode;
use crate::pool::{AssemblyMode, PipelineConfig, RulePool};
use crate::proposal::RemoteSettings;

pub use card::{card_json, render_card, resolve_rule, CardJson, CardRule, FrozenStat, CARD_FORMAT};
pub use search::{assemble, parse_spec, refine, spec_json, subset_count, ChecklistSpec};
pub use view::ValidationView;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("the rule pool is empty")]
    EmptyPool,
    #[error("agent specification rejected: {0}")]
    AgentSpecInvalid(String),
    #[error("assembly only reads validation data, got the {0} split")]
    WrongSplit(SplitTag),
    #[error("validation view covers {view} rules but the pool holds {pool}")]
    StaleView { view: usize, pool: usize },
    #[error("checklist has no threshold yet")]
    NotFinalized,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One candidate checklist considered during assembly or refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub source: String,
    pub ordinals: Vec<usize>,
    pub val_auroc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pool_hash: String,
    pub fold: Option<usize>,
    pub trace: Vec<TraceStep>,
}

/// A unit-weighted N-of-M checklist. There is no weight field: every rule is one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Checklist {
    pub name: String,
    pub description: String,
    pub rules: Vec<Rule>,
    /// Pool ordinals of `rules`, same order.
    pub ordinals: Vec<usize>,
    /// Decision threshold; set by [`finalize`].
    pub k: Option<u32>,
    pub stats: Arc<FeatureStats>,
    pub provenance: Provenance,
    pub val_auroc: f64,
    pub validation: Option<EvalReport>,
}

impl Checklist {
    pub fn max_score(&self) -> u32 {
        self.rules.len() as u32
    }
}

/// Remote assembly agent: client settings plus the task text shown in prompts.
#[derive(Clone)]
pub struct AgentLink {
    pub settings: RemoteSettings,
    pub task_description: String,
    pub max_depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyOptions {
    pub max_rules: usize,
    pub mode: AssemblyMode,
    pub exhaustive_cap: u64,
    pub exec: ExecMode,
    pub fold: Option<usize>,
    pub name: String,
    pub description: String,
}

impl AssemblyOptions {
    pub fn from_config(cfg: &PipelineConfig, fold: Option<usize>) -> Self {
        AssemblyOptions {
            max_rules: cfg.max_rules,
            mode: cfg.assembly,
            exhaustive_cap: cfg.exhaustive_cap,
            exec: cfg.exec,
            fold,
            name: "Checklist".into(),
            description: String::new(),
        }
    }
}

/// SHA-256 over the canonical text of every retained rule, in ordinal order.
pub fn pool_hash(pool: &RulePool) -> String {
    let mut h = Sha256::new();
    for r in pool.records() {
        h.update(r.text.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChecklistScores {
    pub scores: Vec<u32>,
    /// `score / number of rules`.
    pub probability: Vec<f64>,
}

/// Checklist scores on any split.
pub fn score_checklist(c: &Checklist, data: &Dataset, mode: ExecMode) -> Result<ChecklistScores, AssemblyError> {
    let scores = score_rules(&c.rules, data, &c.stats, mode)?;
    let m = c.max_score() as f64;
    let probability = scores.iter().map(|&s| s as f64 / m).collect();
    Ok(ChecklistScores { scores, probability })
}

/// Fixes `K` on validation data with `objective`.
pub fn finalize(c: &Checklist, d_val: &Dataset, objective: ThresholdObjective) -> Result<Checklist, AssemblyError> {
    match d_val.split() {
        SplitTag::Validation | SplitTag::Full => {}
        other => return Err(AssemblyError::WrongSplit(other)),
    }
    let scored = score_checklist(c, d_val, ExecMode::Parallel)?;
    let (k, report) = select_threshold(&scored.scores, d_val.labels(), c.max_score(), objective)?;
    let mut out = c.clone();
    out.k = Some(k);
    out.validation = Some(report);
    Ok(out)
}
