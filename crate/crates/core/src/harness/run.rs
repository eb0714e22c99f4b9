use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    assemble, card_json, finalize, refine, render_card, score_checklist, AgentLink, AssemblyOptions, CardJson, Checklist,
    ValidationView,
};
use crate::data::{fit_feature_stats, stratified_group_kfold_with, DataError, Dataset, FoldAssignment, SplitTag};
use crate::eval::{report_at, EvalReport};
use crate::grammar::rule_to_value;
use crate::par::{self, ExecMode};
use crate::pool::{
    AssemblyMode, Decision, PipelineConfig, PlausibilityMode, PoolError, ProposerKind, RefineMode, RejectReason, RulePool,
};
use crate::proposal::{
    CallBudget, CallCategory, ChatClient, Exchange, Feedback, HeuristicProposer, PlausibilityReviewer,
    PlausibilityVerdict, PromptSet, ProposalContext, ProposalError, Proposer, RecordingClient, RemoteProposer,
    RemoteReviewer, RemoteSettings, ReplayProposer, ReplayReviewer, RetryPolicy, ScriptedClient, ToolInterface,
    Transcript, TranscriptEntry,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pool(#[from] PoolError),
}

/// Connection to a chat-completion service.
#[derive(Clone)]
pub struct RemoteBackend {
    pub client: Arc<dyn ChatClient>,
    pub prompts: Arc<PromptSet>,
    pub retry: RetryPolicy,
    pub max_tokens: Option<u32>,
    pub system: Option<String>,
}

/// Where remote-mode components get their answers.
#[derive(Clone, Default)]
pub enum Backend {
    /// No endpoint; configuration must not ask for remote components.
    #[default]
    Offline,
    Remote(RemoteBackend),
    /// Serve everything from a recorded transcript.
    Replay(Transcript),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRows {
    pub construction: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallsUsed {
    pub proposal: usize,
    pub plausibility: usize,
    pub assembly: usize,
    pub limit: usize,
}

impl CallsUsed {
    pub fn total(&self) -> usize {
        self.proposal + self.plausibility + self.assembly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub rows: FoldRows,
    pub proposed: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub malformed: usize,
    pub proposal_errors: usize,
    pub pool_size: usize,
    pub calls: Option<CallsUsed>,
    pub val_auroc: Option<f64>,
    pub k: Option<u32>,
    pub checklist: Option<CardJson>,
    pub card: Option<String>,
    pub test: Option<EvalReport>,
    /// Reads of the held-out fold; one after a successful fold, zero otherwise.
    pub test_reads: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<MeanSd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanSd { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub completed_folds: usize,
    pub auroc: Option<MeanSd>,
    pub sensitivity: Option<MeanSd>,
    pub specificity: Option<MeanSd>,
    pub rules: Option<MeanSd>,
}

/// Mean and spread over the folds that produced a checklist.
pub fn aggregate(folds: &[FoldReport]) -> Aggregate {
    let done: Vec<&EvalReport> = folds.iter().filter_map(|f| f.test.as_ref()).collect();
    let pick = |f: &dyn Fn(&EvalReport) -> f64| MeanSd::of(&done.iter().map(|r| f(r)).collect::<Vec<_>>());
    Aggregate {
        completed_folds: done.len(),
        auroc: pick(&|r| r.auroc),
        sensitivity: pick(&|r| r.sensitivity),
        specificity: pick(&|r| r.specificity),
        rules: pick(&|r| r.max_score as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub aggregate: Aggregate,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-fold test AUROC, `None` where a fold failed.
    pub fn fold_aurocs(&self) -> Vec<Option<f64>> {
        self.folds.iter().map(|f| f.test.as_ref().map(|t| t.auroc)).collect()
    }
}

pub struct RunOutput {
    pub report: RunReport,
    pub transcript: Transcript,
    pub checklists: Vec<Option<Checklist>>,
    pub folds: Vec<FoldAssignment>,
}

fn reject_key(r: &RejectReason) -> &'static str {
    match r {
        RejectReason::LowAuroc { .. } => "low_auroc",
        RejectReason::Redundant { .. } => "redundant",
        RejectReason::Duplicate { .. } => "duplicate",
        RejectReason::UnusableStats { .. } => "unusable_stats",
        RejectReason::Implausible { .. } => "implausible",
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(fold as u64 + 1)
}

fn needs_remote(cfg: &PipelineConfig) -> bool {
    cfg.proposer == ProposerKind::Remote
        || cfg.plausibility == PlausibilityMode::Remote
        || cfg.assembly == AssemblyMode::Agent
        || cfg.refine == RefineMode::Agent
}

struct Components {
    proposer: Box<dyn Proposer>,
    reviewer: Option<Box<dyn PlausibilityReviewer>>,
    agent: Option<AgentLink>,
    budget: Option<Arc<CallBudget>>,
    exchanges: Option<Arc<Mutex<Vec<Exchange>>>>,
}

fn components(cfg: &PipelineConfig, task: &str, fold: usize, d_con: &Dataset, backend: &Backend) -> Result<Components, RunError> {
    let heuristic = || -> Box<dyn Proposer> {
        Box::new(HeuristicProposer::new(fold_seed(cfg.seed, fold), cfg.screen_width, cfg.logic_depth, cfg.exec))
    };
    let wants_agent = cfg.assembly == AssemblyMode::Agent || cfg.refine == RefineMode::Agent;
    match backend {
        Backend::Offline => {
            if needs_remote(cfg) {
                return Err(RunError::Config("remote components configured without an endpoint".into()));
            }
            Ok(Components { proposer: heuristic(), reviewer: None, agent: None, budget: None, exchanges: None })
        }
        Backend::Remote(remote) => {
            let budget = Arc::new(CallBudget::for_config(cfg));
            let log = Arc::new(Mutex::new(Vec::new()));
            let settings = |category| RemoteSettings {
                client: Arc::new(RecordingClient::new(remote.client.clone(), category, log.clone())),
                prompts: remote.prompts.clone(),
                retry: remote.retry,
                budget: budget.clone(),
                temperature: cfg.temperature,
                max_tokens: remote.max_tokens,
                system: remote.system.clone(),
            };
            let proposer: Box<dyn Proposer> = match cfg.proposer {
                ProposerKind::Remote => Box::new(RemoteProposer::new(settings(CallCategory::Proposal), cfg.logic_depth)),
                ProposerKind::Heuristic => heuristic(),
            };
            let reviewer: Option<Box<dyn PlausibilityReviewer>> = match cfg.plausibility {
                PlausibilityMode::Remote => Some(Box::new(RemoteReviewer::new(settings(CallCategory::Plausibility)))),
                PlausibilityMode::AcceptAll => None,
            };
            let agent = wants_agent.then(|| AgentLink {
                settings: settings(CallCategory::Assembly),
                task_description: task.to_owned(),
                max_depth: cfg.logic_depth,
            });
            Ok(Components { proposer, reviewer, agent, budget: Some(budget), exchanges: Some(log) })
        }
        Backend::Replay(t) => {
            let batches = t.proposal_batches(fold, d_con.catalog()).map_err(|e| RunError::Config(format!("transcript: {e}")))?;
            let reviewer: Option<Box<dyn PlausibilityReviewer>> = match cfg.plausibility {
                PlausibilityMode::Remote => Some(Box::new(ReplayReviewer::new(t.verdicts(fold)))),
                PlausibilityMode::AcceptAll => None,
            };
            let budget = Arc::new(CallBudget::for_config(cfg));
            let agent = wants_agent.then(|| AgentLink {
                settings: RemoteSettings {
                    client: Arc::new(ScriptedClient::new(t.responses(fold, CallCategory::Assembly))),
                    prompts: Arc::new(PromptSet::default()),
                    retry: RetryPolicy { max_attempts: 1, base_delay_ms: 0, max_delay_ms: 0 },
                    budget: budget.clone(),
                    temperature: cfg.temperature,
                    max_tokens: None,
                    system: None,
                },
                task_description: task.to_owned(),
                max_depth: cfg.logic_depth,
            });
            let log = Arc::new(Mutex::new(Vec::new()));
            Ok(Components {
                proposer: Box::new(ReplayProposer::new(batches)),
                reviewer,
                agent,
                budget: Some(budget),
                exchanges: Some(log),
            })
        }
    }
}

struct FoldOutcome {
    report: FoldReport,
    transcript: Transcript,
    checklist: Option<Checklist>,
}

/// Phase one, phase two and one held-out evaluation for a single fold.
fn run_fold(data: &Dataset, cfg: &PipelineConfig, task: &str, backend: &Backend, fa: &FoldAssignment) -> Result<FoldOutcome, RunError> {
    let fold = fa.fold;
    let d_con = data.subset(&fa.construction, SplitTag::Construction);
    let d_val = data.subset(&fa.validation, SplitTag::Validation);
    let d_test = data.subset(&fa.test, SplitTag::Test);
    let stats = Arc::new(fit_feature_stats(&d_con)?);
    let mut pool = RulePool::new(cfg.gate(), &d_con)?;
    let mut parts = components(cfg, task, fold, &d_con, backend)?;
    let mut transcript = Transcript::default();
    let mut report = FoldReport {
        fold,
        rows: FoldRows { construction: d_con.n_rows(), validation: d_val.n_rows(), test: d_test.n_rows() },
        proposed: 0,
        accepted: 0,
        rejected: BTreeMap::new(),
        malformed: 0,
        proposal_errors: 0,
        pool_size: 0,
        calls: None,
        val_auroc: None,
        k: None,
        checklist: None,
        card: None,
        test: None,
        test_reads: 0,
        error: None,
    };

    let mut feedback = Feedback::default();
    for it in 0..cfg.iterations {
        let guidance = if cfg.diversity_enabled { pool.diversity_guidance(&cfg.diversity) } else { Vec::new() };
        let proposed = {
            let tool = ToolInterface::new(&d_con, &stats, &pool);
            let ctx = ProposalContext::build(&tool, task, guidance, feedback.clone(), it);
            parts.proposer.propose(&tool, &ctx, cfg.batch_size)
        };
        let mut next = Feedback::default();
        let batch = match proposed {
            Ok(b) => b,
            Err(e) => {
                report.proposal_errors += 1;
                if let ProposalError::AllLinesMalformed { count, .. } = &e {
                    report.malformed += count;
                    next.malformed = *count;
                }
                transcript.push(TranscriptEntry::Error { fold, iteration: it, message: e.to_string() });
                feedback = next;
                if matches!(e, ProposalError::BudgetExhausted(_)) {
                    break;
                }
                continue;
            }
        };
        transcript.push(Transcript::proposal(fold, it, parts.proposer.source(), batch.raw.clone(), &batch.rules, batch.malformed.clone()));
        report.malformed += batch.malformed.len();
        next.malformed = batch.malformed.len();
        report.proposed += batch.rules.len();
        let evaluated = pool.evaluate_batch(batch.rules, &d_con, &stats, cfg.exec)?;
        for candidate in evaluated {
            let rule = rule_to_value(&candidate.rule);
            let mut verdict: Option<PlausibilityVerdict> = None;
            let reviewer = &mut parts.reviewer;
            let decision = pool.decide(candidate, |c| {
                let r = reviewer.as_mut()?;
                let v = r.review(&c.rule).unwrap_or_else(|e| PlausibilityVerdict {
                    plausible: false,
                    reason: format!("gate-transport-failure: {e}"),
                });
                let veto = (!v.plausible).then(|| v.reason.clone());
                verdict = Some(v);
                veto
            });
            match &decision {
                Decision::Accept { .. } => {
                    report.accepted += 1;
                    next.accepted += 1;
                }
                Decision::Reject(r) => {
                    *report.rejected.entry(reject_key(r).into()).or_insert(0) += 1;
                    *next.rejected.entry(reject_key(r).into()).or_insert(0) += 1;
                }
            }
            transcript.push(TranscriptEntry::Gate { fold, iteration: it, rule, decision, plausibility: verdict });
        }
        feedback = next;
    }
    report.pool_size = pool.len();

    let phase_two = || -> Result<Checklist, crate::assembly::AssemblyError> {
        let view = ValidationView::new(&pool, &d_val, &stats, cfg.exec)?;
        let opts = AssemblyOptions::from_config(cfg, Some(fold));
        let mut c = assemble(&pool, &view, stats.clone(), &opts, parts.agent.as_ref())?;
        for _ in 0..cfg.refine_phases {
            c = refine(&c, &pool, &view, &opts, cfg.refine_steps, cfg.refine, parts.agent.as_ref())?;
        }
        finalize(&c, &d_val, cfg.objective)
    };
    let checklist = match phase_two() {
        Ok(c) => Some(c),
        Err(e) => {
            report.error = Some(e.to_string());
            None
        }
    };
    if let Some(c) = &checklist {
        let k = c.k.expect("finalized");
        report.val_auroc = Some(c.val_auroc);
        report.k = Some(k);
        report.checklist = card_json(c).ok();
        report.card = render_card(c).ok();
        debug_assert_eq!(d_test.read_count(), 0);
        match score_checklist(c, &d_test, cfg.exec).and_then(|s| Ok(report_at(&s.scores, d_test.labels(), c.max_score(), k)?)) {
            Ok(r) => report.test = Some(r),
            Err(e) => report.error = Some(format!("held-out evaluation: {e}")),
        }
    }
    report.test_reads = d_test.read_count();
    if let Some(b) = &parts.budget {
        report.calls = Some(CallsUsed {
            proposal: b.used(CallCategory::Proposal),
            plausibility: b.used(CallCategory::Plausibility),
            assembly: b.used(CallCategory::Assembly),
            limit: b.total_limit(),
        });
    }
    if let Some(log) = &parts.exchanges {
        for ex in log.lock().expect("exchange log").drain(..) {
            transcript.push(TranscriptEntry::Chat { fold, category: ex.category, response: ex.response });
        }
    }
    Ok(FoldOutcome { report, transcript, checklist })
}

/// Cross-validated run of the whole pipeline over `data` (tagged `Full`).
///
/// Offline and replayed folds run in parallel when `config.exec` allows;
/// folds that talk to a remote endpoint run one after another.
pub fn run(data: &Dataset, config: &PipelineConfig, task: &str, backend: &Backend) -> Result<RunOutput, RunError> {
    config.validate().map_err(|e| RunError::Config(e.to_string()))?;
    if data.split() != SplitTag::Full {
        return Err(DataError::WrongSplit { expected: SplitTag::Full, found: data.split() }.into());
    }
    let folds = stratified_group_kfold_with(data, config.folds, config.validation_fraction, config.seed)?;
    let mode = match backend {
        Backend::Remote(_) => ExecMode::Sequential,
        _ => config.exec,
    };
    let outcomes = par::map(mode, &folds, |fa| run_fold(data, config, task, backend, fa));
    let mut reports = Vec::with_capacity(folds.len());
    let mut transcript = Transcript::default();
    let mut checklists = Vec::with_capacity(folds.len());
    for o in outcomes {
        let o = o?;
        reports.push(o.report);
        transcript.extend(o.transcript);
        checklists.push(o.checklist);
    }
    let report = RunReport {
        task: task.to_owned(),
        config: config.clone(),
        config_hash: config.hash(),
        seed: config.seed,
        aggregate: aggregate(&reports),
        folds: reports,
    };
    Ok(RunOutput { report, transcript, checklists, folds })
}

/// Re-runs a recorded transcript against the same data and configuration.
pub fn replay(data: &Dataset, config: &PipelineConfig, task: &str, transcript: &Transcript) -> Result<RunOutput, RunError> {
    run(data, config, task, &Backend::Replay(transcript.clone()))
}
