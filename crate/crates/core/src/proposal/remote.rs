//! Chat-completion boundary: client trait, retries, call budgets and the
//! remote proposer and plausibility reviewer built on it.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompts::{render, PromptSet};
use super::{MalformedLine, PlausibilityReviewer, PlausibilityVerdict, ProposalBatch, ProposalContext, ProposalError, Proposer, ToolInterface};
use crate::grammar::{parse_rule, serialize_rule, Rule};

pub const GATE_PARSE_FAILURE: &str = "gate-parse-failure";
pub const GATE_BUDGET_EXHAUSTED: &str = "gate-budget-exhausted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub message: String,
    /// Timeouts, connection failures, 429 and 5xx responses are retryable.
    pub retryable: bool,
}

/// A single-turn chat-completion endpoint.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay_ms: 500, max_delay_ms: 8_000 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): base, 2 base, 4 base, ... capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Sends `request`, retrying retryable failures with exponential backoff.
pub fn complete_with_retry(client: &dyn ChatClient, request: &ChatRequest, policy: &RetryPolicy) -> Result<String, ProposalError> {
    let attempts = policy.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        match client.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) if e.retryable && attempt < attempts => {
                last = e.message;
                std::thread::sleep(policy.delay(attempt));
            }
            Err(e) => return Err(ProposalError::Transport(format!("{} (attempt {attempt} of {attempts})", e.message))),
        }
    }
    Err(ProposalError::Transport(last))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallCategory {
    Proposal,
    Plausibility,
    Assembly,
}

/// Per-fold caps on remote calls by category.
#[derive(Debug)]
pub struct CallBudget {
    limits: BTreeMap<CallCategory, usize>,
    used: [AtomicUsize; 3],
}

fn slot(c: CallCategory) -> usize {
    match c {
        CallCategory::Proposal => 0,
        CallCategory::Plausibility => 1,
        CallCategory::Assembly => 2,
    }
}

impl CallBudget {
    pub fn new(proposal: usize, plausibility: usize, assembly: usize) -> Self {
        let limits = [
            (CallCategory::Proposal, proposal),
            (CallCategory::Plausibility, plausibility),
            (CallCategory::Assembly, assembly),
        ]
        .into_iter()
        .collect();
        CallBudget { limits, used: Default::default() }
    }

    /// Budget implied by a pipeline configuration: one proposal call per
    /// iteration, the plausibility cap, and one assembly call plus one per refinement step.
    pub fn for_config(cfg: &crate::pool::PipelineConfig) -> Self {
        Self::new(cfg.iterations, cfg.plausibility_cap, 1 + cfg.refine_phases * cfg.refine_steps)
    }

    pub fn limit(&self, c: CallCategory) -> usize {
        self.limits[&c]
    }

    pub fn used(&self, c: CallCategory) -> usize {
        self.used[slot(c)].load(Ordering::SeqCst)
    }

    pub fn total_limit(&self) -> usize {
        self.limits.values().sum()
    }

    /// Reserves one call; false once the category is spent.
    pub fn try_take(&self, c: CallCategory) -> bool {
        let limit = self.limit(c);
        self.used[slot(c)].fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < limit).then_some(u + 1)).is_ok()
    }
}

/// One request/response pair seen at the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub category: CallCategory,
    pub request: ChatRequest,
    pub response: String,
}

/// Wraps a client and keeps every successful exchange.
pub struct RecordingClient {
    inner: Arc<dyn ChatClient>,
    category: CallCategory,
    log: Arc<Mutex<Vec<Exchange>>>,
}

impl RecordingClient {
    pub fn new(inner: Arc<dyn ChatClient>, category: CallCategory, log: Arc<Mutex<Vec<Exchange>>>) -> Self {
        RecordingClient { inner, category, log }
    }
}

impl ChatClient for RecordingClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let response = self.inner.complete(request)?;
        self.log.lock().expect("exchange log").push(Exchange {
            category: self.category,
            request: request.clone(),
            response: response.clone(),
        });
        Ok(response)
    }
}

/// Serves canned responses in order, e.g. to replay a transcript.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    responses: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedClient {
    pub fn new<I: IntoIterator<Item = String>>(responses: I) -> Self {
        ScriptedClient { responses: Mutex::new(responses.into_iter().collect()), requests: Mutex::default() }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().expect("request log").clone()
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.requests.lock().expect("request log").push(request.clone());
        self.responses
            .lock()
            .expect("scripted responses")
            .pop_front()
            .ok_or_else(|| TransportError { message: "no scripted response left".into(), retryable: false })
    }
}

/// Settings shared by every remote role.
#[derive(Clone)]
pub struct RemoteSettings {
    pub client: Arc<dyn ChatClient>,
    pub prompts: Arc<PromptSet>,
    pub retry: RetryPolicy,
    pub budget: Arc<CallBudget>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub system: Option<String>,
}

impl RemoteSettings {
    pub fn request(&self, user: String) -> ChatRequest {
        ChatRequest { system: self.system.clone(), user, temperature: self.temperature, max_tokens: self.max_tokens }
    }

    /// Charges the budget, then sends with retries.
    pub fn call(&self, category: CallCategory, user: String) -> Result<String, ProposalError> {
        if !self.budget.try_take(category) {
            return Err(ProposalError::BudgetExhausted(category));
        }
        complete_with_retry(self.client.as_ref(), &self.request(user), &self.retry)
    }
}

/// Splits a response into JSON lines and parses each strictly.
pub fn parse_rule_lines(
    text: &str,
    catalog: &crate::data::FeatureCatalog,
    max_depth: usize,
) -> (Vec<Rule>, Vec<MalformedLine>) {
    let mut rules = Vec::new();
    let mut malformed = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match parse_rule(line, catalog, max_depth) {
            Ok(r) => rules.push(r),
            Err(e) => malformed.push(MalformedLine { line: i + 1, text: line.to_owned(), error: e.to_string() }),
        }
    }
    (rules, malformed)
}

/// Proposer that renders the feature-proposal prompt and parses JSON lines.
pub struct RemoteProposer {
    settings: RemoteSettings,
    max_depth: usize,
}

impl RemoteProposer {
    pub fn new(settings: RemoteSettings, max_depth: usize) -> Self {
        RemoteProposer { settings, max_depth }
    }

    pub fn render(&self, ctx: &ProposalContext, batch: usize) -> Result<String, ProposalError> {
        let vars = BTreeMap::from([
            ("task_description", ctx.task_description.clone()),
            ("variable_list", ctx.variable_list.clone()),
            ("analysis_context", ctx.analysis_context.clone()),
            ("tool_summaries", ctx.tool_summaries.clone()),
            ("auc_threshold", ctx.auc_threshold.to_string()),
            ("batch_size", batch.to_string()),
        ]);
        render(&self.settings.prompts.feature_proposal, &vars)
    }
}

impl Proposer for RemoteProposer {
    fn source(&self) -> &'static str {
        "remote"
    }

    fn propose(&mut self, tool: &ToolInterface, ctx: &ProposalContext, batch: usize) -> Result<ProposalBatch, ProposalError> {
        let prompt = self.render(ctx, batch)?;
        let raw = self.settings.call(CallCategory::Proposal, prompt)?;
        let (rules, malformed) = parse_rule_lines(&raw, tool.pool().catalog(), self.max_depth);
        if rules.is_empty() && !malformed.is_empty() {
            return Err(ProposalError::AllLinesMalformed { count: malformed.len(), raw, malformed });
        }
        Ok(ProposalBatch { rules, raw: Some(raw), malformed })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictWire {
    plausible: bool,
    reason: String,
}

/// Parses the reviewer's reply; anything but the exact object is a rejection.
pub fn parse_verdict(text: &str) -> PlausibilityVerdict {
    match serde_json::from_str::<VerdictWire>(text.trim()) {
        Ok(v) => PlausibilityVerdict { plausible: v.plausible, reason: v.reason },
        Err(_) => PlausibilityVerdict { plausible: false, reason: GATE_PARSE_FAILURE.into() },
    }
}

/// Remote plausibility reviewer. Once its budget is spent it rejects conservatively.
pub struct RemoteReviewer {
    settings: RemoteSettings,
}

impl RemoteReviewer {
    pub fn new(settings: RemoteSettings) -> Self {
        RemoteReviewer { settings }
    }
}

impl PlausibilityReviewer for RemoteReviewer {
    fn review(&mut self, rule: &Rule) -> Result<PlausibilityVerdict, ProposalError> {
        let vars = BTreeMap::from([("rule_json", serialize_rule(rule))]);
        let prompt = render(&self.settings.prompts.plausibility_review, &vars)?;
        match self.settings.call(CallCategory::Plausibility, prompt) {
            Ok(text) => Ok(parse_verdict(&text)),
            Err(ProposalError::BudgetExhausted(_)) => {
                Ok(PlausibilityVerdict { plausible: false, reason: GATE_BUDGET_EXHAUSTED.into() })
            }
            Err(e) => Err(e),
        }
    }
}
