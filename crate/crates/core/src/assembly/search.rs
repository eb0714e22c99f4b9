use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::data::FeatureStats;
use crate::grammar::{parse_rule_value, rule_to_value, serialize_rule};
use crate::par;
use crate::pool::{AssemblyMode, RefineMode, RulePool};
use crate::proposal::{render, CallCategory};

use super::{pool_hash, AgentLink, AssemblyError, AssemblyOptions, Checklist, Provenance, TraceStep, ValidationView};

/// Number of non-empty subsets of size at most `m` drawn from `n` rules, saturating.
pub fn subset_count(n: usize, m: usize) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for k in 1..=m.min(n) {
        c = match c.checked_mul((n - k + 1) as u128) {
            Some(x) => x / k as u128,
            None => return u128::MAX,
        };
        total = total.saturating_add(c);
    }
    total
}

/// Argmax over every evaluated candidate; the earliest wins ties.
struct History {
    steps: Vec<TraceStep>,
    best: Option<(f64, Vec<usize>)>,
}

impl History {
    fn new() -> Self {
        History { steps: Vec::new(), best: None }
    }

    fn record(&mut self, source: &str, ordinals: Vec<usize>, auroc: f64, note: Option<String>) {
        if self.best.as_ref().is_none_or(|(b, _)| auroc > *b) {
            self.best = Some((auroc, ordinals.clone()));
        }
        self.steps.push(TraceStep { source: source.into(), ordinals, val_auroc: Some(auroc), note });
    }

    fn note(&mut self, source: &str, note: String) {
        self.steps.push(TraceStep { source: source.into(), ordinals: Vec::new(), val_auroc: None, note: Some(note) });
    }
}

/// Forward selection, first over atomic rules alone and then over the whole
/// pool; the caller keeps the best subset seen across both passes.
fn greedy(view: &ValidationView, pool: &RulePool, opts: &AssemblyOptions, h: &mut History) {
    let all: Vec<usize> = (0..view.len()).collect();
    let atomic: Vec<usize> = all.iter().copied().filter(|&o| pool.records()[o].rule.is_atomic()).collect();
    if !atomic.is_empty() && atomic.len() < all.len() {
        forward(view, &atomic, opts, h, "greedy-atomic");
    }
    forward(view, &all, opts, h, "greedy");
}

fn forward(view: &ValidationView, allowed: &[usize], opts: &AssemblyOptions, h: &mut History, source: &str) {
    let mut current: Vec<usize> = Vec::new();
    while current.len() < opts.max_rules.min(allowed.len()) {
        let candidates: Vec<usize> = allowed.iter().copied().filter(|o| !current.contains(o)).collect();
        let scores = par::map(opts.exec, &candidates, |&o| {
            let mut s = current.clone();
            s.push(o);
            view.auroc(&s)
        });
        let mut best = 0;
        for i in 1..candidates.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        current.push(candidates[best]);
        h.record(source, current.clone(), scores[best], None);
    }
}

fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for k in 1..=m.min(n) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.clone());
            let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else { break };
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

fn exhaustive(view: &ValidationView, pool: &RulePool, opts: &AssemblyOptions, h: &mut History) {
    let total = subset_count(view.len(), opts.max_rules);
    if total > opts.exhaustive_cap as u128 {
        h.note("exhaustive", format!("{total} subsets exceed the cap of {}; using greedy", opts.exhaustive_cap));
        return greedy(view, pool, opts, h);
    }
    let combos = combinations(view.len(), opts.max_rules);
    let scores = par::map(opts.exec, &combos, |s| view.auroc(s));
    let mut best = 0;
    for i in 1..combos.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    h.record("exhaustive", combos[best].clone(), scores[best], Some(format!("best of {} subsets", combos.len())));
}

/// A checklist specification as exchanged with the assembly agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ChecklistSpec {
    pub name: Option<String>,
    pub description: Option<String>,
    pub ordinals: Vec<usize>,
}

#[derive(Deserialize)]
struct SpecWire {
    name: Option<String>,
    description: Option<String>,
    rules: Vec<SpecRule>,
}

#[derive(Deserialize)]
struct SpecRule {
    rule: Value,
}

fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses an agent reply into pool ordinals; any rule outside the pool rejects the spec.
pub fn parse_spec(text: &str, pool: &RulePool, max_rules: usize, max_depth: usize) -> Result<ChecklistSpec, AssemblyError> {
    let invalid = |m: String| AssemblyError::AgentSpecInvalid(m);
    let wire: SpecWire = serde_json::from_str(strip_fence(text)).map_err(|e| invalid(format!("not a specification: {e}")))?;
    if wire.rules.is_empty() {
        return Err(invalid("no rules".into()));
    }
    if wire.rules.len() > max_rules {
        return Err(invalid(format!("{} rules exceed the limit of {max_rules}", wire.rules.len())));
    }
    let by_text: HashMap<&str, usize> = pool.records().iter().map(|r| (r.text.as_str(), r.ordinal)).collect();
    let mut ordinals = Vec::with_capacity(wire.rules.len());
    for (i, r) in wire.rules.iter().enumerate() {
        let rule = parse_rule_value(&r.rule, pool.catalog(), max_depth).map_err(|e| invalid(format!("rule {i}: {e}")))?;
        let Some(&o) = by_text.get(serialize_rule(&rule).as_str()) else {
            return Err(invalid(format!("rule {i} is not in the pool")));
        };
        if ordinals.contains(&o) {
            return Err(invalid(format!("rule {i} repeats pool rule {o}")));
        }
        ordinals.push(o);
    }
    Ok(ChecklistSpec { name: wire.name, description: wire.description, ordinals })
}

/// JSON specification of a checklist in the agent exchange layout.
pub fn spec_json(name: &str, description: &str, pool: &RulePool, ordinals: &[usize]) -> String {
    let rules: Vec<Value> = ordinals.iter().map(|&o| json!({ "rule": rule_to_value(&pool.records()[o].rule) })).collect();
    serde_json::to_string_pretty(&json!({ "name": name, "description": description, "rules": rules }))
        .expect("spec serializes")
}

fn pool_listing(pool: &RulePool) -> String {
    pool.records().iter().map(|r| format!("{}  AUROC={:.3}", r.text, r.auroc_con)).collect::<Vec<_>>().join("\n")
}

fn agent_construct(
    pool: &RulePool,
    view: &ValidationView,
    opts: &AssemblyOptions,
    agent: &AgentLink,
    h: &mut History,
) -> Result<(Option<String>, Option<String>), AssemblyError> {
    let vars = BTreeMap::from([
        ("task_description", agent.task_description.clone()),
        ("max_rules", opts.max_rules.to_string()),
        ("retained_rules_with_auc", pool_listing(pool)),
    ]);
    let prompt = render(&agent.settings.prompts.score_construction, &vars)
        .map_err(|e| AssemblyError::AgentSpecInvalid(e.to_string()))?;
    let raw = agent
        .settings
        .call(CallCategory::Assembly, prompt)
        .map_err(|e| AssemblyError::AgentSpecInvalid(e.to_string()))?;
    let spec = parse_spec(&raw, pool, opts.max_rules, agent.max_depth)?;
    h.record("agent", spec.ordinals.clone(), view.auroc(&spec.ordinals), None);
    Ok((spec.name, spec.description))
}

fn build(
    pool: &RulePool,
    stats: Arc<FeatureStats>,
    opts: &AssemblyOptions,
    name: String,
    description: String,
    h: History,
) -> Checklist {
    let (val_auroc, ordinals) = h.best.expect("at least one candidate evaluated");
    Checklist {
        name,
        description,
        rules: ordinals.iter().map(|&o| pool.records()[o].rule.clone()).collect(),
        ordinals,
        k: None,
        stats,
        provenance: Provenance { pool_hash: pool_hash(pool), fold: opts.fold, trace: h.steps },
        val_auroc,
        validation: None,
    }
}

fn check_view(pool: &RulePool, view: &ValidationView) -> Result<(), AssemblyError> {
    if pool.is_empty() {
        return Err(AssemblyError::EmptyPool);
    }
    if view.len() != pool.len() {
        return Err(AssemblyError::StaleView { view: view.len(), pool: pool.len() });
    }
    Ok(())
}

/// Selects at most `opts.max_rules` pool rules, returning the best checklist
/// by validation AUROC among all candidates the chosen mode evaluated.
///
/// An unusable agent reply falls back to greedy selection; the reason is kept
/// in the trace.
pub fn assemble(
    pool: &RulePool,
    view: &ValidationView,
    stats: Arc<FeatureStats>,
    opts: &AssemblyOptions,
    agent: Option<&AgentLink>,
) -> Result<Checklist, AssemblyError> {
    check_view(pool, view)?;
    let mut h = History::new();
    let (mut name, mut description) = (opts.name.clone(), opts.description.clone());
    match (opts.mode, agent) {
        (AssemblyMode::Greedy, _) => greedy(view, pool, opts, &mut h),
        (AssemblyMode::Exhaustive, _) => exhaustive(view, pool, opts, &mut h),
        (AssemblyMode::AsProposed, _) => {
            let first: Vec<usize> = (0..view.len().min(opts.max_rules)).collect();
            h.record("as-proposed", first.clone(), view.auroc(&first), None);
        }
        (AssemblyMode::Agent, None) => {
            h.note("agent", "no agent configured; using greedy".into());
            greedy(view, pool, opts, &mut h)
        }
        (AssemblyMode::Agent, Some(link)) => match agent_construct(pool, view, opts, link, &mut h) {
            Ok((n, d)) => {
                name = n.unwrap_or(name);
                description = d.unwrap_or(description);
            }
            Err(e) => {
                h.note("agent", format!("{e}; using greedy"));
                greedy(view, pool, opts, &mut h)
            }
        },
    }
    Ok(build(pool, stats, opts, name, description, h))
}

fn offline_moves(current: &[usize], n: usize, max_rules: usize) -> Vec<Vec<usize>> {
    let outside: Vec<usize> = (0..n).filter(|o| !current.contains(o)).collect();
    let mut moves = Vec::new();
    if current.len() < max_rules {
        for &o in &outside {
            let mut s = current.to_vec();
            s.push(o);
            moves.push(s);
        }
    }
    if current.len() > 1 {
        for i in 0..current.len() {
            let mut s = current.to_vec();
            s.remove(i);
            moves.push(s);
        }
    }
    for i in 0..current.len() {
        for &o in &outside {
            let mut s = current.to_vec();
            s[i] = o;
            moves.push(s);
        }
    }
    moves
}

fn metrics_line(view: &ValidationView, ordinals: &[usize], max_rules: usize) -> String {
    let (pos, neg) = view.histogram(ordinals);
    let (p, n): (u64, u64) = (pos.iter().sum(), neg.iter().sum());
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best = (f64::NEG_INFINITY, 0usize, 0.0, 0.0);
    for k in (0..pos.len()).rev() {
        tp += pos[k];
        fp += neg[k];
        let (sens, spec) = (tp as f64 / p as f64, 1.0 - fp as f64 / n as f64);
        if sens + spec - 1.0 >= best.0 {
            best = (sens + spec - 1.0, k, sens, spec);
        }
    }
    format!(
        "validation AUROC {:.4}; at K={} sensitivity {:.3}, specificity {:.3}; {} of at most {max_rules} rules",
        view.auroc(ordinals),
        best.1,
        best.2,
        best.3,
        ordinals.len()
    )
}

/// Up to `steps` inclusion/exclusion moves inside the pool. The result is the
/// best of the input and every valid proposal, so it never loses validation AUROC.
pub fn refine(
    c: &Checklist,
    pool: &RulePool,
    view: &ValidationView,
    opts: &AssemblyOptions,
    steps: usize,
    mode: RefineMode,
    agent: Option<&AgentLink>,
) -> Result<Checklist, AssemblyError> {
    check_view(pool, view)?;
    if steps == 0 || mode == RefineMode::Off {
        return Ok(c.clone());
    }
    let mut h = History { steps: Vec::new(), best: Some((c.val_auroc, c.ordinals.clone())) };
    let (mut name, mut description) = (c.name.clone(), c.description.clone());
    match (mode, agent) {
        (RefineMode::Agent, Some(link)) => {
            for step in 0..steps {
                let current = h.best.as_ref().map(|b| b.1.clone()).expect("seeded");
                let vars = BTreeMap::from([
                    ("current_score_json", spec_json(&name, &description, pool, &current)),
                    ("score_metrics", metrics_line(view, &current, opts.max_rules)),
                    ("max_rules", opts.max_rules.to_string()),
                    ("retained_rules_with_auc", pool_listing(pool)),
                ]);
                let prompt = render(&link.settings.prompts.score_refinement, &vars)
                    .map_err(|e| AssemblyError::AgentSpecInvalid(e.to_string()))?;
                let raw = match link.settings.call(CallCategory::Assembly, prompt) {
                    Ok(raw) => raw,
                    Err(e) => {
                        h.note("refine-agent", format!("step {step}: {e}; stopping"));
                        break;
                    }
                };
                match parse_spec(&raw, pool, opts.max_rules, link.max_depth) {
                    Ok(spec) => {
                        let before = h.best.as_ref().map(|b| b.0);
                        h.record("refine-agent", spec.ordinals.clone(), view.auroc(&spec.ordinals), None);
                        if h.best.as_ref().map(|b| b.0) != before {
                            name = spec.name.unwrap_or(name);
                            description = spec.description.unwrap_or(description);
                        }
                    }
                    Err(e) => h.note("refine-agent", format!("step {step}: {e}")),
                }
            }
        }
        (RefineMode::Agent, None) | (RefineMode::Offline, _) => {
            let mut current = c.ordinals.clone();
            let mut current_auc = c.val_auroc;
            for _ in 0..steps {
                let moves = offline_moves(&current, view.len(), opts.max_rules);
                let scores = par::map(opts.exec, &moves, |s| view.auroc(s));
                let mut best: Option<usize> = None;
                for i in 0..moves.len() {
                    if scores[i] > best.map_or(current_auc, |b| scores[b]) {
                        best = Some(i);
                    }
                }
                let Some(b) = best else { break };
                current = moves[b].clone();
                current_auc = scores[b];
                h.record("refine-offline", current.clone(), current_auc, None);
            }
        }
        (RefineMode::Off, _) => unreachable!(),
    }
    let mut trace = c.provenance.trace.clone();
    trace.extend(std::mem::take(&mut h.steps));
    let (val_auroc, ordinals) = h.best.expect("seeded");
    Ok(Checklist {
        name,
        description,
        rules: ordinals.iter().map(|&o| pool.records()[o].rule.clone()).collect(),
        ordinals,
        k: None,
        stats: c.stats.clone(),
        provenance: Provenance { trace, ..c.provenance.clone() },
        val_auroc,
        validation: None,
    })
}
