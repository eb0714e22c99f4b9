//! Replayable JSON-lines log of everything that crossed the proposal boundary.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CallCategory, MalformedLine, PlausibilityVerdict};
use crate::data::FeatureCatalog;
use crate::grammar::{parse_rule_value, rule_to_value, GrammarError, Rule};
use crate::pool::Decision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Proposal {
        fold: usize,
        iteration: usize,
        source: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        raw: Option<String>,
        rules: Vec<Value>,
        malformed: Vec<MalformedLine>,
    },
    Gate {
        fold: usize,
        iteration: usize,
        rule: Value,
        #[serde(flatten)]
        decision: Decision,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        plausibility: Option<PlausibilityVerdict>,
    },
    Chat {
        fold: usize,
        category: CallCategory,
        response: String,
    },
    Error {
        fold: usize,
        iteration: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, other: Transcript) {
        self.entries.extend(other.entries);
    }

    pub fn proposal(fold: usize, iteration: usize, source: &str, raw: Option<String>, rules: &[Rule], malformed: Vec<MalformedLine>) -> TranscriptEntry {
        TranscriptEntry::Proposal {
            fold,
            iteration,
            source: source.to_owned(),
            raw,
            rules: rules.iter().map(rule_to_value).collect(),
            malformed,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("transcript entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("transcript line {}: {e}", i + 1)))
            .collect::<Result<_, _>>()?;
        Ok(Transcript { entries })
    }

    pub fn folds(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .entries
            .iter()
            .map(|e| match e {
                TranscriptEntry::Proposal { fold, .. }
                | TranscriptEntry::Gate { fold, .. }
                | TranscriptEntry::Chat { fold, .. }
                | TranscriptEntry::Error { fold, .. } => *fold,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Proposed rule batches of one fold, in iteration order.
    pub fn proposal_batches(&self, fold: usize, catalog: &FeatureCatalog) -> Result<Vec<Vec<Rule>>, GrammarError> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TranscriptEntry::Proposal { fold: f, rules, .. } if *f == fold => Some(rules),
                _ => None,
            })
            .map(|rules| rules.iter().map(|v| parse_rule_value(v, catalog, usize::MAX)).collect())
            .collect()
    }

    /// Plausibility verdicts of one fold, in the order they were requested.
    pub fn verdicts(&self, fold: usize) -> Vec<PlausibilityVerdict> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TranscriptEntry::Gate { fold: f, plausibility: Some(v), .. } if *f == fold => Some(v.clone()),
                _ => None,
            })
            .collect()
    }

    /// Recorded chat responses of one fold and category.
    pub fn responses(&self, fold: usize, category: CallCategory) -> Vec<String> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TranscriptEntry::Chat { fold: f, category: c, response } if *f == fold && *c == category => {
                    Some(response.clone())
                }
                _ => None,
            })
            .collect()
    }
}
