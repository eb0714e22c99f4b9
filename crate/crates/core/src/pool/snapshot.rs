//! JSON-lines pool files: one header line, then records, then gate events.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::config_hash;
use super::{Admission, Decision, GateConfig, GateEvent, PoolError, RuleRecord, RulePool};
use crate::data::{FeatureCatalog, SplitTag};
use crate::eval::{CoverageMask, LabelMask, MaskRecord};
use crate::grammar::{parse_rule_value, rule_to_value, RuleFamily};

pub const SNAPSHOT_FORMAT: &str = "checklist-pool/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub config_hash: String,
    pub gate: GateConfig,
    pub split: SplitTag,
    pub rows: usize,
    pub labels: String,
    pub catalog: Value,
    pub records: usize,
    pub events: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    ordinal: usize,
    rule: Value,
    family: RuleFamily,
    auroc_con: f64,
    count: usize,
    pos_count: usize,
    mask: String,
    admission: Admission,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    seq: usize,
    rule: Value,
    #[serde(flatten)]
    decision: Decision,
}

fn format_err(line: usize, e: impl std::fmt::Display) -> PoolError {
    PoolError::Format(format!("line {}: {e}", line + 1))
}

impl RulePool {
    pub fn config_hash(&self) -> String {
        config_hash(&self.gate)
    }

    /// Serializes the pool; equal pools give byte-identical output.
    pub fn to_jsonl(&self) -> String {
        let catalog: Value = serde_json::from_str(&self.catalog.to_json()).expect("catalog json");
        let header = SnapshotHeader {
            format: SNAPSHOT_FORMAT.into(),
            config_hash: self.config_hash(),
            gate: self.gate.clone(),
            split: self.split,
            rows: self.labels.0.len(),
            labels: self.labels.0.to_hex(),
            catalog,
            records: self.records.len(),
            events: self.events.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            let line = RecordLine {
                ordinal: r.ordinal,
                rule: rule_to_value(&r.rule),
                family: r.family,
                auroc_con: r.auroc_con,
                count: r.mask.count(),
                pos_count: r.pos_count(),
                mask: r.mask.to_hex(),
                admission: r.admission,
            };
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        }
        for e in &self.events {
            let line = EventLine { seq: e.seq, rule: rule_to_value(&e.rule), decision: e.decision.clone() };
            out.push_str(&serde_json::to_string(&line).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| PoolError::IoFailure(format!("{}: {e}", path.display())))
    }

    /// Reads a pool file. When `expected` is given and its hash differs from
    /// the file's, a warning is returned alongside the pool.
    pub fn load(path: &Path, expected: Option<&GateConfig>) -> Result<(RulePool, Vec<String>), PoolError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PoolError::IoFailure(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text, expected)
    }

    pub fn from_jsonl(text: &str, expected: Option<&GateConfig>) -> Result<(RulePool, Vec<String>), PoolError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| PoolError::Format("empty pool file".into()))?;
        let header: SnapshotHeader = serde_json::from_str(first).map_err(|e| format_err(0, e))?;
        if header.format != SNAPSHOT_FORMAT {
            return Err(PoolError::Format(format!("unsupported format `{}`", header.format)));
        }
        let mut warnings = Vec::new();
        let stored_hash = config_hash(&header.gate);
        if stored_hash != header.config_hash {
            warnings.push(format!("header hash {} does not match its gate settings ({stored_hash})", header.config_hash));
        }
        if let Some(cfg) = expected {
            let want = config_hash(cfg);
            if want != header.config_hash {
                warnings.push(format!("config hash mismatch: file {} but current config {want}", header.config_hash));
            }
        }
        let catalog = FeatureCatalog::from_json(&header.catalog.to_string()).map_err(|e| format_err(0, e))?;
        let labels = CoverageMask::from_hex(&header.labels, header.rows, header.split).map_err(|e| format_err(0, e))?;
        let labels = LabelMask(labels);
        let mut pool = RulePool::from_parts(header.gate.clone(), header.split, labels, Arc::new(catalog));
        let parse = |v: &Value, line: usize| parse_rule_value(v, &pool.catalog, usize::MAX).map_err(|e| format_err(line, e));

        let mut records = Vec::with_capacity(header.records);
        let mut events = Vec::with_capacity(header.events);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if records.len() < header.records {
                let r: RecordLine = serde_json::from_str(line).map_err(|e| format_err(i, e))?;
                let rule = parse(&r.rule, i)?;
                let mask = CoverageMask::try_from(&MaskRecord { len: header.rows, split: header.split, hex: r.mask })
                    .map_err(|e| format_err(i, e))?;
                let pos_mask = mask.restrict(&pool.labels).map_err(|e| format_err(i, e))?;
                if r.ordinal != records.len() || mask.count() != r.count || pos_mask.count() != r.pos_count {
                    return Err(format_err(i, "record counts or ordinal inconsistent"));
                }
                if rule.family() != r.family {
                    return Err(format_err(i, "record family does not match its rule"));
                }
                let text = crate::grammar::serialize_rule(&rule);
                records.push(RuleRecord {
                    ordinal: r.ordinal,
                    rule,
                    text,
                    family: r.family,
                    auroc_con: r.auroc_con,
                    mask,
                    pos_mask,
                    admission: r.admission,
                });
            } else {
                let e: EventLine = serde_json::from_str(line).map_err(|e| format_err(i, e))?;
                let rule = parse(&e.rule, i)?;
                events.push(GateEvent { seq: e.seq, rule, decision: e.decision });
            }
        }
        if records.len() != header.records || events.len() != header.events {
            return Err(PoolError::Format(format!(
                "expected {} records and {} events, found {} and {}",
                header.records,
                header.events,
                records.len(),
                events.len()
            )));
        }
        let mut by_text = HashMap::new();
        for r in &records {
            by_text.insert(r.text.clone(), r.ordinal);
            *pool.family_counts.entry(r.family).or_insert(0) += 1;
        }
        pool.records = records;
        pool.by_text = by_text;
        pool.events = events;
        Ok((pool, warnings))
    }
}
