use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::ThresholdObjective;
use crate::grammar::RuleFamily;
use crate::par::ExecMode;

use super::PoolError;

/// How a candidate that overlaps a retained rule beyond `δ` can still enter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedundancyMode {
    /// AUROC above the most similar retained rule by at least `min_pos_gain`.
    #[default]
    AucGain,
    /// Positives covered by the candidate but not by the most similar rule,
    /// as a fraction of all positives, at least `min_pos_gain`.
    CoverageGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMode {
    #[default]
    Greedy,
    Exhaustive,
    Agent,
    /// The first `max_rules` retained rules in acceptance order, unsearched.
    AsProposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    #[default]
    Offline,
    Agent,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlausibilityMode {
    #[default]
    AcceptAll,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerKind {
    #[default]
    Heuristic,
    Remote,
}

/// Per-family minimum counts used to steer proposals toward a mix of rule types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiversityTargets {
    pub minima: BTreeMap<RuleFamily, usize>,
}

impl Default for DiversityTargets {
    fn default() -> Self {
        DiversityTargets { minima: RuleFamily::ALL.iter().map(|&f| (f, 1)).collect() }
    }
}

/// Retention-gate parameters; the part of the configuration a pool depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub auc_threshold: f64,
    pub jaccard_threshold: f64,
    pub min_pos_gain: f64,
    pub redundancy: RedundancyMode,
    /// When false the overlap check is skipped entirely.
    pub jaccard_enabled: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            auc_threshold: 0.60,
            jaccard_threshold: 0.9,
            min_pos_gain: 0.01,
            redundancy: RedundancyMode::AucGain,
            jaccard_enabled: true,
        }
    }
}

/// Everything that parameterises one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub max_rules: usize,
    pub iterations: usize,
    pub auc_threshold: f64,
    pub jaccard_threshold: f64,
    pub min_pos_gain: f64,
    pub redundancy: RedundancyMode,
    pub jaccard_enabled: bool,
    /// When false every evaluable, non-duplicate candidate is retained.
    pub gate_enabled: bool,
    pub diversity_enabled: bool,
    pub diversity: DiversityTargets,
    pub refine_steps: usize,
    pub refine_phases: usize,
    pub refine: RefineMode,
    pub logic_depth: usize,
    pub objective: ThresholdObjective,
    pub batch_size: usize,
    pub seed: u64,
    pub temperature: f64,
    pub assembly: AssemblyMode,
    /// Largest number of subsets the exhaustive assembler may score.
    pub exhaustive_cap: u64,
    pub proposer: ProposerKind,
    pub plausibility: PlausibilityMode,
    pub plausibility_cap: usize,
    /// Candidates the heuristic proposer screens per requested rule batch.
    pub screen_width: usize,
    pub folds: usize,
    pub validation_fraction: f64,
    pub exec: ExecMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let gate = GateConfig::default();
        PipelineConfig {
            max_rules: 6,
            iterations: 100,
            auc_threshold: gate.auc_threshold,
            jaccard_threshold: gate.jaccard_threshold,
            min_pos_gain: gate.min_pos_gain,
            redundancy: gate.redundancy,
            jaccard_enabled: true,
            gate_enabled: true,
            diversity_enabled: true,
            diversity: DiversityTargets::default(),
            refine_steps: 10,
            refine_phases: 2,
            refine: RefineMode::Offline,
            logic_depth: 1,
            objective: ThresholdObjective::Youden,
            batch_size: 3,
            seed: 0,
            temperature: 1.0,
            assembly: AssemblyMode::Greedy,
            exhaustive_cap: 250_000,
            proposer: ProposerKind::Heuristic,
            plausibility: PlausibilityMode::AcceptAll,
            plausibility_cap: 100,
            screen_width: 32,
            folds: 5,
            validation_fraction: 0.2,
            exec: ExecMode::Parallel,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PoolError> {
        let bad = |m: String| Err(PoolError::InvalidConfig(m));
        if !(0.5..1.0).contains(&self.auc_threshold) {
            return bad(format!("auc_threshold {} outside [0.5, 1)", self.auc_threshold));
        }
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return bad(format!("jaccard_threshold {} outside (0, 1]", self.jaccard_threshold));
        }
        if !(self.min_pos_gain.is_finite() && self.min_pos_gain >= 0.0) {
            return bad(format!("min_pos_gain {} must be a non-negative number", self.min_pos_gain));
        }
        if self.max_rules == 0 {
            return bad("max_rules must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.folds < 2 {
            return bad("folds must be at least 2".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction {} outside (0, 1)", self.validation_fraction));
        }
        if let ThresholdObjective::SensitivityAtSpecificity { floor } = self.objective {
            if !(0.0..=1.0).contains(&floor) {
                return bad(format!("specificity floor {floor} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn gate(&self) -> GateConfig {
        if !self.gate_enabled {
            return GateConfig { auc_threshold: 0.0, jaccard_enabled: false, ..GateConfig::default() };
        }
        GateConfig {
            auc_threshold: self.auc_threshold,
            jaccard_threshold: self.jaccard_threshold,
            min_pos_gain: self.min_pos_gain,
            redundancy: self.redundancy,
            jaccard_enabled: self.jaccard_enabled,
        }
    }

    /// The Single-Pass ablation: one proposal round, no refinement.
    pub fn single_pass(mut self) -> Self {
        self.iterations = 1;
        self.refine = RefineMode::Off;
        self
    }

    /// The LLM Only ablation: one remote proposal taken as the checklist,
    /// with no retention gate, search or refinement.
    pub fn llm_only(mut self) -> Self {
        self.proposer = ProposerKind::Remote;
        self.plausibility = PlausibilityMode::AcceptAll;
        self.iterations = 1;
        self.batch_size = self.max_rules;
        self.gate_enabled = false;
        self.diversity_enabled = false;
        self.assembly = AssemblyMode::AsProposed;
        self.refine = RefineMode::Off;
        self
    }

    pub fn without_jaccard(mut self) -> Self {
        self.jaccard_enabled = false;
        self
    }

    pub fn without_diversity(mut self) -> Self {
        self.diversity_enabled = false;
        self
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

pub(crate) fn config_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("config serializes");
    let text = crate::grammar::canonical_json(&v);
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = PipelineConfig::default();
        assert_eq!((c.max_rules, c.iterations, c.refine_steps, c.logic_depth), (6, 100, 10, 1));
        assert_eq!((c.auc_threshold, c.jaccard_threshold, c.min_pos_gain), (0.60, 0.9, 0.01));
        assert_eq!(c.objective, ThresholdObjective::Youden);
        assert_eq!(c.temperature, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn invariants_enforced() {
        for c in [
            PipelineConfig { auc_threshold: 0.4, ..Default::default() },
            PipelineConfig { auc_threshold: 1.0, ..Default::default() },
            PipelineConfig { jaccard_threshold: 0.0, ..Default::default() },
            PipelineConfig { max_rules: 0, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"max_rules": 4, "seed": 9}"#).unwrap();
        assert_eq!(c.max_rules, 4);
        assert_eq!(c.iterations, 100);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"max_rule": 4}"#).is_err());
    }

    #[test]
    fn llm_only_opens_the_gate() {
        let c = PipelineConfig::default().llm_only();
        assert_eq!((c.iterations, c.batch_size, c.assembly), (1, 6, AssemblyMode::AsProposed));
        let g = c.gate();
        assert!(g.auc_threshold == 0.0 && !g.jaccard_enabled);
        assert!(PipelineConfig::default().gate().jaccard_enabled);
        c.validate().unwrap();
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        assert_eq!(a.hash(), PipelineConfig::default().hash());
        assert_ne!(a.hash(), PipelineConfig { seed: 1, ..Default::default() }.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
