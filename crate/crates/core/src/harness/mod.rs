//! End-to-end orchestration: cross-validated runs, rule-budget sweeps,
//! report comparison, synthetic cohorts and the rule-space estimate.

mod run;
mod study;
mod synth;

pub use run::{
    aggregate, replay, run, Aggregate, Backend, CallsUsed, FoldReport, FoldRows, MeanSd, RemoteBackend, RunError,
    RunOutput, RunReport,
};
pub use study::{compare_reports, estimate_space, match_rules, sweep_rule_budget, SpaceReport, SweepReport, SweepRow};
pub use synth::{
    pairwise_auroc, planted_rules, synth_gen, write_synth, NoiseSpec, SynthError, SynthFiles, SynthManifest, SynthOutput,
    SynthSpec,
};
