//! Planted-checklist cohorts with a generator-verified AUROC.
//!
//! Six planted rules, one per family, each fire for roughly a quarter of
//! rows. Labels follow a liability model: `S + noise * e` with `S` the planted
//! score and `e` standard logistic; the top `round(prevalence * n)` rows are
//! positive. The noise scale is bisected until the planted checklist reaches
//! the requested AUROC.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::data::{
    summarize_series, write_table, Column, DataError, Dataset, FeatureCatalog, FeatureSpec, Measurement, SplitTag,
    TableOptions, TEMPORAL_STATS,
};
use crate::grammar::{rule_text, rule_to_value, CmpOp, DerivedExpr, Direction, Rule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid generator settings: {0}")]
    InvalidSpec(String),
    #[error("target AUROC {target} is unreachable; closest was {best}")]
    UnreachableTarget { target: f64, best: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot write {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSpec {
    /// Calibrate the noise scale to this AUROC of the planted checklist.
    Target { auroc: f64 },
    /// Use this noise scale as is.
    Fixed { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub prevalence: f64,
    pub noise: NoiseSpec,
    /// Intended decision threshold of the planted checklist.
    pub k: u32,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { n: 10_000, prevalence: 0.15, noise: NoiseSpec::Target { auroc: 0.95 }, k: 3, tolerance: 0.02, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub n: usize,
    pub seed: u64,
    pub prevalence: f64,
    pub positives: usize,
    pub noise_scale: f64,
    pub target_auroc: Option<f64>,
    pub achieved_auroc: f64,
    pub k: u32,
    pub planted: Vec<Value>,
    pub planted_text: Vec<String>,
    pub fire_rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub manifest: SynthManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub table: PathBuf,
    pub schema: PathBuf,
    pub manifest: PathBuf,
}

pub fn planted_rules() -> Vec<Rule> {
    vec![
        Rule::DerivedThreshold { expr: DerivedExpr::ratio("hr", "map"), op: CmpOp::Ge, threshold: 1.5 },
        Rule::NumericThreshold { feature: "bun".into(), op: CmpOp::Ge, threshold: 30.0 },
        Rule::PercentChange {
            feature_t0: "cr__first".into(),
            feature_t1: "cr__last".into(),
            pct: 50.0,
            op: CmpOp::Ge,
            direction: Direction::Increase,
        },
        Rule::BinaryTrue { feature: "intubated".into() },
        Rule::CategoricalIn {
            feature: "admission_type".into(),
            categories: BTreeSet::from(["emergency".to_string(), "urgent".to_string()]),
        },
        Rule::QuantileThreshold { feature: "wbc".into(), op: CmpOp::Ge, q: 0.75 },
    ]
}

struct Raw {
    numeric: Vec<(FeatureSpec, Vec<Option<f64>>)>,
    categorical: Vec<(FeatureSpec, Vec<Option<&'static str>>)>,
    binary: Vec<(FeatureSpec, Vec<Option<bool>>)>,
    fires: [Vec<bool>; 6],
}

fn with_missing(rng: &mut ChaCha8Rng, values: Vec<f64>, rate: f64) -> Vec<Option<f64>> {
    values.into_iter().map(|x| (!rng.random_bool(rate)).then_some(x)).collect()
}

fn pick<'a>(rng: &mut ChaCha8Rng, levels: &[(&'a str, f64)]) -> &'a str {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(name, p) in levels {
        acc += p;
        if u < acc {
            return name;
        }
    }
    levels[levels.len() - 1].0
}

/// Sample quantile with linear interpolation between order statistics.
fn sample_quantile(values: &[Option<f64>], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac > 0.0 && lo + 1 < v.len() {
        v[lo] + frac * (v[lo + 1] - v[lo])
    } else {
        v[lo]
    }
}

fn generate(n: usize, rng: &mut ChaCha8Rng) -> Raw {
    let normal = |m: f64, s: f64| Normal::new(m, s).expect("valid normal");
    let lognormal = |m: f64, s: f64| LogNormal::new(m, s).expect("valid lognormal");
    let draw = |rng: &mut ChaCha8Rng, d: &dyn Fn(&mut ChaCha8Rng) -> f64| (0..n).map(|_| d(rng)).collect::<Vec<f64>>();

    let hr = draw(rng, &|r| normal(90.0, 18.0).sample(r).max(30.0));
    let map = draw(rng, &|r| normal(72.0, 12.0).sample(r).max(30.0));
    let bun = draw(rng, &|r| lognormal(20f64.ln(), 0.57).sample(r));
    let bun = with_missing(rng, bun, 0.02);
    let wbc = draw(rng, &|r| lognormal(9f64.ln(), 0.35).sample(r));
    let wbc = with_missing(rng, wbc, 0.02);
    let intubated: Vec<Option<bool>> = (0..n).map(|_| Some(rng.random_bool(0.24))).collect();
    let admission: Vec<Option<&'static str>> = (0..n)
        .map(|_| Some(pick(rng, &[("elective", 0.5), ("emergency", 0.16), ("urgent", 0.08), ("transfer", 0.26)])))
        .collect();

    // creatinine: three measurements before the index time
    let mut cr_cols: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n); TEMPORAL_STATS.len()];
    let mut cr_first = Vec::with_capacity(n);
    let mut cr_last = Vec::with_capacity(n);
    for _ in 0..n {
        let first = lognormal(0.0, 0.3).sample(rng);
        let factor = lognormal(0.1, 0.42).sample(rng);
        let mid = first * factor.sqrt() * lognormal(0.0, 0.1).sample(rng);
        let last = first * factor;
        let pts = [
            Measurement { time: 0.0, value: first },
            Measurement { time: 1.0, value: mid },
            Measurement { time: 2.0, value: last },
        ];
        let s = summarize_series(&pts, 3.0, None);
        for (slot, v) in cr_cols.iter_mut().zip([s.first, s.last, s.min, s.max, s.delta, s.pct, s.range]) {
            slot.push(v);
        }
        cr_first.push(first);
        cr_last.push(last);
    }

    let age = draw(rng, &|r| normal(65.0, 15.0).sample(r).clamp(18.0, 100.0));
    let temp = draw(rng, &|r| normal(37.0, 0.6).sample(r));
    let rr = draw(rng, &|r| normal(18.0, 4.0).sample(r).max(4.0));
    let sodium = draw(rng, &|r| normal(139.0, 4.0).sample(r));
    let lactate = draw(rng, &|r| lognormal(1.5f64.ln(), 0.5).sample(r));
    let lactate = with_missing(rng, lactate, 0.05);
    let glucose = draw(rng, &|r| lognormal(120f64.ln(), 0.3).sample(r));
    let diabetes: Vec<Option<bool>> = (0..n).map(|_| Some(rng.random_bool(0.25))).collect();
    let male: Vec<Option<bool>> = (0..n).map(|_| Some(rng.random_bool(0.5))).collect();
    let vasopressor: Vec<Option<bool>> = (0..n).map(|_| Some(rng.random_bool(0.15))).collect();
    let ward: Vec<Option<&'static str>> = (0..n)
        .map(|_| Some(pick(rng, &[("medical", 0.4), ("surgical", 0.3), ("cardiac", 0.2), ("neuro", 0.1)])))
        .collect();

    let wbc_cut = sample_quantile(&wbc, 0.75);
    let fires = [
        (0..n).map(|i| map[i] != 0.0 && hr[i] / map[i] >= 1.5).collect(),
        bun.iter().map(|b| b.is_some_and(|b| b >= 30.0)).collect(),
        (0..n).map(|i| cr_first[i] != 0.0 && 100.0 * (cr_last[i] - cr_first[i]) / cr_first[i] >= 50.0).collect(),
        intubated.iter().map(|b| *b == Some(true)).collect(),
        admission.iter().map(|a| matches!(a, Some("emergency") | Some("urgent"))).collect(),
        wbc.iter().map(|w| w.is_some_and(|w| w >= wbc_cut)).collect(),
    ];

    let num = |name: &str, unit: Option<&str>, v: Vec<f64>| {
        let spec = FeatureSpec::numeric(name);
        (match unit {
            Some(u) => spec.with_unit(u),
            None => spec,
        }, v.into_iter().map(Some).collect::<Vec<_>>())
    };
    let mut numeric = vec![
        num("age", Some("years"), age),
        num("hr", Some("bpm"), hr),
        num("map", Some("mmHg"), map),
        num("rr", Some("breaths/min"), rr),
        num("temp", Some("C"), temp),
        (FeatureSpec::numeric("bun").with_unit("mg/dL"), bun),
        (FeatureSpec::numeric("wbc").with_unit("K/uL"), wbc),
        (FeatureSpec::numeric("lactate").with_unit("mmol/L"), lactate),
        num("sodium", Some("mmol/L"), sodium),
        num("glucose", Some("mg/dL"), glucose),
    ];
    for (stat, col) in TEMPORAL_STATS.iter().zip(cr_cols) {
        numeric.push((FeatureSpec::numeric(format!("cr__{stat}")).with_unit("mg/dL"), col));
    }
    Raw {
        numeric,
        categorical: vec![(FeatureSpec::categorical("admission_type"), admission), (FeatureSpec::categorical("ward"), ward)],
        binary: vec![
            (FeatureSpec::binary("intubated"), intubated),
            (FeatureSpec::binary("vasopressor"), vasopressor),
            (FeatureSpec::binary("diabetes"), diabetes),
            (FeatureSpec::binary("male"), male),
        ],
        fires,
    }
}

/// Pairwise-count AUROC of integer scores; ties between classes count half.
pub fn pairwise_auroc(scores: &[u32], labels: &[bool]) -> f64 {
    let top = scores.iter().copied().max().unwrap_or(0) as usize;
    let mut pos = vec![0f64; top + 1];
    let mut neg = vec![0f64; top + 1];
    for (&s, &y) in scores.iter().zip(labels) {
        if y {
            pos[s as usize] += 1.0;
        } else {
            neg[s as usize] += 1.0;
        }
    }
    let (mut wins, mut pairs) = (0.0, 0.0);
    for a in 0..=top {
        for b in 0..=top {
            let w = pos[a] * neg[b];
            pairs += w;
            if a > b {
                wins += w;
            } else if a == b {
                wins += 0.5 * w;
            }
        }
    }
    wins / pairs
}

fn labels_for(score: &[u32], logistic: &[f64], order_key: &[f64], noise: f64, positives: usize) -> Vec<bool> {
    let n = score.len();
    let latent: Vec<f64> = (0..n).map(|i| score[i] as f64 + noise * logistic[i]).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| latent[b].total_cmp(&latent[a]).then(order_key[a].total_cmp(&order_key[b])));
    let mut labels = vec![false; n];
    for &i in &idx[..positives] {
        labels[i] = true;
    }
    labels
}

pub fn synth_gen(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    if spec.n < 2 {
        return Err(SynthError::InvalidSpec("need at least two rows".into()));
    }
    if !(spec.prevalence > 0.0 && spec.prevalence < 1.0) {
        return Err(SynthError::InvalidSpec(format!("prevalence {} outside (0, 1)", spec.prevalence)));
    }
    if spec.k > 6 {
        return Err(SynthError::InvalidSpec(format!("K = {} exceeds the six planted rules", spec.k)));
    }
    let positives = (spec.prevalence * spec.n as f64).round() as usize;
    if positives == 0 || positives == spec.n {
        return Err(SynthError::UnreachableTarget { target: spec.prevalence, best: positives as f64 / spec.n as f64 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw = generate(spec.n, &mut rng);
    let score: Vec<u32> = (0..spec.n).map(|i| raw.fires.iter().filter(|f| f[i]).count() as u32).collect();
    let logistic: Vec<f64> = (0..spec.n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0 - f64::EPSILON);
            (u / (1.0 - u)).ln()
        })
        .collect();
    let order_key: Vec<f64> = (0..spec.n).map(|_| rng.random()).collect();
    let achieved = |noise: f64| {
        let labels = labels_for(&score, &logistic, &order_key, noise, positives);
        (pairwise_auroc(&score, &labels), labels)
    };

    let (noise, target) = match spec.noise {
        NoiseSpec::Fixed { scale } if scale >= 0.0 && scale.is_finite() => (scale, None),
        NoiseSpec::Fixed { scale } => return Err(SynthError::InvalidSpec(format!("noise scale {scale}"))),
        NoiseSpec::Target { auroc } => {
            let (ceiling, _) = achieved(0.0);
            let noise = if ceiling <= auroc {
                0.0
            } else {
                let (mut lo, mut hi) = (0.0, 1.0);
                while achieved(hi).0 > auroc && hi < 1e6 {
                    hi *= 2.0;
                }
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if achieved(mid).0 > auroc {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (a_lo, a_hi) = (achieved(lo).0, achieved(hi).0);
                if (a_lo - auroc).abs() <= (a_hi - auroc).abs() {
                    lo
                } else {
                    hi
                }
            };
            (noise, Some(auroc))
        }
    };
    let (auroc, labels) = achieved(noise);
    if let Some(t) = target {
        if (auroc - t).abs() > spec.tolerance {
            return Err(SynthError::UnreachableTarget { target: t, best: auroc });
        }
    }

    let mut specs = Vec::new();
    let mut columns = Vec::new();
    for (s, v) in raw.numeric {
        specs.push(s);
        columns.push(Column::Numeric(v));
    }
    for (s, v) in raw.categorical {
        specs.push(s);
        columns.push(Column::categorical_from(&v));
    }
    for (s, v) in raw.binary {
        specs.push(s);
        columns.push(Column::Binary(v));
    }
    let catalog = Arc::new(FeatureCatalog::new(specs)?);
    let groups = (0..spec.n).map(|i| format!("p{i:06}")).collect();
    let dataset = Dataset::new(catalog, columns, labels, groups)?.with_split(SplitTag::Full);
    let planted = planted_rules();
    let manifest = SynthManifest {
        n: spec.n,
        seed: spec.seed,
        prevalence: positives as f64 / spec.n as f64,
        positives,
        noise_scale: noise,
        target_auroc: target,
        achieved_auroc: auroc,
        k: spec.k,
        planted: planted.iter().map(rule_to_value).collect(),
        planted_text: planted.iter().map(rule_text).collect(),
        fire_rates: raw.fires.iter().map(|f| f.iter().filter(|&&b| b).count() as f64 / spec.n as f64).collect(),
    };
    Ok(SynthOutput { dataset, manifest })
}

/// Writes `cohort.csv`, `schema.json` and `manifest.json` into `dir`.
pub fn write_synth(out: &SynthOutput, dir: &Path) -> Result<SynthFiles, SynthError> {
    let io = |p: &Path, e: std::io::Error| SynthError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let files = SynthFiles {
        table: dir.join("cohort.csv"),
        schema: dir.join("schema.json"),
        manifest: dir.join("manifest.json"),
    };
    write_table(&files.table, &out.dataset, &TableOptions::default())?;
    std::fs::write(&files.schema, out.dataset.catalog().to_json()).map_err(|e| io(&files.schema, e))?;
    let manifest = serde_json::to_string_pretty(&out.manifest).expect("manifest serializes");
    std::fs::write(&files.manifest, manifest).map_err(|e| io(&files.manifest, e))?;
    Ok(files)
}
