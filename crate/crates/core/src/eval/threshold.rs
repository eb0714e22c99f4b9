use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::metrics::histogram_twice_u;
use super::{AucTally, EvalError};

/// Criterion used to choose the decision threshold `K`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdObjective {
    #[default]
    Youden,
    /// Highest sensitivity among thresholds with specificity at or above `floor`.
    SensitivityAtSpecificity { floor: f64 },
    F1,
    BalancedAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn sensitivity(&self) -> f64 {
        self.tp as f64 / self.positives() as f64
    }

    pub fn specificity(&self) -> f64 {
        self.tn as f64 / self.negatives() as f64
    }
}

/// Exact comparison of two operating points under `objective`.
fn compare(objective: ThresholdObjective, a: &Confusion, b: &Confusion) -> Ordering {
    let (p, n) = (a.positives() as u128, a.negatives() as u128);
    match objective {
        // sens + spec ordering; balanced accuracy is the same quantity halved
        ThresholdObjective::Youden | ThresholdObjective::BalancedAccuracy => {
            let key = |c: &Confusion| c.tp as u128 * n + c.tn as u128 * p;
            key(a).cmp(&key(b))
        }
        ThresholdObjective::F1 => {
            // 2TP / (2TP + FP + FN) = 2TP / (TP + FP + P)
            let num = |c: &Confusion| 2 * c.tp as u128;
            let den = |c: &Confusion| c.tp as u128 + c.fp as u128 + p;
            (num(a) * den(b)).cmp(&(num(b) * den(a)))
        }
        ThresholdObjective::SensitivityAtSpecificity { floor } => {
            let ok = |c: &Confusion| c.specificity() >= floor;
            match (ok(a), ok(b)) {
                (true, false) => Ordering::Greater,
                (false, true) => Ordering::Less,
                (true, true) => a.tp.cmp(&b.tp),
                (false, false) => a.tn.cmp(&b.tn),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub score: u32,
    pub n: u64,
    pub events: u64,
    pub rate: f64,
}

/// Adjacent present score levels whose event rate falls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskInversion {
    pub lower_score: u32,
    pub upper_score: u32,
    pub lower_n: u64,
    pub upper_n: u64,
    /// Either bin holds fewer rows than the small-bin threshold.
    pub small_bin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTable {
    pub rows: Vec<RiskRow>,
    pub inversions: Vec<RiskInversion>,
    pub small_bin_threshold: u64,
}

pub const DEFAULT_SMALL_BIN: u64 = 20;

impl RiskTable {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.n).sum()
    }

    /// True when every present level has a strictly higher event rate than the one below it.
    pub fn is_strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| rate_cmp(&w[1], &w[0]) == Ordering::Greater)
    }
}

fn rate_cmp(a: &RiskRow, b: &RiskRow) -> Ordering {
    (a.events as u128 * b.n as u128).cmp(&(b.events as u128 * a.n as u128))
}

/// Per-score event counts and rates over the score levels that occur.
pub fn risk_table(scores: &[u32], labels: &[bool]) -> RiskTable {
    risk_table_with(scores, labels, DEFAULT_SMALL_BIN)
}

pub fn risk_table_with(scores: &[u32], labels: &[bool], small_bin_threshold: u64) -> RiskTable {
    let top = scores.iter().copied().max().unwrap_or(0) as usize;
    let mut n = vec![0u64; top + 1];
    let mut events = vec![0u64; top + 1];
    for (&s, &y) in scores.iter().zip(labels) {
        n[s as usize] += 1;
        events[s as usize] += y as u64;
    }
    let rows: Vec<RiskRow> = (0..=top)
        .filter(|&s| n[s] > 0)
        .map(|s| RiskRow { score: s as u32, n: n[s], events: events[s], rate: events[s] as f64 / n[s] as f64 })
        .collect();
    let inversions = rows
        .windows(2)
        .filter(|w| rate_cmp(&w[1], &w[0]) == Ordering::Less)
        .map(|w| RiskInversion {
            lower_score: w[0].score,
            upper_score: w[1].score,
            lower_n: w[0].n,
            upper_n: w[1].n,
            small_bin: w[0].n < small_bin_threshold || w[1].n < small_bin_threshold,
        })
        .collect();
    RiskTable { rows, inversions, small_bin_threshold }
}

/// Discrimination and operating-point summary of a checklist score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub threshold: u32,
    pub max_score: u32,
    pub sensitivity: f64,
    pub specificity: f64,
    pub youden_j: f64,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub prevalence: f64,
    pub confusion: Confusion,
    pub risk_table: RiskTable,
}

struct Histograms {
    pos: Vec<u64>,
    neg: Vec<u64>,
    positives: u64,
    negatives: u64,
}

impl Histograms {
    fn new(scores: &[u32], labels: &[bool], max_score: u32) -> Result<Self, EvalError> {
        if scores.len() != labels.len() {
            return Err(EvalError::LengthMismatch { left: scores.len(), right: labels.len() });
        }
        let mut pos = vec![0u64; max_score as usize + 1];
        let mut neg = vec![0u64; max_score as usize + 1];
        for (&s, &y) in scores.iter().zip(labels) {
            if s > max_score {
                return Err(EvalError::InvalidInput(format!("score {s} exceeds the maximum {max_score}")));
            }
            if y {
                pos[s as usize] += 1;
            } else {
                neg[s as usize] += 1;
            }
        }
        let positives = pos.iter().sum();
        let negatives = neg.iter().sum();
        if positives == 0 || negatives == 0 {
            return Err(EvalError::SingleClass);
        }
        Ok(Histograms { pos, neg, positives, negatives })
    }

    /// Confusion counts for every `K` in `0..=max`, predicting positive at `score >= K`.
    fn sweep(&self) -> Vec<Confusion> {
        let levels = self.pos.len();
        let mut out = vec![Confusion::default(); levels];
        let (mut tp, mut fp) = (0u64, 0u64);
        for k in (0..levels).rev() {
            tp += self.pos[k];
            fp += self.neg[k];
            out[k] = Confusion { tp, fp, tn: self.negatives - fp, fn_: self.positives - tp };
        }
        out
    }
}

fn report(scores: &[u32], labels: &[bool], hist: &Histograms, max_score: u32, k: u32, c: Confusion) -> EvalReport {
    let sensitivity = c.sensitivity();
    let specificity = c.specificity();
    let tally = AucTally { twice_u: histogram_twice_u(&hist.pos, &hist.neg), positives: hist.positives, negatives: hist.negatives };
    EvalReport {
        auroc: tally.value(),
        threshold: k,
        max_score,
        sensitivity,
        specificity,
        youden_j: sensitivity + specificity - 1.0,
        ppv: (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64),
        npv: (c.tn + c.fn_ > 0).then(|| c.tn as f64 / (c.tn + c.fn_) as f64),
        prevalence: hist.positives as f64 / (hist.positives + hist.negatives) as f64,
        confusion: c,
        risk_table: risk_table(scores, labels),
    }
}

/// Chooses `K` in `0..=max_score` maximizing `objective`; ties go to the smallest `K`.
pub fn select_threshold(
    scores: &[u32],
    labels: &[bool],
    max_score: u32,
    objective: ThresholdObjective,
) -> Result<(u32, EvalReport), EvalError> {
    let hist = Histograms::new(scores, labels, max_score)?;
    let sweep = hist.sweep();
    let mut best = 0usize;
    for k in 1..sweep.len() {
        if compare(objective, &sweep[k], &sweep[best]) == Ordering::Greater {
            best = k;
        }
    }
    let k = best as u32;
    Ok((k, report(scores, labels, &hist, max_score, k, sweep[best])))
}

/// Report at a fixed threshold, e.g. on held-out data.
pub fn report_at(scores: &[u32], labels: &[bool], max_score: u32, k: u32) -> Result<EvalReport, EvalError> {
    let hist = Histograms::new(scores, labels, max_score)?;
    let c = if k as usize >= hist.pos.len() {
        Confusion { tp: 0, fp: 0, tn: hist.negatives, fn_: hist.positives }
    } else {
        hist.sweep()[k as usize]
    };
    Ok(report(scores, labels, &hist, max_score, k, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation_at_two() {
        let (k, r) = select_threshold(&[0, 1, 2, 3], &[false, false, true, true], 3, ThresholdObjective::Youden).unwrap();
        assert_eq!(k, 2);
        assert_eq!(r.youden_j, 1.0);
        assert_eq!(r.auroc, 1.0);
    }

    #[test]
    fn constant_scores_pick_zero() {
        let (k, r) = select_threshold(&[2; 6], &[true, false, true, false, false, false], 4, ThresholdObjective::Youden).unwrap();
        assert_eq!(k, 0);
        assert_eq!(r.youden_j, 0.0);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(select_threshold(&[1, 2], &[true, true], 2, ThresholdObjective::Youden), Err(EvalError::SingleClass));
    }

    #[test]
    fn alternate_objectives() {
        let scores = [0, 0, 1, 1, 1, 2, 2, 3];
        let labels = [false, false, false, true, false, true, true, true];
        let (k, r) = select_threshold(&scores, &labels, 3, ThresholdObjective::SensitivityAtSpecificity { floor: 1.0 }).unwrap();
        assert_eq!((k, r.specificity), (2, 1.0));
        let (k, _) = select_threshold(&scores, &labels, 3, ThresholdObjective::F1).unwrap();
        assert_eq!(k, 2);
        let (kb, _) = select_threshold(&scores, &labels, 3, ThresholdObjective::BalancedAccuracy).unwrap();
        let (ky, _) = select_threshold(&scores, &labels, 3, ThresholdObjective::Youden).unwrap();
        assert_eq!(kb, ky);
    }

    #[test]
    fn fixed_threshold_report() {
        let r = report_at(&[0, 1, 2, 3], &[false, true, false, true], 3, 2).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        let r = report_at(&[0, 1], &[false, true], 6, 5).unwrap();
        assert_eq!(r.confusion.tp + r.confusion.fp, 0);
        assert_eq!(r.ppv, None);
    }

    #[test]
    fn risk_rows_and_inversions() {
        let t = risk_table(&[1, 1, 1], &[true, false, false]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.total(), 3);
        let t = risk_table(&[0, 0, 1, 1, 3, 3], &[false, false, true, true, true, false]);
        assert_eq!(t.rows.iter().map(|r| r.score).collect::<Vec<_>>(), [0, 1, 3]);
        assert_eq!(t.inversions.len(), 1);
        assert!(t.inversions[0].small_bin);
        assert!(!t.is_strictly_increasing());
    }
}
