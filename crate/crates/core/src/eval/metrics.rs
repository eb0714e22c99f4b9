use super::{CoverageMask, EvalError};

/// Mann–Whitney tally: `twice_u = 2 * #(pos > neg) + #(pos == neg)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AucTally {
    pub twice_u: u128,
    pub positives: u64,
    pub negatives: u64,
}

impl AucTally {
    pub fn value(&self) -> f64 {
        self.twice_u as f64 / (2.0 * self.positives as f64 * self.negatives as f64)
    }
}

fn check_labels(n_scores: usize, labels: &[bool]) -> Result<(u64, u64), EvalError> {
    if n_scores != labels.len() {
        return Err(EvalError::LengthMismatch { left: n_scores, right: labels.len() });
    }
    let pos = labels.iter().filter(|&&y| y).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Exact rank tally of real-valued scores; ties between classes earn half credit.
pub fn auroc_tally(scores: &[f64], labels: &[bool]) -> Result<AucTally, EvalError> {
    let (positives, negatives) = check_labels(scores.len(), labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice_u = 0u128;
    let mut neg_below = 0u128;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u128, 0u128);
        // -0.0 and 0.0 are the same score
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice_u += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    Ok(AucTally { twice_u, positives, negatives })
}

/// Probability that a random positive outranks a random negative, ties ½.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    Ok(auroc_tally(scores, labels)?.value())
}

/// AUROC of integer scores in `0..=max_score`, via per-level histograms.
pub fn auroc_discrete(scores: &[u32], labels: &[bool]) -> Result<f64, EvalError> {
    Ok(discrete_tally(scores, labels)?.value())
}

pub fn discrete_tally(scores: &[u32], labels: &[bool]) -> Result<AucTally, EvalError> {
    let (positives, negatives) = check_labels(scores.len(), labels)?;
    let top = scores.iter().copied().max().unwrap_or(0) as usize;
    let mut pos = vec![0u64; top + 1];
    let mut neg = vec![0u64; top + 1];
    for (&s, &y) in scores.iter().zip(labels) {
        if y {
            pos[s as usize] += 1;
        } else {
            neg[s as usize] += 1;
        }
    }
    Ok(AucTally { twice_u: histogram_twice_u(&pos, &neg), positives, negatives })
}

pub(crate) fn histogram_twice_u(pos: &[u64], neg: &[u64]) -> u128 {
    let mut twice_u = 0u128;
    let mut neg_below = 0u128;
    for (&p, &n) in pos.iter().zip(neg) {
        twice_u += p as u128 * (2 * neg_below + n as u128);
        neg_below += n as u128;
    }
    twice_u
}

/// AUROC of a binary rule from its coverage counts.
///
/// `fired_pos` positives and `fired_neg` negatives fire out of `positives`
/// and `negatives`.
pub fn mask_auroc(fired_pos: u64, fired_neg: u64, positives: u64, negatives: u64) -> f64 {
    let pos = [positives - fired_pos, fired_pos];
    let neg = [negatives - fired_neg, fired_neg];
    AucTally { twice_u: histogram_twice_u(&pos, &neg), positives, negatives }.value()
}

/// Jaccard index between the positive-class restrictions of two masks.
///
/// An empty union returns 1.0, so a rule covering no positives counts as
/// fully redundant.
pub fn jaccard_positive(a: &CoverageMask, b: &CoverageMask, labels: &[bool]) -> Result<f64, EvalError> {
    if a.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: labels.len() });
    }
    let y = CoverageMask::from_bools(labels, a.split());
    let pa = a.and(&y)?;
    let pb = b.and(&y)?;
    pa.jaccard(&pb)
}
