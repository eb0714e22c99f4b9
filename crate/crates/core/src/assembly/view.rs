use crate::data::{Dataset, FeatureStats, SplitTag};
use crate::eval::{evaluate_rules, histogram_twice_u, AucTally, CoverageMask, EvalError};
use crate::par::ExecMode;
use crate::pool::RulePool;

use super::AssemblyError;

/// Validation-split coverage of every retained rule, scored as bit-sliced counters.
#[derive(Debug, Clone)]
pub struct ValidationView {
    masks: Vec<CoverageMask>,
    positive_words: Vec<u64>,
    tail: u64,
    positives: u64,
    negatives: u64,
}

impl ValidationView {
    /// Evaluates the pool on `d_val` with the statistics frozen on the construction split.
    pub fn new(pool: &RulePool, d_val: &Dataset, stats: &FeatureStats, mode: ExecMode) -> Result<Self, AssemblyError> {
        match d_val.split() {
            SplitTag::Validation | SplitTag::Full => {}
            other => return Err(AssemblyError::WrongSplit(other)),
        }
        if pool.is_empty() {
            return Err(AssemblyError::EmptyPool);
        }
        let masks = evaluate_rules(&pool.rules(), d_val, stats, mode).into_iter().collect::<Result<Vec<_>, _>>()?;
        Self::from_masks(masks, d_val.labels())
    }

    pub fn from_masks(masks: Vec<CoverageMask>, labels: &[bool]) -> Result<Self, AssemblyError> {
        if masks.is_empty() {
            return Err(AssemblyError::EmptyPool);
        }
        let n = labels.len();
        if let Some(m) = masks.iter().find(|m| m.len() != n) {
            return Err(EvalError::LengthMismatch { left: m.len(), right: n }.into());
        }
        let positives = labels.iter().filter(|&&y| y).count() as u64;
        let negatives = n as u64 - positives;
        if positives == 0 || negatives == 0 {
            return Err(EvalError::SingleClass.into());
        }
        let label_mask = CoverageMask::from_bools(labels, masks[0].split());
        let tail = match n % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        };
        Ok(ValidationView { masks, positive_words: label_mask.words().to_vec(), tail, positives, negatives })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn mask(&self, ordinal: usize) -> &CoverageMask {
        &self.masks[ordinal]
    }

    /// Per-score positive and negative counts for the checklist made of `subset`.
    pub fn histogram(&self, subset: &[usize]) -> (Vec<u64>, Vec<u64>) {
        let m = subset.len();
        let bits = (usize::BITS - m.leading_zeros()).max(1) as usize;
        let words = self.positive_words.len();
        let mut planes = vec![vec![0u64; words]; bits];
        for &o in subset {
            for (w, &x) in self.masks[o].words().iter().enumerate() {
                let mut carry = x;
                for plane in planes.iter_mut() {
                    if carry == 0 {
                        break;
                    }
                    let p = plane[w];
                    plane[w] = p ^ carry;
                    carry &= p;
                }
            }
        }
        let mut pos = vec![0u64; m + 1];
        let mut neg = vec![0u64; m + 1];
        for w in 0..words {
            let valid = if w + 1 == words { self.tail } else { u64::MAX };
            let y = self.positive_words[w];
            for s in 0..=m {
                let mut eq = valid;
                for (b, plane) in planes.iter().enumerate() {
                    eq &= if (s >> b) & 1 == 1 { plane[w] } else { !plane[w] };
                }
                pos[s] += (eq & y).count_ones() as u64;
                neg[s] += (eq & !y).count_ones() as u64;
            }
        }
        (pos, neg)
    }

    /// Validation AUROC of the unit-weighted checklist made of `subset`.
    pub fn auroc(&self, subset: &[usize]) -> f64 {
        let (pos, neg) = self.histogram(subset);
        AucTally { twice_u: histogram_twice_u(&pos, &neg), positives: self.positives, negatives: self.negatives }.value()
    }
}
