use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::SplitTag;
use crate::par::{self, ExecMode};

const WORD: usize = 64;

/// Packed bit vector recording the rows a rule fires on.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CoverageMask {
    words: Vec<u64>,
    len: usize,
    count: usize,
    split: SplitTag,
}

impl fmt::Debug for CoverageMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoverageMask({} of {} on {})", self.count, self.len, self.split)
    }
}

fn words_for(len: usize) -> usize {
    len.div_ceil(WORD)
}

impl CoverageMask {
    pub fn zeros(len: usize, split: SplitTag) -> Self {
        CoverageMask { words: vec![0; words_for(len)], len, count: 0, split }
    }

    pub fn from_bools(bits: &[bool], split: SplitTag) -> Self {
        Self::from_fn(bits.len(), split, ExecMode::Sequential, |i| bits[i])
    }

    /// Builds a mask with bit `i = f(i)`, one 64-row word per task.
    pub fn from_fn<F>(len: usize, split: SplitTag, mode: ExecMode, f: F) -> Self
    where
        F: Fn(usize) -> bool + Sync + Send,
    {
        let mut words = vec![0u64; words_for(len)];
        par::fill(mode, &mut words, |w| {
            let start = w * WORD;
            let end = (start + WORD).min(len);
            let mut word = 0u64;
            for i in start..end {
                if f(i) {
                    word |= 1 << (i - start);
                }
            }
            word
        });
        Self::from_words(words, len, split)
    }

    fn from_words(words: Vec<u64>, len: usize, split: SplitTag) -> Self {
        let count = words.iter().map(|w| w.count_ones() as usize).sum();
        CoverageMask { words, len, count, split }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of set bits (cached).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for mask of length {}", self.len);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * WORD + bit)
            })
        })
    }

    fn check(&self, other: &CoverageMask) -> Result<(), EvalError> {
        if self.len != other.len {
            return Err(EvalError::LengthMismatch { left: self.len, right: other.len });
        }
        if self.split != other.split {
            return Err(EvalError::SplitMismatch { left: self.split, right: other.split });
        }
        Ok(())
    }

    fn zip_with(&self, other: &CoverageMask, f: impl Fn(u64, u64) -> u64) -> Result<CoverageMask, EvalError> {
        self.check(other)?;
        let words = self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_words(words, self.len, self.split))
    }

    pub fn and(&self, other: &CoverageMask) -> Result<CoverageMask, EvalError> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &CoverageMask) -> Result<CoverageMask, EvalError> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection_count(&self, other: &CoverageMask) -> Result<usize, EvalError> {
        self.check(other)?;
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum())
    }

    /// Plain Jaccard index; an empty union gives 1.0.
    pub fn jaccard(&self, other: &CoverageMask) -> Result<f64, EvalError> {
        let inter = self.intersection_count(other)?;
        let union = self.count + other.count - inter;
        Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
    }

    /// Restriction to positive rows: bit `i` survives only when `labels[i]`.
    pub fn restrict(&self, labels: &LabelMask) -> Result<CoverageMask, EvalError> {
        self.and(&labels.0)
    }

    pub fn to_hex(&self) -> String {
        let mut bytes = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        bytes.truncate(self.len.div_ceil(8));
        hex::encode(bytes)
    }

    pub fn from_hex(text: &str, len: usize, split: SplitTag) -> Result<CoverageMask, EvalError> {
        let bytes = hex::decode(text).map_err(|e| EvalError::InvalidInput(format!("mask hex: {e}")))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(EvalError::InvalidInput(format!("mask hex has {} bytes for {len} rows", bytes.len())));
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, b) in bytes.iter().enumerate() {
            words[i / 8] |= (*b as u64) << (8 * (i % 8));
        }
        if let Some(last) = words.last() {
            let tail = len % WORD;
            if tail != 0 && last >> tail != 0 {
                return Err(EvalError::InvalidInput("mask hex sets bits past the row count".into()));
            }
        }
        Ok(Self::from_words(words, len, split))
    }
}

/// Outcome labels packed as a mask, for positive-class restriction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask(pub CoverageMask);

impl LabelMask {
    pub fn new(labels: &[bool], split: SplitTag) -> Self {
        LabelMask(CoverageMask::from_bools(labels, split))
    }

    pub fn positives(&self) -> usize {
        self.0.count()
    }

    pub fn negatives(&self) -> usize {
        self.0.len() - self.0.count()
    }
}

/// Serializable form used in snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub len: usize,
    pub split: SplitTag,
    pub hex: String,
}

impl From<&CoverageMask> for MaskRecord {
    fn from(m: &CoverageMask) -> Self {
        MaskRecord { len: m.len, split: m.split, hex: m.to_hex() }
    }
}

impl TryFrom<&MaskRecord> for CoverageMask {
    type Error = EvalError;

    fn try_from(r: &MaskRecord) -> Result<Self, EvalError> {
        CoverageMask::from_hex(&r.hex, r.len, r.split)
    }
}
