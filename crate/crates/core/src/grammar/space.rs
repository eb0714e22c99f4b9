//! Order-of-magnitude size of the grammar-induced rule universe.

use serde::Serialize;

use super::GrammarError;

/// Temporal summary variants per base rule (4 windows x 3 statistics).
pub const TEMPORAL_VARIANTS: u128 = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CardinalityReport {
    pub features: u64,
    pub thresholds: u64,
    /// `p * (2T + T^2)`: one- and two-sided thresholds plus ranges.
    pub primitive: u128,
    /// `2 * C(primitive, 2)`: pairwise AND/OR at depth 1.
    pub compositional: u128,
    /// `C(p, 2)` ratio/difference feature pairs.
    pub derived_pairs: u128,
    /// `compositional * (1 + 12) * (1 + C(p, 2))`.
    pub universe_order: u128,
}

fn overflow() -> GrammarError {
    GrammarError::InvalidParameter("rule-space size overflows 128 bits".into())
}

fn choose2(n: u128) -> Option<u128> {
    if n < 2 {
        return Some(0);
    }
    // one of n, n-1 is even
    if n % 2 == 0 {
        (n / 2).checked_mul(n - 1)
    } else {
        n.checked_mul((n - 1) / 2)
    }
}

pub fn estimate_rule_space(p: u64, t: u64) -> Result<CardinalityReport, GrammarError> {
    if p == 0 || t == 0 {
        return Err(GrammarError::InvalidParameter("feature and threshold counts must be at least 1".into()));
    }
    let (p128, t128) = (p as u128, t as u128);
    let per_feature = t128.checked_mul(t128).and_then(|sq| sq.checked_add(2 * t128)).ok_or_else(overflow)?;
    let primitive = p128.checked_mul(per_feature).ok_or_else(overflow)?;
    let compositional = choose2(primitive).and_then(|c| c.checked_mul(2)).ok_or_else(overflow)?;
    let derived_pairs = choose2(p128).ok_or_else(overflow)?;
    let universe_order = compositional
        .checked_mul(1 + TEMPORAL_VARIANTS)
        .and_then(|v| v.checked_mul(1 + derived_pairs))
        .ok_or_else(overflow)?;
    Ok(CardinalityReport { features: p, thresholds: t, primitive, compositional, derived_pairs, universe_order })
}

impl CardinalityReport {
    /// Bytes of a bit-packed `rows x rules` matrix, rounded up.
    pub fn packed_bytes(rows: u64, rules: u128) -> Option<u128> {
        (rows as u128).checked_mul(rules).map(|bits| bits.div_ceil(8))
    }

    pub fn primitive_matrix_bytes(&self, rows: u64) -> Option<u128> {
        Self::packed_bytes(rows, self.primitive)
    }

    pub fn universe_matrix_bytes(&self, rows: u64) -> Option<u128> {
        Self::packed_bytes(rows, self.universe_order)
    }

    /// Seconds to evaluate every rule in the universe once.
    pub fn time_wall_seconds(&self, seconds_per_rule: f64) -> f64 {
        self.universe_order as f64 * seconds_per_rule
    }
}

pub const SECONDS_PER_YEAR: f64 = 365.25 * 24.0 * 3600.0;
