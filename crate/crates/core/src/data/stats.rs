use std::collections::BTreeMap;

use serde::Serialize;

use super::{Column, DataError, Dataset, FeatureKind, SplitTag};

/// Quantile levels exposed to proposers: 0.05, 0.10, ..., 0.95.
pub const QUANTILE_GRID: [f64; 19] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericStats {
    pub count: usize,
    pub missing_rate: f64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
    pub std: f64,
    /// Values at [`QUANTILE_GRID`].
    pub grid: Vec<f64>,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl NumericStats {
    pub fn from_values(values: &[Option<f64>]) -> Option<NumericStats> {
        let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
        if sorted.is_empty() {
            return None;
        }
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let mut stats = NumericStats {
            count: n,
            missing_rate: (values.len() - n) as f64 / values.len() as f64,
            mean,
            std,
            grid: Vec::new(),
            sorted,
        };
        stats.grid = QUANTILE_GRID.iter().map(|&q| stats.quantile(q)).collect();
        Some(stats)
    }

    /// Linear interpolation between order statistics: with `h = (n - 1) q`,
    /// `Q(q) = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let h = (self.sorted.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        match self.sorted.get(lo + 1) {
            Some(&hi) if frac > 0.0 => self.sorted[lo] + frac * (hi - self.sorted[lo]),
            _ => self.sorted[lo],
        }
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoricalStats {
    pub missing_rate: f64,
    pub frequencies: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryStats {
    pub missing_rate: f64,
    pub true_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureStat {
    Numeric(NumericStats),
    Categorical(CategoricalStats),
    Binary(BinaryStats),
    /// Every cell was missing on the fitting split.
    AllMissing,
}

/// Per-feature statistics frozen on the split they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureStats {
    pub split: SplitTag,
    pub rows: usize,
    pub features: BTreeMap<String, FeatureStat>,
    /// Features flagged unusable for z-score and quantile rules.
    pub unusable: Vec<String>,
}

impl FeatureStats {
    pub fn get(&self, name: &str) -> Option<&FeatureStat> {
        self.features.get(name)
    }

    pub fn numeric(&self, name: &str) -> Option<&NumericStats> {
        match self.features.get(name)? {
            FeatureStat::Numeric(s) => Some(s),
            _ => None,
        }
    }
}

fn missing_rate(missing: usize, n: usize) -> f64 {
    missing as f64 / n as f64
}

/// Fits statistics over the non-missing cells of a construction (or full) split.
pub fn fit_feature_stats(data: &Dataset) -> Result<FeatureStats, DataError> {
    match data.split() {
        SplitTag::Construction | SplitTag::Full => {}
        other => return Err(DataError::WrongSplit { expected: SplitTag::Construction, found: other }),
    }
    let n = data.n_rows();
    if n == 0 {
        return Err(DataError::EmptySplit(data.split()));
    }
    let mut features = BTreeMap::new();
    let mut unusable = Vec::new();
    for (spec, col) in data.catalog().iter().zip(data.columns()) {
        let stat = match col {
            Column::Numeric(v) => match NumericStats::from_values(v) {
                Some(s) => FeatureStat::Numeric(s),
                None => FeatureStat::AllMissing,
            },
            Column::Categorical { codes, levels } => {
                let mut frequencies = BTreeMap::new();
                let mut missing = 0;
                for c in codes {
                    match c {
                        Some(c) => *frequencies.entry(levels[*c as usize].clone()).or_insert(0) += 1,
                        None => missing += 1,
                    }
                }
                if missing == n {
                    FeatureStat::AllMissing
                } else {
                    FeatureStat::Categorical(CategoricalStats { missing_rate: missing_rate(missing, n), frequencies })
                }
            }
            Column::Binary(v) => {
                let present: Vec<bool> = v.iter().flatten().copied().collect();
                if present.is_empty() {
                    FeatureStat::AllMissing
                } else {
                    let trues = present.iter().filter(|&&b| b).count();
                    FeatureStat::Binary(BinaryStats {
                        missing_rate: missing_rate(n - present.len(), n),
                        true_rate: Some(trues as f64 / present.len() as f64),
                    })
                }
            }
        };
        if matches!(stat, FeatureStat::AllMissing) && spec.kind == FeatureKind::Numeric {
            unusable.push(spec.name.clone());
        }
        features.insert(spec.name.clone(), stat);
    }
    Ok(FeatureStats { split: data.split(), rows: n, features, unusable })
}
