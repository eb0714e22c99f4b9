//! Fixed summaries of longitudinal measurements.
//!
//! Each base variable becomes seven numeric columns named `{var}__{stat}`.
//! Only measurements strictly before the prediction index time (and inside
//! the optional lookback window) contribute.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::{Column, DataError, FeatureSpec};

pub const TEMPORAL_STATS: [&str; 7] = ["first", "last", "min", "max", "delta", "pct", "range"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub group: String,
    pub variable: String,
    pub points: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    /// Index time used for groups absent from `index_times`.
    pub default_index_time: f64,
    pub index_times: HashMap<String, f64>,
    /// Only points with `index - lookback <= time` are used.
    pub lookback: Option<f64>,
}

impl WindowSpec {
    pub fn fixed(index_time: f64) -> Self {
        WindowSpec { default_index_time: index_time, index_times: HashMap::new(), lookback: None }
    }

    pub fn with_lookback(mut self, lookback: f64) -> Self {
        self.lookback = Some(lookback);
        self
    }

    fn index_for(&self, group: &str) -> f64 {
        self.index_times.get(group).copied().unwrap_or(self.default_index_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TemporalSummary {
    pub first: Option<f64>,
    pub last: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// `last - first`
    pub delta: Option<f64>,
    /// `(last - first) / first`, as a fraction
    pub pct: Option<f64>,
    /// `max - min`
    pub range: Option<f64>,
}

impl TemporalSummary {
    fn get(&self, stat: &str) -> Option<f64> {
        match stat {
            "first" => self.first,
            "last" => self.last,
            "min" => self.min,
            "max" => self.max,
            "delta" => self.delta,
            "pct" => self.pct,
            "range" => self.range,
            _ => None,
        }
    }
}

/// Summarises one series. Points must already be in strictly increasing time order.
pub fn summarize_series(points: &[Measurement], index_time: f64, lookback: Option<f64>) -> TemporalSummary {
    let start = lookback.map(|l| index_time - l).unwrap_or(f64::NEG_INFINITY);
    let used: Vec<f64> = points
        .iter()
        .filter(|m| m.time < index_time && m.time >= start && m.value.is_finite())
        .map(|m| m.value)
        .collect();
    let (Some(&first), Some(&last)) = (used.first(), used.last()) else {
        return TemporalSummary::default();
    };
    let min = used.iter().copied().fold(f64::INFINITY, f64::min);
    let max = used.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = TemporalSummary { first: Some(first), last: Some(last), min: Some(min), max: Some(max), ..Default::default() };
    if used.len() >= 2 {
        s.delta = Some(last - first);
        s.range = Some(max - min);
        s.pct = (first != 0.0).then(|| (last - first) / first);
    }
    s
}

/// Materialises temporal summary columns aligned with `row_groups`.
///
/// Rows whose group has no usable measurements get missing cells. Columns
/// are ordered by variable name, then by [`TEMPORAL_STATS`].
pub fn derive_temporal(
    series: &[Series],
    window: &WindowSpec,
    row_groups: &[String],
) -> Result<Vec<(FeatureSpec, Column)>, DataError> {
    let mut by_var: BTreeMap<&str, HashMap<&str, TemporalSummary>> = BTreeMap::new();
    for s in series {
        if s.points.windows(2).any(|w| !(w[0].time < w[1].time)) {
            return Err(DataError::NonMonotoneTimestamps { group: s.group.clone(), variable: s.variable.clone() });
        }
        let summary = summarize_series(&s.points, window.index_for(&s.group), window.lookback);
        if by_var.entry(&s.variable).or_default().insert(&s.group, summary).is_some() {
            return Err(DataError::SchemaMismatch(format!(
                "variable `{}` listed twice for group `{}`",
                s.variable, s.group
            )));
        }
    }
    let mut out = Vec::with_capacity(by_var.len() * TEMPORAL_STATS.len());
    for (var, per_group) in &by_var {
        for stat in TEMPORAL_STATS {
            let values = row_groups
                .iter()
                .map(|g| per_group.get(g.as_str()).and_then(|s| s.get(stat)))
                .collect();
            out.push((FeatureSpec::numeric(format!("{var}__{stat}")), Column::Numeric(values)));
        }
    }
    Ok(out)
}

/// Reads long-format measurements (`group,variable,time,value`).
///
/// Rows for one (group, variable) pair keep file order, so out-of-order
/// timestamps surface as [`DataError::NonMonotoneTimestamps`] downstream.
pub fn load_measurements(path: &Path) -> Result<Vec<Series>, DataError> {
    let unreadable = |e: &dyn std::fmt::Display| DataError::FileUnreadable(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| unreadable(&e))?;
    let headers = reader.headers().map_err(|e| unreadable(&e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::SchemaMismatch(format!("measurement file lacks `{name}`")))
    };
    let (gi, vi, ti, xi) = (col("group")?, col("variable")?, col("time")?, col("value")?);
    let mut order: Vec<(String, String)> = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut points: HashMap<(String, String), Vec<Measurement>> = HashMap::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| unreadable(&e))?;
        let num = |i: usize| -> Result<f64, DataError> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|_| DataError::SchemaMismatch(format!("measurement row {row} is not numeric")))
        };
        let key = (rec.get(gi).unwrap_or("").to_owned(), rec.get(vi).unwrap_or("").to_owned());
        let m = Measurement { time: num(ti)?, value: num(xi)? };
        if seen.insert(key.clone()) {
            order.push(key.clone());
        }
        points.entry(key).or_default().push(m);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let pts = points.remove(&key).unwrap_or_default();
            Series { group: key.0, variable: key.1, points: pts }
        })
        .collect())
}
