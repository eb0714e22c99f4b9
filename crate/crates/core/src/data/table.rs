use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DataError, FeatureCatalog, FeatureKind};

/// Which partition of a fold a dataset view belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Full,
    Construction,
    Validation,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Full => "full",
            SplitTag::Construction => "construction",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        })
    }
}

/// One feature column; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    /// Codes index into `levels`.
    Categorical { codes: Vec<Option<u32>>, levels: Vec<String> },
    Binary(Vec<Option<bool>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
            Column::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Column::Numeric(_) => FeatureKind::Numeric,
            Column::Categorical { .. } => FeatureKind::Categorical,
            Column::Binary(_) => FeatureKind::Binary,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none(),
            Column::Categorical { codes, .. } => codes[row].is_none(),
            Column::Binary(v) => v[row].is_none(),
        }
    }

    /// Builds a categorical column, assigning codes in order of first appearance.
    pub fn categorical_from<S: AsRef<str>>(cells: &[Option<S>]) -> Column {
        let mut levels: Vec<String> = Vec::new();
        let mut lookup: HashMap<String, u32> = HashMap::new();
        let codes = cells
            .iter()
            .map(|c| {
                c.as_ref().map(|s| {
                    let s = s.as_ref();
                    *lookup.entry(s.to_owned()).or_insert_with(|| {
                        levels.push(s.to_owned());
                        (levels.len() - 1) as u32
                    })
                })
            })
            .collect();
        Column::Categorical { codes, levels }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical { codes, levels } => Column::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                levels: levels.clone(),
            },
            Column::Binary(v) => Column::Binary(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Column-major outcome table aligned with a [`FeatureCatalog`].
///
/// Every view carries a [`SplitTag`] and a read counter so callers can prove
/// which partitions an operation touched.
#[derive(Debug, Clone)]
pub struct Dataset {
    catalog: Arc<FeatureCatalog>,
    columns: Vec<Column>,
    labels: Vec<bool>,
    groups: Vec<String>,
    split: SplitTag,
    reads: Arc<AtomicUsize>,
}

impl Dataset {
    pub fn new(
        catalog: Arc<FeatureCatalog>,
        columns: Vec<Column>,
        labels: Vec<bool>,
        groups: Vec<String>,
    ) -> Result<Self, DataError> {
        if columns.len() != catalog.len() {
            return Err(DataError::SchemaMismatch(format!(
                "{} columns for {} catalog features",
                columns.len(),
                catalog.len()
            )));
        }
        let n = labels.len();
        if groups.len() != n {
            return Err(DataError::LengthMismatch(format!("{} group ids for {n} labels", groups.len())));
        }
        for (spec, col) in catalog.iter().zip(&columns) {
            if col.kind() != spec.kind {
                return Err(DataError::SchemaMismatch(format!(
                    "column `{}` is {} but the schema says {}",
                    spec.name,
                    col.kind(),
                    spec.kind
                )));
            }
            if col.len() != n {
                return Err(DataError::LengthMismatch(format!("column `{}` has {} rows, expected {n}", spec.name, col.len())));
            }
        }
        Ok(Dataset { catalog, columns, labels, groups, split: SplitTag::Full, reads: Arc::new(AtomicUsize::new(0)) })
    }

    pub fn catalog(&self) -> &FeatureCatalog {
        &self.catalog
    }

    pub fn catalog_arc(&self) -> Arc<FeatureCatalog> {
        Arc::clone(&self.catalog)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.catalog.position(name).map(|i| &self.columns[i])
    }

    pub fn numeric(&self, name: &str) -> Option<&[Option<f64>]> {
        match self.column(name)? {
            Column::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn binary(&self, name: &str) -> Option<&[Option<bool>]> {
        match self.column(name)? {
            Column::Binary(v) => Some(v),
            _ => None,
        }
    }

    /// Rows `rows` (in the given order) as a new view with its own read counter.
    pub fn subset(&self, rows: &[usize], split: SplitTag) -> Dataset {
        Dataset {
            catalog: Arc::clone(&self.catalog),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            groups: rows.iter().map(|&r| self.groups[r].clone()).collect(),
            split,
            reads: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn with_split(mut self, split: SplitTag) -> Dataset {
        self.split = split;
        self
    }

    pub fn expect_split(&self, expected: SplitTag) -> Result<(), DataError> {
        if self.split == expected {
            Ok(())
        } else {
            Err(DataError::WrongSplit { expected, found: self.split })
        }
    }

    /// Records one top-level read of row data (rule or checklist evaluation).
    pub fn mark_read(&self) {
        self.reads.fetch_add(1, Ordering::Relaxed);
    }

    pub fn read_count(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    /// Sum of the non-missing values of a numeric column, in row order.
    pub fn numeric_sum(&self, name: &str) -> Option<f64> {
        self.numeric(name).map(|v| v.iter().flatten().sum())
    }
}

/// Column names and missing-value sentinels for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableOptions {
    pub label_column: String,
    /// Rows without a group column are their own group.
    pub group_column: Option<String>,
    pub missing: Vec<String>,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            label_column: "label".into(),
            group_column: Some("group_id".into()),
            missing: vec![String::new(), "NA".into()],
        }
    }
}

impl TableOptions {
    fn is_missing(&self, cell: &str) -> bool {
        let cell = cell.trim();
        self.missing.iter().any(|m| m == cell)
    }
}

fn parse_binary(cell: &str) -> Option<bool> {
    match cell.trim() {
        "1" | "1.0" | "true" | "TRUE" | "True" => Some(true),
        "0" | "0.0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Reads a CSV with a header row into a [`Dataset`].
///
/// The header must contain exactly the catalog features plus the label column
/// (and the group column when configured); row order is preserved.
pub fn load_table(path: &Path, catalog: &FeatureCatalog, opts: &TableOptions) -> Result<Dataset, DataError> {
    let unreadable = |e: &dyn fmt::Display| DataError::FileUnreadable(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| unreadable(&e))?;
    let headers = reader.headers().map_err(|e| unreadable(&e))?.clone();

    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if position.insert(h, i).is_some() {
            return Err(DataError::SchemaMismatch(format!("duplicate header `{h}`")));
        }
    }
    let label_idx = *position
        .get(opts.label_column.as_str())
        .ok_or_else(|| DataError::SchemaMismatch(format!("label column `{}` not found", opts.label_column)))?;
    let group_idx = match &opts.group_column {
        Some(g) => Some(
            *position
                .get(g.as_str())
                .ok_or_else(|| DataError::SchemaMismatch(format!("group column `{g}` not found")))?,
        ),
        None => None,
    };
    let mut feature_idx = Vec::with_capacity(catalog.len());
    for spec in catalog.iter() {
        let idx = *position
            .get(spec.name.as_str())
            .ok_or_else(|| DataError::SchemaMismatch(format!("feature `{}` missing from header", spec.name)))?;
        feature_idx.push(idx);
    }
    for h in headers.iter() {
        let known = catalog.contains(h) || h == opts.label_column || opts.group_column.as_deref() == Some(h);
        if !known {
            return Err(DataError::SchemaMismatch(format!("header `{h}` is not in the schema")));
        }
    }

    let mut numeric: Vec<Vec<Option<f64>>> = vec![Vec::new(); catalog.len()];
    let mut categorical: Vec<Vec<Option<String>>> = vec![Vec::new(); catalog.len()];
    let mut binary: Vec<Vec<Option<bool>>> = vec![Vec::new(); catalog.len()];
    let mut labels = Vec::new();
    let mut groups = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| unreadable(&e))?;
        let label_cell = record.get(label_idx).unwrap_or("").trim();
        let label = match label_cell {
            "1" | "1.0" => true,
            "0" | "0.0" => false,
            other => return Err(DataError::NonBinaryLabel { row, value: other.to_owned() }),
        };
        labels.push(label);
        groups.push(match group_idx {
            Some(g) => record.get(g).unwrap_or("").trim().to_owned(),
            None => row.to_string(),
        });
        for (f, (spec, &idx)) in catalog.iter().zip(&feature_idx).enumerate() {
            let cell = record.get(idx).unwrap_or("");
            let missing = opts.is_missing(cell);
            match spec.kind {
                FeatureKind::Numeric => {
                    let v = if missing {
                        None
                    } else {
                        let x: f64 = cell.trim().parse().map_err(|_| {
                            DataError::SchemaMismatch(format!("row {row}: `{cell}` is not numeric for `{}`", spec.name))
                        })?;
                        if !x.is_finite() {
                            return Err(DataError::SchemaMismatch(format!("row {row}: non-finite value for `{}`", spec.name)));
                        }
                        Some(x)
                    };
                    numeric[f].push(v);
                }
                FeatureKind::Categorical => {
                    categorical[f].push(if missing { None } else { Some(cell.trim().to_owned()) });
                }
                FeatureKind::Binary => {
                    let v = if missing {
                        None
                    } else {
                        Some(parse_binary(cell).ok_or_else(|| {
                            DataError::SchemaMismatch(format!("row {row}: `{cell}` is not binary for `{}`", spec.name))
                        })?)
                    };
                    binary[f].push(v);
                }
            }
        }
    }

    let columns = catalog
        .iter()
        .enumerate()
        .map(|(f, spec)| match spec.kind {
            FeatureKind::Numeric => Column::Numeric(std::mem::take(&mut numeric[f])),
            FeatureKind::Categorical => Column::categorical_from(&categorical[f]),
            FeatureKind::Binary => Column::Binary(std::mem::take(&mut binary[f])),
        })
        .collect();
    Dataset::new(Arc::new(catalog.clone()), columns, labels, groups)
}

/// Writes a dataset in the layout [`load_table`] reads.
pub fn write_table(path: &Path, data: &Dataset, opts: &TableOptions) -> Result<(), DataError> {
    let fail = |e: &dyn fmt::Display| DataError::FileUnreadable(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(|e| fail(&e))?;
    let missing = opts.missing.first().cloned().unwrap_or_default();
    let mut header: Vec<String> = Vec::new();
    if let Some(g) = &opts.group_column {
        header.push(g.clone());
    }
    header.extend(data.catalog().iter().map(|f| f.name.clone()));
    header.push(opts.label_column.clone());
    w.write_record(&header).map_err(|e| fail(&e))?;

    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for row in 0..data.n_rows() {
        record.clear();
        if opts.group_column.is_some() {
            record.push(data.groups[row].clone());
        }
        for col in &data.columns {
            record.push(match col {
                Column::Numeric(v) => v[row].map(|x| format!("{x}")).unwrap_or_else(|| missing.clone()),
                Column::Categorical { codes, levels } => {
                    codes[row].map(|c| levels[c as usize].clone()).unwrap_or_else(|| missing.clone())
                }
                Column::Binary(v) => v[row].map(|b| if b { "1".into() } else { "0".into() }).unwrap_or_else(|| missing.clone()),
            });
        }
        record.push(if data.labels[row] { "1".into() } else { "0".into() });
        w.write_record(&record).map_err(|e| fail(&e))?;
    }
    w.flush().map_err(|e| fail(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;
    use std::io::Write;

    fn catalog() -> FeatureCatalog {
        FeatureCatalog::new(vec![
            FeatureSpec::numeric("bun"),
            FeatureSpec::categorical("adm"),
            FeatureSpec::binary("vent"),
        ])
        .unwrap()
    }

    fn write_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn four_rows_one_empty_cell() {
        let f = write_csv("group_id,bun,adm,vent,label\ng1,10,er,1,0\ng2,,er,0,1\ng3,30,elective,0,0\ng4,NA,elective,1,1\n");
        let d = load_table(f.path(), &catalog(), &TableOptions::default()).unwrap();
        assert_eq!(d.n_rows(), 4);
        let bun = d.numeric("bun").unwrap();
        assert_eq!(bun, &[Some(10.0), None, Some(30.0), None]);
        assert_eq!(d.labels(), &[false, true, false, true]);
        assert_eq!(d.groups()[2], "g3");
    }

    #[test]
    fn single_empty_cell_is_the_only_missing_one() {
        let f = write_csv("group_id,bun,adm,vent,label\na,1,x,1,0\nb,2,,0,1\nc,3,y,0,0\nd,4,x,1,1\n");
        let d = load_table(f.path(), &catalog(), &TableOptions::default()).unwrap();
        let missing: usize = d
            .columns()
            .iter()
            .map(|c| (0..d.n_rows()).filter(|&r| c.is_missing(r)).count())
            .sum();
        assert_eq!(missing, 1);
        assert!(d.column("adm").unwrap().is_missing(1));
    }

    #[test]
    fn non_binary_label() {
        let f = write_csv("group_id,bun,adm,vent,label\na,1,x,1,2\n");
        let err = load_table(f.path(), &catalog(), &TableOptions::default()).unwrap_err();
        assert_eq!(err, DataError::NonBinaryLabel { row: 0, value: "2".into() });
    }

    #[test]
    fn schema_mismatch_and_unreadable() {
        let f = write_csv("group_id,bun,adm,label\na,1,x,1\n");
        assert!(matches!(load_table(f.path(), &catalog(), &TableOptions::default()), Err(DataError::SchemaMismatch(_))));
        let f = write_csv("group_id,bun,adm,vent,extra,label\na,1,x,1,5,1\n");
        assert!(matches!(load_table(f.path(), &catalog(), &TableOptions::default()), Err(DataError::SchemaMismatch(_))));
        let err = load_table(Path::new("/nonexistent/file.csv"), &catalog(), &TableOptions::default()).unwrap_err();
        assert!(matches!(err, DataError::FileUnreadable(_)));
    }

    #[test]
    fn write_then_load_preserves_cells() {
        let f = write_csv("group_id,bun,adm,vent,label\na,1.25,x,1,0\nb,,NA,,1\nc,3e-5,y,0,0\n");
        let opts = TableOptions::default();
        let d = load_table(f.path(), &catalog(), &opts).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_table(out.path(), &d, &opts).unwrap();
        let back = load_table(out.path(), &catalog(), &opts).unwrap();
        assert_eq!(back.columns(), d.columns());
        assert_eq!(back.labels(), d.labels());
    }

    #[test]
    fn subset_carries_split_tag_and_fresh_counter() {
        let f = write_csv("group_id,bun,adm,vent,label\na,1,x,1,0\nb,2,y,0,1\n");
        let d = load_table(f.path(), &catalog(), &TableOptions::default()).unwrap();
        d.mark_read();
        let s = d.subset(&[1], SplitTag::Test);
        assert_eq!(s.split(), SplitTag::Test);
        assert_eq!(s.read_count(), 0);
        assert_eq!(s.labels(), &[true]);
        assert!(s.expect_split(SplitTag::Validation).is_err());
    }
}
