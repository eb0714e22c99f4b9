//! The run configuration file and command-line overrides.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use checklist_core::data::{
    derive_temporal, load_measurements, load_table, Dataset, FeatureCatalog, SplitTag, TableOptions, WindowSpec,
};
use checklist_core::pool::PipelineConfig;

use crate::error::CliError;

pub const DEFAULT_TOKEN_ENV: &str = "CHECKLIST_API_TOKEN";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<String>,
    pub output: Option<PathBuf>,
    pub data: Option<DataSection>,
    pub pipeline: PipelineConfig,
    pub remote: Option<RemoteSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub table: PathBuf,
    pub schema: PathBuf,
    #[serde(default = "default_label")]
    pub label_column: String,
    #[serde(default = "default_group")]
    pub group_column: Option<String>,
    pub missing: Option<Vec<String>>,
    /// Long-format `group,variable,time,value` file summarised into extra columns.
    pub measurements: Option<PathBuf>,
    #[serde(default)]
    pub index_time: f64,
    /// Two-column `group,time` file of per-group index times.
    pub index_times: Option<PathBuf>,
    pub lookback: Option<f64>,
}

fn default_label() -> String {
    "label".into()
}

fn default_group() -> Option<String> {
    Some("group_id".into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSection {
    pub url: String,
    pub model: String,
    pub token_env: String,
    pub timeout_secs: u64,
    pub max_tokens: Option<u32>,
    pub system: Option<String>,
    pub prompts_dir: Option<PathBuf>,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RemoteSection {
    fn default() -> Self {
        RemoteSection {
            url: String::new(),
            model: String::new(),
            token_env: DEFAULT_TOKEN_ENV.into(),
            timeout_secs: 120,
            max_tokens: Some(2048),
            system: None,
            prompts_dir: None,
            max_attempts: 4,
            base_delay_ms: 500,
            max_delay_ms: 8000,
        }
    }
}

impl FileConfig {
    /// Reads a TOML file; relative paths inside it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.data {
            fix(&mut d.table);
            fix(&mut d.schema);
            d.measurements.as_mut().map(fix);
            d.index_times.as_mut().map(fix);
        }
        if let Some(r) = &mut self.remote {
            r.prompts_dir.as_mut().map(fix);
        }
        self.output.as_mut().map(fix);
    }

    pub fn task(&self) -> String {
        self.task.clone().unwrap_or_else(|| "predict the binary outcome".into())
    }
}

/// Applies `key=value` overrides to the pipeline section. Values are read as
/// JSON where possible and as plain strings otherwise.
pub fn apply_overrides(cfg: &PipelineConfig, sets: &[String]) -> Result<PipelineConfig, CliError> {
    if sets.is_empty() {
        return Ok(cfg.clone());
    }
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    let map = v.as_object_mut().expect("config is an object");
    for s in sets {
        let (key, raw) = s.split_once('=').ok_or_else(|| CliError::Config(format!("override `{s}` is not key=value")))?;
        let key = key.trim();
        if !map.contains_key(key) {
            return Err(CliError::Config(format!("unknown pipeline key `{key}`")));
        }
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_owned()));
        map.insert(key.to_owned(), value);
    }
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("override: {e}")))
}

pub fn load_dataset(d: &DataSection) -> Result<Dataset, CliError> {
    let catalog = FeatureCatalog::from_json_file(&d.schema).map_err(|e| CliError::Data(e.to_string()))?;
    let mut opts = TableOptions { label_column: d.label_column.clone(), group_column: d.group_column.clone(), ..Default::default() };
    if let Some(m) = &d.missing {
        opts.missing = m.clone();
    }
    let data = load_table(&d.table, &catalog, &opts).map_err(|e| CliError::Data(e.to_string()))?;
    let Some(path) = &d.measurements else {
        return Ok(data.with_split(SplitTag::Full));
    };
    let series = load_measurements(path).map_err(|e| CliError::Data(e.to_string()))?;
    let window = WindowSpec {
        default_index_time: d.index_time,
        index_times: match &d.index_times {
            Some(p) => read_index_times(p)?,
            None => HashMap::new(),
        },
        lookback: d.lookback,
    };
    let derived = derive_temporal(&series, &window, data.groups()).map_err(|e| CliError::Data(e.to_string()))?;
    let mut specs: Vec<_> = data.catalog().iter().cloned().collect();
    let mut columns = data.columns().to_vec();
    for (spec, col) in derived {
        specs.push(spec);
        columns.push(col);
    }
    let catalog = FeatureCatalog::new(specs).map_err(|e| CliError::Data(e.to_string()))?;
    Dataset::new(Arc::new(catalog), columns, data.labels().to_vec(), data.groups().to_vec())
        .map(|d| d.with_split(SplitTag::Full))
        .map_err(|e| CliError::Data(e.to_string()))
}

fn read_index_times(path: &Path) -> Result<HashMap<String, f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::Data(format!("{} line {}: expected group,time", path.display(), i + 1));
        let (g, t) = line.split_once(',').ok_or_else(bad)?;
        out.insert(g.trim().to_owned(), t.trim().parse().map_err(|_| bad())?);
    }
    Ok(out)
}
