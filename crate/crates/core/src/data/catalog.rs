use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    Binary,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Numeric => "numeric",
            FeatureKind::Categorical => "categorical",
            FeatureKind::Binary => "binary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        FeatureSpec { name: name.into(), kind, unit: None, description: None }
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Numeric)
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Categorical)
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Binary)
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }
}

/// Names and kinds of the features a run may reference.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCatalog {
    features: Vec<FeatureSpec>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    features: Vec<FeatureSpec>,
}

impl FeatureCatalog {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if f.name.is_empty() {
                return Err(DataError::SchemaMismatch("empty feature name".into()));
            }
            if index.insert(f.name.clone(), i).is_some() {
                return Err(DataError::SchemaMismatch(format!("duplicate feature `{}`", f.name)));
            }
        }
        Ok(FeatureCatalog { features, index })
    }

    /// Reads a schema file of the form `{"features": [{"name", "kind", "unit"?}]}`.
    pub fn from_json_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DataError::FileUnreadable(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: SchemaFile =
            serde_json::from_str(text).map_err(|e| DataError::SchemaMismatch(format!("schema file: {e}")))?;
        Self::new(schema.features)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SchemaFile { features: self.features.clone() }).expect("schema serializes")
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.features.iter()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.position(name).map(|i| &self.features[i])
    }

    pub fn kind(&self, name: &str) -> Option<FeatureKind> {
        self.get(name).map(|f| f.kind)
    }

    pub fn names_of(&self, kind: FeatureKind) -> impl Iterator<Item = &str> {
        self.features.iter().filter(move |f| f.kind == kind).map(|f| f.name.as_str())
    }
}
