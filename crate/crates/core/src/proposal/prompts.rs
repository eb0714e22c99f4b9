use std::collections::BTreeMap;
use std::path::Path;

use super::ProposalError;

/// The four agent templates, with `$name` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub feature_proposal: String,
    pub plausibility_review: String,
    pub score_construction: String,
    pub score_refinement: String,
}

pub const PROMPT_FILES: [&str; 4] =
    ["feature_proposal.txt", "plausibility_review.txt", "score_construction.txt", "score_refinement.txt"];

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            feature_proposal: include_str!("prompts/feature_proposal.txt").to_owned(),
            plausibility_review: include_str!("prompts/plausibility_review.txt").to_owned(),
            score_construction: include_str!("prompts/score_construction.txt").to_owned(),
            score_refinement: include_str!("prompts/score_refinement.txt").to_owned(),
        }
    }
}

impl PromptSet {
    /// Loads all four templates from `dir`; every file must exist.
    pub fn from_dir(dir: &Path) -> Result<Self, ProposalError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| ProposalError::MissingAsset(format!("{}: {e}", path.display())))
        };
        Ok(PromptSet {
            feature_proposal: read(PROMPT_FILES[0])?,
            plausibility_review: read(PROMPT_FILES[1])?,
            score_construction: read(PROMPT_FILES[2])?,
            score_refinement: read(PROMPT_FILES[3])?,
        })
    }
}

/// Substitutes `$name` placeholders; `$$` is a literal dollar sign.
///
/// A placeholder without a value is an error, as is a value never used.
pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, ProposalError> {
    let mut out = String::with_capacity(template.len());
    let mut used = std::collections::BTreeSet::new();
    let mut rest = template;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + 1..];
        if let Some(tail) = after.strip_prefix('$') {
            out.push('$');
            rest = tail;
            continue;
        }
        let len = after.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(after.len());
        let name = &after[..len];
        if name.is_empty() {
            out.push('$');
            rest = after;
            continue;
        }
        let value = vars.get(name).ok_or_else(|| ProposalError::Template(format!("no value for `${name}`")))?;
        out.push_str(value);
        used.insert(name);
        rest = &after[len..];
    }
    out.push_str(rest);
    if let Some(unused) = vars.keys().find(|k| !used.contains(*k)) {
        return Err(ProposalError::Template(format!("template has no `${unused}` placeholder")));
    }
    Ok(out)
}
