use std::collections::BTreeSet;

use serde_json::{Map, Value};

use super::{CmpOp, DerivedExpr, DerivedOp, Direction, GrammarError, LogicOp, Rule};
use crate::data::{FeatureCatalog, FeatureKind};

type Result<T> = std::result::Result<T, GrammarError>;

/// Parses one line of rule-schema JSON and checks it against the catalog.
///
/// Rejection is strict: unknown keys, wrong JSON types, unknown features,
/// kind mismatches, out-of-range parameters and logical nesting deeper than
/// `max_depth` are all errors. Nothing is repaired.
pub fn parse_rule(text: &str, catalog: &FeatureCatalog, max_depth: usize) -> Result<Rule> {
    let value: Value = serde_json::from_str(text.trim()).map_err(|e| GrammarError::MalformedSyntax(e.to_string()))?;
    parse_rule_value(&value, catalog, max_depth)
}

/// [`parse_rule`] for an already decoded JSON value.
pub fn parse_rule_value(value: &Value, catalog: &FeatureCatalog, max_depth: usize) -> Result<Rule> {
    let rule = from_value(value, catalog)?;
    rule.validate_structure(max_depth)?;
    check_catalog(&rule, catalog)?;
    Ok(rule)
}

fn malformed(msg: impl Into<String>) -> GrammarError {
    GrammarError::MalformedSyntax(msg.into())
}

struct Fields<'a> {
    kind: &'a str,
    map: &'a Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn expect_keys(&self, keys: &[&str]) -> Result<()> {
        for k in self.map.keys() {
            if k != "type" && !keys.contains(&k.as_str()) {
                return Err(malformed(format!("unexpected key `{k}` in {}", self.kind)));
            }
        }
        for k in keys {
            if !self.map.contains_key(*k) {
                return Err(malformed(format!("{} is missing `{k}`", self.kind)));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> &'a Value {
        &self.map[key]
    }

    fn string(&self, key: &str) -> Result<String> {
        match self.get(key) {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            _ => Err(malformed(format!("`{key}` must be a non-empty string"))),
        }
    }

    fn number(&self, key: &str) -> Result<f64> {
        self.get(key)
            .as_f64()
            .ok_or_else(|| malformed(format!("`{key}` must be a number")))
    }

    fn op(&self) -> Result<CmpOp> {
        match self.get("op") {
            Value::String(s) => CmpOp::from_symbol(s).ok_or_else(|| malformed(format!("unknown comparison `{s}`"))),
            _ => Err(malformed("`op` must be a string")),
        }
    }

    fn string_list(&self, key: &str) -> Result<Vec<String>> {
        let items = self
            .get(key)
            .as_array()
            .ok_or_else(|| malformed(format!("`{key}` must be an array")))?;
        items
            .iter()
            .map(|v| match v {
                Value::String(s) if !s.is_empty() => Ok(s.clone()),
                _ => Err(malformed(format!("`{key}` entries must be non-empty strings"))),
            })
            .collect()
    }
}

fn from_value(value: &Value, catalog: &FeatureCatalog) -> Result<Rule> {
    let map = value.as_object().ok_or_else(|| malformed("rule must be a JSON object"))?;
    let kind = map
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("rule is missing a string `type`"))?;
    let f = Fields { kind, map };
    match kind {
        "numeric_threshold" => {
            f.expect_keys(&["feature", "op", "threshold"])?;
            Ok(Rule::NumericThreshold { feature: f.string("feature")?, op: f.op()?, threshold: f.number("threshold")? })
        }
        "numeric_range" => {
            f.expect_keys(&["feature", "low", "high"])?;
            Ok(Rule::NumericRange { feature: f.string("feature")?, low: f.number("low")?, high: f.number("high")? })
        }
        "categorical_in" => {
            f.expect_keys(&["feature", "in"])?;
            let categories: BTreeSet<String> = f.string_list("in")?.into_iter().collect();
            Ok(Rule::CategoricalIn { feature: f.string("feature")?, categories })
        }
        "binary_true" => {
            f.expect_keys(&["feature"])?;
            Ok(Rule::BinaryTrue { feature: f.string("feature")? })
        }
        "derived_numeric_threshold" => {
            f.expect_keys(&["expr", "op", "threshold"])?;
            let expr = parse_expr(&f.string("expr")?, catalog)?;
            Ok(Rule::DerivedThreshold { expr, op: f.op()?, threshold: f.number("threshold")? })
        }
        "count_present" => {
            f.expect_keys(&["features", "min_count"])?;
            let min_count = match f.get("min_count") {
                Value::Number(n) => match (n.as_u64(), n.as_f64()) {
                    (Some(u), _) => u,
                    (None, Some(x)) if x.fract() == 0.0 && x >= 0.0 => x as u64,
                    _ => return Err(GrammarError::InvalidParameter("min_count must be a positive integer".into())),
                },
                _ => return Err(malformed("`min_count` must be an integer")),
            };
            let min_count = u32::try_from(min_count)
                .map_err(|_| GrammarError::InvalidParameter("min_count is too large".into()))?;
            Ok(Rule::CountPresent { features: f.string_list("features")?, min_count })
        }
        "logical" => {
            f.expect_keys(&["op", "rules"])?;
            let op = match f.get("op").as_str() {
                Some("and") | Some("AND") => LogicOp::And,
                Some("or") | Some("OR") => LogicOp::Or,
                _ => return Err(malformed("logical `op` must be \"and\" or \"or\"")),
            };
            let children = f.get("rules").as_array().ok_or_else(|| malformed("`rules` must be an array"))?;
            let rules = children.iter().map(|c| from_value(c, catalog)).collect::<Result<Vec<_>>>()?;
            Ok(Rule::Logical { op, rules })
        }
        "percent_change" => {
            f.expect_keys(&["feature_t0", "feature_t1", "pct", "op", "direction"])?;
            let direction = match f.get("direction").as_str() {
                Some("increase") => Direction::Increase,
                Some("decrease") => Direction::Decrease,
                _ => return Err(malformed("`direction` must be \"increase\" or \"decrease\"")),
            };
            Ok(Rule::PercentChange {
                feature_t0: f.string("feature_t0")?,
                feature_t1: f.string("feature_t1")?,
                pct: f.number("pct")?,
                op: f.op()?,
                direction,
            })
        }
        "zscore_threshold" => {
            f.expect_keys(&["feature", "op", "z"])?;
            Ok(Rule::ZScoreThreshold { feature: f.string("feature")?, op: f.op()?, z: f.number("z")? })
        }
        "quantile_threshold" => {
            f.expect_keys(&["feature", "op", "q"])?;
            Ok(Rule::QuantileThreshold { feature: f.string("feature")?, op: f.op()?, q: f.number("q")? })
        }
        other => Err(malformed(format!("unknown rule type `{other}`"))),
    }
}

/// Accepts exactly `a/b` or `a-b` over two catalog features.
///
/// Feature names may themselves contain `-`, so every operator position is
/// tried and the expression must split into known features in exactly one way.
fn parse_expr(expr: &str, catalog: &FeatureCatalog) -> Result<DerivedExpr> {
    let mut found: Vec<DerivedExpr> = Vec::new();
    let mut candidates = 0usize;
    for (i, c) in expr.char_indices() {
        let Some(op) = DerivedOp::from_symbol(c) else { continue };
        let left = expr[..i].trim();
        let right = expr[i + c.len_utf8()..].trim();
        if !is_identifier(left) || !is_identifier(right) {
            continue;
        }
        candidates += 1;
        if catalog.contains(left) && catalog.contains(right) {
            found.push(DerivedExpr { op, left: left.to_owned(), right: right.to_owned() });
        }
    }
    match found.len() {
        1 => Ok(found.pop().expect("one split")),
        0 if candidates > 0 => {
            let unknown = expr
                .split(['/', '-'])
                .map(str::trim)
                .find(|part| !part.is_empty() && !catalog.contains(part))
                .unwrap_or(expr);
            Err(GrammarError::UnknownFeature(unknown.to_owned()))
        }
        0 => Err(GrammarError::InvalidParameter(format!(
            "derived expression `{expr}` is not of the form a/b or a-b"
        ))),
        _ => Err(GrammarError::InvalidParameter(format!("derived expression `{expr}` is ambiguous"))),
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

fn require(catalog: &FeatureCatalog, name: &str, kind: FeatureKind, ctx: &str) -> Result<()> {
    match catalog.kind(name) {
        None => Err(GrammarError::UnknownFeature(name.to_owned())),
        Some(k) if k == kind => Ok(()),
        Some(k) => Err(GrammarError::TypeMismatch(format!("{ctx} needs a {kind} feature but `{name}` is {k}"))),
    }
}

fn check_catalog(rule: &Rule, catalog: &FeatureCatalog) -> Result<()> {
    use FeatureKind::*;
    match rule {
        Rule::NumericThreshold { feature, .. } => require(catalog, feature, Numeric, "numeric_threshold"),
        Rule::NumericRange { feature, .. } => require(catalog, feature, Numeric, "numeric_range"),
        Rule::CategoricalIn { feature, .. } => require(catalog, feature, Categorical, "categorical_in"),
        Rule::BinaryTrue { feature } => require(catalog, feature, Binary, "binary_true"),
        Rule::DerivedThreshold { expr, .. } => {
            require(catalog, &expr.left, Numeric, "derived_numeric_threshold")?;
            require(catalog, &expr.right, Numeric, "derived_numeric_threshold")
        }
        Rule::CountPresent { features, .. } => {
            features.iter().try_for_each(|f| require(catalog, f, Binary, "count_present"))
        }
        Rule::Logical { rules, .. } => rules.iter().try_for_each(|r| check_catalog(r, catalog)),
        Rule::PercentChange { feature_t0, feature_t1, .. } => {
            require(catalog, feature_t0, Numeric, "percent_change")?;
            require(catalog, feature_t1, Numeric, "percent_change")
        }
        Rule::ZScoreThreshold { feature, .. } => require(catalog, feature, Numeric, "zscore_threshold"),
        Rule::QuantileThreshold { feature, .. } => require(catalog, feature, Numeric, "quantile_threshold"),
    }
}

/// Re-checks a programmatically built rule against the catalog and depth limit.
pub(crate) fn validate_rule(rule: &Rule, catalog: &FeatureCatalog, max_depth: usize) -> Result<()> {
    rule.validate_structure(max_depth)?;
    check_catalog(rule, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;
    use crate::grammar::serialize_rule;

    fn catalog() -> FeatureCatalog {
        FeatureCatalog::new(vec![
            FeatureSpec::numeric("BUN__last"),
            FeatureSpec::numeric("WBC__last"),
            FeatureSpec::numeric("HR__last"),
            FeatureSpec::numeric("MAP__last"),
            FeatureSpec::numeric("heart-rate"),
            FeatureSpec::categorical("admission_type"),
            FeatureSpec::binary("intubated"),
            FeatureSpec::binary("ventilated"),
        ])
        .unwrap()
    }

    #[test]
    fn numeric_threshold_from_table_row() {
        let r = parse_rule(r#"{"type":"numeric_threshold","feature":"BUN__last","op":">=","threshold":30}"#, &catalog(), 1)
            .unwrap();
        assert_eq!(r, Rule::NumericThreshold { feature: "BUN__last".into(), op: CmpOp::Ge, threshold: 30.0 });
    }

    #[test]
    fn depth_one_and_of_atomic_children() {
        let text = r#"{"type":"logical","op":"and","rules":[
            {"type":"binary_true","feature":"intubated"},
            {"type":"numeric_threshold","feature":"BUN__last","op":">=","threshold":20}]}"#;
        let r = parse_rule(text, &catalog(), 1).unwrap();
        assert_eq!(r.depth(), 1);
        assert!(matches!(parse_rule(text, &catalog(), 0), Err(GrammarError::DepthExceeded { depth: 1, max: 0 })));
    }

    #[test]
    fn quantile_outside_unit_interval() {
        let r = parse_rule(r#"{"type":"quantile_threshold","feature":"WBC__last","op":">=","q":1.5}"#, &catalog(), 1);
        assert!(matches!(r, Err(GrammarError::InvalidParameter(_))));
    }

    #[test]
    fn error_classes() {
        let c = catalog();
        assert!(matches!(parse_rule("{not json", &c, 1), Err(GrammarError::MalformedSyntax(_))));
        assert!(matches!(
            parse_rule(r#"{"type":"binary_true","feature":"nope"}"#, &c, 1),
            Err(GrammarError::UnknownFeature(n)) if n == "nope"
        ));
        assert!(matches!(
            parse_rule(r#"{"type":"numeric_threshold","feature":"admission_type","op":">","threshold":1}"#, &c, 1),
            Err(GrammarError::TypeMismatch(_))
        ));
        assert!(matches!(
            parse_rule(r#"{"type":"numeric_range","feature":"BUN__last","low":5,"high":1}"#, &c, 1),
            Err(GrammarError::InvalidParameter(_))
        ));
        assert!(matches!(
            parse_rule(r#"{"type":"binary_true","feature":"intubated","extra":1}"#, &c, 1),
            Err(GrammarError::MalformedSyntax(_))
        ));
        assert!(matches!(
            parse_rule(r#"{"type":"count_present","features":["BUN__last"],"min_count":1}"#, &c, 1),
            Err(GrammarError::TypeMismatch(_))
        ));
        assert!(matches!(
            parse_rule(r#"{"type":"logical","op":"and","rules":[{"type":"binary_true","feature":"intubated"}]}"#, &c, 1),
            Err(GrammarError::InvalidParameter(_))
        ));
    }

    #[test]
    fn derived_expressions_restricted_to_ratio_and_difference() {
        let c = catalog();
        let ok = parse_rule(r#"{"type":"derived_numeric_threshold","expr":"HR__last / MAP__last","op":">=","threshold":1.5}"#, &c, 1)
            .unwrap();
        assert_eq!(serialize_rule(&ok), r#"{"expr":"HR__last/MAP__last","op":">=","threshold":1.5,"type":"derived_numeric_threshold"}"#);
        let hyphen = parse_rule(r#"{"type":"derived_numeric_threshold","expr":"heart-rate-MAP__last","op":">","threshold":0}"#, &c, 1)
            .unwrap();
        match hyphen {
            Rule::DerivedThreshold { expr, .. } => {
                assert_eq!(expr.left, "heart-rate");
                assert_eq!(expr.op, DerivedOp::Difference);
            }
            _ => unreachable!(),
        }
        for bad in ["HR__last*MAP__last", "log(HR__last)", "HR__last/MAP__last/BUN__last", "(HR__last+1)/MAP__last"] {
            let text = format!(r#"{{"type":"derived_numeric_threshold","expr":"{bad}","op":">","threshold":1}}"#);
            assert!(parse_rule(&text, &c, 1).is_err(), "{bad} should be rejected");
        }
        assert!(matches!(
            parse_rule(r#"{"type":"derived_numeric_threshold","expr":"HR__last/GHOST","op":">","threshold":1}"#, &c, 1),
            Err(GrammarError::UnknownFeature(n)) if n == "GHOST"
        ));
    }

    #[test]
    fn categorical_set_is_canonicalised() {
        let c = catalog();
        let r = parse_rule(r#"{"type":"categorical_in","feature":"admission_type","in":["urgent","emergency","urgent"]}"#, &c, 1)
            .unwrap();
        assert_eq!(serialize_rule(&r), r#"{"feature":"admission_type","in":["emergency","urgent"],"type":"categorical_in"}"#);
    }
}
