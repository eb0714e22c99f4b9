use serde_json::{Map, Number, Value};

use super::{DerivedOp, Direction, LogicOp, Rule};

fn num(v: f64) -> Value {
    Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn str_val(s: &str) -> Value {
    Value::String(s.to_owned())
}

/// Rule as a JSON object in the proposal schema dialect.
pub fn rule_to_value(rule: &Rule) -> Value {
    let mut m = Map::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_owned(), v);
    };
    match rule {
        Rule::NumericThreshold { feature, op, threshold } => {
            put("type", str_val("numeric_threshold"));
            put("feature", str_val(feature));
            put("op", str_val(op.symbol()));
            put("threshold", num(*threshold));
        }
        Rule::NumericRange { feature, low, high } => {
            put("type", str_val("numeric_range"));
            put("feature", str_val(feature));
            put("low", num(*low));
            put("high", num(*high));
        }
        Rule::CategoricalIn { feature, categories } => {
            put("type", str_val("categorical_in"));
            put("feature", str_val(feature));
            put("in", Value::Array(categories.iter().map(|c| str_val(c)).collect()));
        }
        Rule::BinaryTrue { feature } => {
            put("type", str_val("binary_true"));
            put("feature", str_val(feature));
        }
        Rule::DerivedThreshold { expr, op, threshold } => {
            put("type", str_val("derived_numeric_threshold"));
            put("expr", str_val(&expr.to_string()));
            put("op", str_val(op.symbol()));
            put("threshold", num(*threshold));
        }
        Rule::CountPresent { features, min_count } => {
            put("type", str_val("count_present"));
            put("features", Value::Array(features.iter().map(|f| str_val(f)).collect()));
            put("min_count", Value::Number((*min_count).into()));
        }
        Rule::Logical { op, rules } => {
            put("type", str_val("logical"));
            put(
                "op",
                str_val(match op {
                    LogicOp::And => "and",
                    LogicOp::Or => "or",
                }),
            );
            put("rules", Value::Array(rules.iter().map(rule_to_value).collect()));
        }
        Rule::PercentChange { feature_t0, feature_t1, pct, op, direction } => {
            put("type", str_val("percent_change"));
            put("feature_t0", str_val(feature_t0));
            put("feature_t1", str_val(feature_t1));
            put("pct", num(*pct));
            put("op", str_val(op.symbol()));
            put(
                "direction",
                str_val(match direction {
                    Direction::Increase => "increase",
                    Direction::Decrease => "decrease",
                }),
            );
        }
        Rule::ZScoreThreshold { feature, op, z } => {
            put("type", str_val("zscore_threshold"));
            put("feature", str_val(feature));
            put("op", str_val(op.symbol()));
            put("z", num(*z));
        }
        Rule::QuantileThreshold { feature, op, q } => {
            put("type", str_val("quantile_threshold"));
            put("feature", str_val(feature));
            put("op", str_val(op.symbol()));
            put("q", num(*q));
        }
    }
    Value::Object(m)
}

/// Single-line JSON with sorted keys and shortest round-trip numbers.
pub fn serialize_rule(rule: &Rule) -> String {
    canonical_json(&rule_to_value(rule))
}

pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

pub fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                // f64 Display is the shortest string that parses back to the same value.
                let f = n.as_f64().unwrap_or(0.0);
                out.push_str(&format!("{f}"));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serialization")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serialization"));
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
    }
}

impl DerivedOp {
    pub(crate) fn from_symbol(c: char) -> Option<DerivedOp> {
        match c {
            '/' => Some(DerivedOp::Ratio),
            '-' => Some(DerivedOp::Difference),
            _ => None,
        }
    }
}
