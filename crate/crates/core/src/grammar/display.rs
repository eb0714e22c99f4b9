use super::{CmpOp, DerivedOp, Direction, LogicOp, Rule};

fn sym(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Gt => ">",
        CmpOp::Ge => "≥",
        CmpOp::Lt => "<",
        CmpOp::Le => "≤",
    }
}

/// Human-readable checklist line for a rule.
pub fn rule_text(rule: &Rule) -> String {
    match rule {
        Rule::NumericThreshold { feature, op, threshold } => format!("{feature} {} {threshold}", sym(*op)),
        Rule::NumericRange { feature, low, high } => format!("{low} ≤ {feature} ≤ {high}"),
        Rule::CategoricalIn { feature, categories } => {
            let cats: Vec<&str> = categories.iter().map(String::as_str).collect();
            if cats.len() == 1 {
                format!("{feature} is {}", cats[0])
            } else {
                format!("{feature} is {}", cats.join(" or "))
            }
        }
        Rule::BinaryTrue { feature } => feature.clone(),
        Rule::DerivedThreshold { expr, op, threshold } => {
            let glyph = match expr.op {
                DerivedOp::Ratio => "/",
                DerivedOp::Difference => "−",
            };
            format!("{} {glyph} {} {} {threshold}", expr.left, expr.right, sym(*op))
        }
        Rule::CountPresent { features, min_count } => {
            format!("at least {min_count} of: {}", features.join(", "))
        }
        Rule::Logical { op, rules } => {
            let joiner = match op {
                LogicOp::And => " and ",
                LogicOp::Or => " or ",
            };
            rules
                .iter()
                .map(|r| if r.is_atomic() { rule_text(r) } else { format!("({})", rule_text(r)) })
                .collect::<Vec<_>>()
                .join(joiner)
        }
        Rule::PercentChange { feature_t0, feature_t1, pct, op, direction } => {
            let word = match direction {
                Direction::Increase => "increase",
                Direction::Decrease => "decline",
            };
            format!("{word} from {feature_t0} to {feature_t1} {} {pct}%", sym(*op))
        }
        Rule::ZScoreThreshold { feature, op, z } => format!("z({feature}) {} {z}", sym(*op)),
        Rule::QuantileThreshold { feature, op, q } => format!("{feature} {} Q{q}({feature})", sym(*op)),
    }
}
