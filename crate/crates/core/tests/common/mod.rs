//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use checklist_core::data::{Column, Dataset, FeatureCatalog, FeatureSpec, SplitTag};
use checklist_core::grammar::{CmpOp, DerivedExpr, DerivedOp, Direction, LogicOp, Rule};

pub const NUMERIC: [&str; 6] = ["hr", "map", "bun", "cr__first", "cr__last", "lactate"];
pub const BINARY: [&str; 5] = ["intubated", "pressors", "dialysis", "sepsis", "copd"];
pub const CATEGORICAL: [&str; 2] = ["admission_type", "ward"];

pub fn catalog() -> FeatureCatalog {
    let mut specs: Vec<FeatureSpec> = NUMERIC.iter().map(|n| FeatureSpec::numeric(*n)).collect();
    specs.extend(BINARY.iter().map(|n| FeatureSpec::binary(*n)));
    specs.extend(CATEGORICAL.iter().map(|n| FeatureSpec::categorical(*n)));
    FeatureCatalog::new(specs).unwrap()
}

fn numeric() -> impl Strategy<Value = String> {
    prop::sample::select(NUMERIC.to_vec()).prop_map(str::to_owned)
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => -500.0..500.0f64,
        1 => (-2000i32..2000).prop_map(|v| v as f64 / 4.0),
        1 => any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(CmpOp::ALL.to_vec())
}

fn atomic() -> impl Strategy<Value = Rule> {
    let category = "[A-Za-z0-9_é -]{1,10}";
    prop_oneof![
        (numeric(), cmp_op(), value()).prop_map(|(feature, op, threshold)| Rule::NumericThreshold { feature, op, threshold }),
        (numeric(), value(), value()).prop_map(|(feature, a, b)| Rule::NumericRange { feature, low: a.min(b), high: a.max(b) }),
        (prop::sample::select(CATEGORICAL.to_vec()), prop::collection::btree_set(category, 1..5))
            .prop_map(|(f, categories): (&str, BTreeSet<String>)| Rule::CategoricalIn { feature: f.into(), categories }),
        prop::sample::select(BINARY.to_vec()).prop_map(|f| Rule::BinaryTrue { feature: f.into() }),
        (numeric(), numeric(), any::<bool>(), cmp_op(), value()).prop_map(|(left, right, ratio, op, threshold)| {
            let op_kind = if ratio { DerivedOp::Ratio } else { DerivedOp::Difference };
            Rule::DerivedThreshold { expr: DerivedExpr { op: op_kind, left, right }, op, threshold }
        }),
        (prop::sample::subsequence(BINARY.to_vec(), 1..=BINARY.len()).prop_shuffle(), any::<prop::sample::Index>())
            .prop_map(|(features, idx)| {
                let min_count = idx.index(features.len()) as u32 + 1;
                Rule::CountPresent { features: features.into_iter().map(str::to_owned).collect(), min_count }
            }),
        (prop::sample::subsequence(NUMERIC.to_vec(), 2), value(), cmp_op(), any::<bool>()).prop_map(|(pair, pct, op, up)| {
            Rule::PercentChange {
                feature_t0: pair[0].into(),
                feature_t1: pair[1].into(),
                pct,
                op,
                direction: if up { Direction::Increase } else { Direction::Decrease },
            }
        }),
        (numeric(), cmp_op(), value()).prop_map(|(feature, op, z)| Rule::ZScoreThreshold { feature, op, z }),
        (numeric(), cmp_op(), 1u32..1000).prop_map(|(feature, op, q)| Rule::QuantileThreshold { feature, op, q: q as f64 / 1000.0 }),
    ]
}

/// Any rule of the grammar, logical nesting at most `max_depth` deep.
pub fn rule(max_depth: u32) -> impl Strategy<Value = Rule> {
    atomic().prop_recursive(max_depth, 24, 4, |inner| {
        (any::<bool>(), prop::collection::vec(inner, 2..4)).prop_map(|(and, rules)| Rule::Logical {
            op: if and { LogicOp::And } else { LogicOp::Or },
            rules,
        })
    })
}

/// Logical rules only, so every fuzz batch exercises nesting.
pub fn logical(max_depth: u32) -> impl Strategy<Value = Rule> {
    (any::<bool>(), prop::collection::vec(rule(max_depth.saturating_sub(1)), 2..4)).prop_map(|(and, rules)| Rule::Logical {
        op: if and { LogicOp::And } else { LogicOp::Or },
        rules,
    })
}

/// Pairwise Mann–Whitney AUROC with half credit for ties.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0u64, 0u64);
    for (i, &yi) in labels.iter().enumerate() {
        if !yi {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            den += 2;
            num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    num as f64 / den as f64
}

/// A small cohort over [`catalog`]: each numeric feature shifts with the label
/// by a different amount, binaries fire more often in positives, and about 5%
/// of every column is missing.
pub fn cohort(n: usize, seed: u64, split: SplitTag) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    let mut cols = Vec::new();
    for j in 0..NUMERIC.len() {
        let shift = 6.0 * j as f64;
        cols.push(Column::Numeric(
            labels
                .iter()
                .map(|&y| (!rng.random_bool(0.05)).then(|| rng.random_range(0.0..100.0) + if y { shift } else { 0.0 }))
                .collect(),
        ));
    }
    for j in 0..BINARY.len() {
        let p = if j % 2 == 0 { 0.25 } else { 0.15 };
        cols.push(Column::Binary(
            labels
                .iter()
                .map(|&y| (!rng.random_bool(0.05)).then(|| rng.random_bool(if y { p + 0.08 * j as f64 } else { p })))
                .collect(),
        ));
    }
    for _ in CATEGORICAL {
        let cells: Vec<Option<&str>> = labels
            .iter()
            .map(|&y| {
                (!rng.random_bool(0.05)).then(|| match rng.random_range(0..10) + if y { 3 } else { 0 } {
                    0..=4 => "elective",
                    5..=8 => "urgent",
                    _ => "emergency",
                })
            })
            .collect();
        cols.push(Column::categorical_from(&cells));
    }
    let groups = (0..n).map(|i| format!("g{i}")).collect();
    Dataset::new(Arc::new(catalog()), cols, labels, groups).unwrap().with_split(split)
}

/// Rules with parameters inside the range of [`cohort`] data, so a useful
/// share of them clears the AUROC threshold.
pub fn screening_rule() -> impl Strategy<Value = Rule> {
    let threshold = (numeric(), prop::sample::select(vec![CmpOp::Ge, CmpOp::Gt, CmpOp::Le]), 0u32..40)
        .prop_map(|(feature, op, t)| Rule::NumericThreshold { feature, op, threshold: 2.5 * t as f64 + 10.0 });
    let leaf = prop_oneof![
        4 => threshold,
        2 => prop::sample::select(BINARY.to_vec()).prop_map(|f| Rule::BinaryTrue { feature: f.into() }),
        1 => (prop::sample::subsequence(BINARY.to_vec(), 2..4), 1u32..3).prop_map(|(fs, k)| Rule::CountPresent {
            min_count: k.min(fs.len() as u32),
            features: fs.into_iter().map(str::to_owned).collect(),
        }),
        1 => (numeric(), 1u32..20).prop_map(|(feature, q)| Rule::QuantileThreshold { feature, op: CmpOp::Ge, q: q as f64 / 20.0 }),
        1 => (numeric(), -4i32..4).prop_map(|(feature, z)| Rule::ZScoreThreshold { feature, op: CmpOp::Ge, z: z as f64 / 4.0 }),
        1 => (prop::sample::select(CATEGORICAL.to_vec()), prop::sample::subsequence(vec!["elective", "urgent", "emergency"], 1..3))
            .prop_map(|(f, cs)| Rule::CategoricalIn { feature: f.into(), categories: cs.into_iter().map(str::to_owned).collect() }),
    ];
    leaf.prop_recursive(1, 3, 2, |inner| {
        (any::<bool>(), prop::collection::vec(inner, 2)).prop_map(|(and, rules)| Rule::Logical {
            op: if and { LogicOp::And } else { LogicOp::Or },
            rules,
        })
    })
}
