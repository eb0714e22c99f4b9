mod common;

use std::sync::Arc;

use proptest::prelude::*;

use checklist_core::data::{fit_feature_stats, SplitTag};
use checklist_core::eval::{
    auroc, auroc_discrete, jaccard_positive, select_threshold, CoverageMask, ThresholdObjective,
};
use checklist_core::grammar::{parse_rule, parse_rule_value, rule_to_value, serialize_rule, GrammarError, LogicOp, Rule};
use checklist_core::pool::{GateConfig, RulePool};

const MAX_DEPTH: usize = 3;

fn scored_instance(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2..max_n).prop_flat_map(|n| {
        (prop::collection::vec(0i32..12, n), prop::collection::vec(any::<bool>(), n))
            .prop_filter("both classes", |(_, y)| y.iter().any(|&b| b) && y.iter().any(|&b| !b))
            .prop_map(|(s, y)| (s.into_iter().map(f64::from).collect(), y))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn serialized_rules_parse_back(r in common::rule(MAX_DEPTH as u32)) {
        let catalog = common::catalog();
        let text = serialize_rule(&r);
        let back = parse_rule(&text, &catalog, MAX_DEPTH).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(serialize_rule(&back), text);
        prop_assert_eq!(parse_rule_value(&rule_to_value(&r), &catalog, MAX_DEPTH).unwrap(), r.clone());
        prop_assert!(r.validate_structure(MAX_DEPTH).is_ok());
        prop_assert!(r.leaf_count() > r.depth());
    }

    #[test]
    fn nesting_past_the_limit_is_rejected(r in common::logical(MAX_DEPTH as u32)) {
        let depth = r.depth();
        prop_assume!(depth >= 1);
        let text = serialize_rule(&r);
        prop_assert_eq!(
            parse_rule(&text, &common::catalog(), depth - 1),
            Err(GrammarError::DepthExceeded { depth, max: depth - 1 })
        );
    }

    #[test]
    fn a_single_child_is_not_a_logical_rule(r in common::rule(1)) {
        let lone = Rule::Logical { op: LogicOp::And, rules: vec![r] };
        let err = parse_rule(&serialize_rule(&lone), &common::catalog(), MAX_DEPTH + 1).unwrap_err();
        prop_assert!(matches!(err, GrammarError::InvalidParameter(_)), "{:?}", err);
    }

    #[test]
    fn auroc_matches_the_pairwise_count((s, y) in scored_instance(120)) {
        let fast = auroc(&s, &y).unwrap();
        prop_assert!((fast - common::pairwise_auroc(&s, &y)).abs() <= 1e-12);
        let ints: Vec<u32> = s.iter().map(|&v| v as u32).collect();
        prop_assert_eq!(auroc_discrete(&ints, &y).unwrap(), fast);
    }

    #[test]
    fn auroc_ignores_monotone_rescaling((s, y) in scored_instance(120)) {
        let base = auroc(&s, &y).unwrap();
        let cubed: Vec<f64> = s.iter().map(|v| v * v * v - 40.0).collect();
        let shifted: Vec<f64> = s.iter().map(|v| 2.5 * v + 7.0).collect();
        prop_assert_eq!(auroc(&cubed, &y).unwrap(), base);
        prop_assert_eq!(auroc(&shifted, &y).unwrap(), base);
    }

    #[test]
    fn auroc_flips_with_the_labels_or_the_sign((s, y) in scored_instance(120)) {
        let base = auroc(&s, &y).unwrap();
        let flipped: Vec<bool> = y.iter().map(|b| !b).collect();
        let negated: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auroc(&s, &flipped).unwrap() - (1.0 - base)).abs() <= 1e-12);
        prop_assert!((auroc(&negated, &y).unwrap() - (1.0 - base)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn auroc_ignores_row_order((s, y) in scored_instance(80), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..s.len()).collect();
        let mut state = seed | 1;
        for i in (1..order.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            order.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let ps: Vec<f64> = order.iter().map(|&i| s[i]).collect();
        let py: Vec<bool> = order.iter().map(|&i| y[i]).collect();
        prop_assert_eq!(auroc(&ps, &py).unwrap(), auroc(&s, &y).unwrap());
    }

    #[test]
    fn jaccard_is_a_bounded_symmetric_similarity(
        bits in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..300)
    ) {
        let a: Vec<bool> = bits.iter().map(|t| t.0).collect();
        let b: Vec<bool> = bits.iter().map(|t| t.1).collect();
        let y: Vec<bool> = bits.iter().map(|t| t.2).collect();
        let ma = CoverageMask::from_bools(&a, SplitTag::Construction);
        let mb = CoverageMask::from_bools(&b, SplitTag::Construction);
        let ab = jaccard_positive(&ma, &mb, &y).unwrap();
        prop_assert_eq!(ab, jaccard_positive(&mb, &ma, &y).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(jaccard_positive(&ma, &ma, &y).unwrap(), 1.0);
        let inter = (0..y.len()).filter(|&i| y[i] && a[i] && b[i]).count();
        let union = (0..y.len()).filter(|&i| y[i] && (a[i] || b[i])).count();
        let expected = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        prop_assert_eq!(ab, expected);
        prop_assert_eq!(ma.count(), a.iter().filter(|&&v| v).count());
    }

    #[test]
    fn youden_threshold_equals_enumeration(
        (scores, labels, max) in (1u32..8).prop_flat_map(|max| {
            (2usize..200).prop_flat_map(move |n| {
                (prop::collection::vec(0..=max, n), prop::collection::vec(any::<bool>(), n), Just(max))
            })
        })
    ) {
        let pos = labels.iter().filter(|&&b| b).count() as i64;
        let neg = labels.len() as i64 - pos;
        prop_assume!(pos > 0 && neg > 0);
        // J(K) * P * N = tp * N - fp * P, compared exactly in integers
        let mut best = (0u32, i64::MIN);
        for k in 0..=max {
            let tp = (0..scores.len()).filter(|&i| labels[i] && scores[i] >= k).count() as i64;
            let fp = (0..scores.len()).filter(|&i| !labels[i] && scores[i] >= k).count() as i64;
            let j = tp * neg - fp * pos;
            if j > best.1 {
                best = (k, j);
            }
        }
        let (k, report) = select_threshold(&scores, &labels, max, ThresholdObjective::Youden).unwrap();
        prop_assert_eq!(k, best.0);
        prop_assert_eq!(report.youden_j, report.sensitivity + report.specificity - 1.0);
        prop_assert_eq!(report.confusion.tp + report.confusion.fn_, pos as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gated_pools_pass_audit_and_replay(
        rules in prop::collection::vec(common::screening_rule(), 1..120),
        seed in 0u64..1000,
        delta in prop::sample::select(vec![0.5, 0.75, 0.9]),
    ) {
        let con = common::cohort(400, seed, SplitTag::Construction);
        let stats = Arc::new(fit_feature_stats(&con).unwrap());
        let gate = GateConfig { jaccard_threshold: delta, ..GateConfig::default() };
        let mut pool = RulePool::new(gate.clone(), &con).unwrap();
        for r in rules {
            pool.consider(r, &con, &stats).unwrap();
        }
        prop_assert_eq!(pool.audit(), Vec::<String>::new());
        for rec in pool.records() {
            prop_assert!(rec.auroc_con >= 0.60);
        }
        let ordinals: Vec<usize> = pool.records().iter().map(|r| r.ordinal).collect();
        prop_assert_eq!(ordinals, (0..pool.len()).collect::<Vec<_>>());
        let again = RulePool::replay(gate.clone(), pool.events(), &con, &stats).unwrap();
        prop_assert_eq!(again.to_jsonl(), pool.to_jsonl());
        let (loaded, warnings) = RulePool::from_jsonl(&pool.to_jsonl(), Some(&gate)).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert!(loaded == pool);
    }
}
