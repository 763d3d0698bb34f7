mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;

use lhz_protocols::cohort::*;
use lhz_protocols::model::LogicalInstance;
use lhz_protocols::spectrum::GapSummary;
use proptest::prelude::*;
use serde_json::{json, Value};

fn golden(name: &str, actual: &Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(actual).unwrap() + "\n").unwrap();
    }
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(&expected, actual, "golden file {name} differs; rerun with UPDATE_GOLDEN=1 if intended");
}

fn synthetic(gaps: &[f64]) -> Cohort {
    let entries = gaps
        .iter()
        .enumerate()
        .map(|(i, &g)| CohortEntry {
            instance: LogicalInstance::new(instance_id(i), 3, 0, vec![0.5, -0.5, 0.25]).unwrap(),
            gap: GapSummary {
                min_gap: g,
                position: 0.5,
                local_minima_count: 1,
                gap_trace: Vec::new(),
            },
        })
        .collect();
    Cohort {
        entries,
        filter_log: Vec::new(),
        seed: 0,
    }
}

fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |xs: &[f64], x: f64| xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64;
    a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
}

#[test]
fn first_sample_is_pinned() {
    let inst = &sample_instances(1, 5, common::FIXTURE_SEED).unwrap()[0];
    golden(
        "first_sample.json",
        &json!({"id": inst.id, "seed": inst.seed, "couplings": inst.couplings()}),
    );
}

#[test]
fn small_cohort_group_populations_are_pinned() {
    let cohort = sort_by_gap(Cohort::build(sample_instances(160, 4, common::FIXTURE_SEED).unwrap(), 1, &ScanOptions::default()).unwrap());
    let split = split_train_test(&cohort, 3, 10, 5, BalanceMethod::Greedy).unwrap();
    let train: BTreeSet<&str> = split.train.entries.iter().map(|e| e.instance.id.as_str()).collect();
    assert!(split.test.entries.iter().all(|e| !train.contains(e.instance.id.as_str())));
    for (g, group) in split.grouping.groups.iter().enumerate() {
        for e in split.test_group(g) {
            assert!(group.min_gap <= e.gap.min_gap && e.gap.min_gap <= group.max_gap);
        }
    }
    let ranges: Vec<[usize; 2]> = split.grouping.groups.iter().map(|g| [g.range.start, g.range.end]).collect();
    let test_sizes: Vec<usize> = split.test_groups.iter().map(Vec::len).collect();
    golden(
        "small_cohort_groups.json",
        &json!({
            "retained": cohort.len(),
            "discarded": cohort.filter_log.len(),
            "train_ranges": ranges,
            "test_sizes": test_sizes,
            "unassigned": split.unassigned.len(),
        }),
    );
}

#[test]
fn degenerate_and_violating_instances_are_discarded() {
    let zero = LogicalInstance::new("zero", 5, 0, vec![0.0; 10]).unwrap();
    let typical = sample_instance(3, 5, common::FIXTURE_SEED).unwrap();
    let cohort = Cohort::build(vec![zero, typical.clone()], 0, &ScanOptions::default()).unwrap();
    assert_eq!(cohort.filter_log, vec![("zero".to_string(), DiscardReason::DegenerateFinal)]);
    assert_eq!(cohort.entries[0].instance.id, typical.id);

    let hard = FilterPolicy {
        hard_ids: [typical.id.clone()].into_iter().collect(),
        ..Default::default()
    };
    let filtered = filter_instances(cohort, &hard).unwrap();
    assert!(filtered.is_empty());
    assert_eq!(filtered.filter_log.last().unwrap(), &(typical.id, DiscardReason::Hard));
}

#[test]
fn histogram_recounts_raw_gaps() {
    let gaps: Vec<f64> = (0..97).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    let hist = gap_histogram(&gaps, None, 9).unwrap();
    let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(hist.edges[0], lo);
    assert_eq!(*hist.edges.last().unwrap(), hi);
    for b in 0..9 {
        let (a, z) = (hist.edges[b], hist.edges[b + 1]);
        let recount = gaps.iter().filter(|&&g| g >= a && (g < z || (b == 8 && g <= z))).count();
        assert_eq!(hist.counts[b], recount, "bin {b}");
    }
}

fn sorted_gaps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001..1.0f64, 60..300).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn groupings_partition_the_sorted_cohort(gaps in sorted_gaps(), n_groups in 1usize..=6, quota in 1usize..=10) {
        prop_assume!(gaps.len() >= n_groups * quota);
        for method in [BalanceMethod::Greedy, BalanceMethod::Optimal] {
            let grouping = balance_groups_with(&gaps, n_groups, quota, method).unwrap();
            prop_assert_eq!(grouping.groups.len(), n_groups);
            prop_assert_eq!(grouping.groups[0].range.start, 0);
            prop_assert_eq!(grouping.groups[n_groups - 1].range.end, gaps.len());
            for w in grouping.groups.windows(2) {
                prop_assert_eq!(w[0].range.end, w[1].range.start);
                prop_assert!(w[0].max_gap <= w[1].min_gap);
            }
            for g in &grouping.groups {
                prop_assert!(g.range.len() >= quota);
                prop_assert_eq!(g.members.len(), quota);
                prop_assert!(g.members.iter().all(|m| g.range.contains(m)));
                prop_assert!((g.sigma - population_sigma(&gaps[g.range.clone()])).abs() < 1e-9);
            }
            prop_assert!(grouping.max_sigma() <= grouping.initial_max_sigma);
        }
    }

    #[test]
    fn optimal_split_is_never_worse_than_greedy(gaps in sorted_gaps(), n_groups in 2usize..=6) {
        prop_assume!(gaps.len() >= n_groups * 5);
        let greedy = balance_groups_with(&gaps, n_groups, 5, BalanceMethod::Greedy).unwrap();
        let optimal = balance_groups_with(&gaps, n_groups, 5, BalanceMethod::Optimal).unwrap();
        prop_assert!(optimal.max_sigma() <= greedy.max_sigma() + 1e-12);
    }

    #[test]
    fn trimming_preserves_the_gap_distribution(gaps in prop::collection::vec(0.001..1.0f64, 100..600), quota in 50usize..=100) {
        let mut gaps = gaps;
        gaps.sort_by(f64::total_cmp);
        prop_assume!(gaps.len() >= quota);
        let kept: Vec<f64> = trim_indices(0..gaps.len(), quota).into_iter().map(|i| gaps[i]).collect();
        prop_assert_eq!(kept.len(), quota);
        prop_assert!(ks_distance(&gaps, &kept) <= 0.15);
    }

    #[test]
    fn sorting_orders_by_gap_then_id(gaps in prop::collection::vec(prop::sample::select(vec![0.1, 0.2, 0.3]), 2..40)) {
        let sorted = sort_by_gap(synthetic(&gaps));
        for w in sorted.entries.windows(2) {
            let key = |e: &CohortEntry| (e.gap.min_gap, e.instance.id.clone());
            prop_assert!(key(&w[0]) <= key(&w[1]));
        }
        prop_assert_eq!(sort_by_gap(sorted.clone()).entries, sorted.entries);
    }

    #[test]
    fn test_split_respects_training_intervals(gaps in sorted_gaps(), seed in any::<u64>()) {
        let cohort = synthetic(&gaps);
        match split_train_test(&cohort, 3, 5, seed, BalanceMethod::Greedy) {
            Ok(split) => {
                let train: BTreeSet<_> = split.train.entries.iter().map(|e| e.instance.id.clone()).collect();
                prop_assert!(split.test.entries.iter().all(|e| !train.contains(&e.instance.id)));
                prop_assert_eq!(split.train.len() + split.test.len(), cohort.len());
                for (g, group) in split.grouping.groups.iter().enumerate() {
                    prop_assert!(split.test_group(g).len() <= 5);
                    for e in split.test_group(g) {
                        prop_assert!(group.min_gap <= e.gap.min_gap && e.gap.min_gap <= group.max_gap);
                    }
                }
            }
            Err(e) => prop_assert!(
                matches!(e, lhz_protocols::Error::EmptyTestGroup { .. } | lhz_protocols::Error::InfeasibleQuota { .. }),
                "unexpected error {}",
                e
            ),
        }
    }
}
