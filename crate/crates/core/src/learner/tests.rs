// SPDX-License-Identifier: Apache-2.0

use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{candidate_conditions, AttributeKind, Column, Condition, DiscreteColumn, Granularity, NumericColumn};
use crate::objective::score_model;
use crate::syndrome::count_series;
use crate::synthbench::{gen_synthetic_dataset, SyntheticDataConfig};

fn day(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(u64::from(d))
}

/// Mixed dataset: two discrete attributes (with missing cells) and one
/// numeric attribute with few distinct values (with missing cells).
fn mixed(n: usize, days: u32, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = (0..n).map(|_| day(rng.random_range(0..days))).collect();
    let tokens = ["a", "b", "c", "d"];
    let mut disc = |p_missing: f64, k: usize| {
        let cells: Vec<Option<&str>> = (0..n)
            .map(|_| (!rng.random_bool(p_missing)).then(|| tokens[rng.random_range(0..k)]))
            .collect();
        Column::Discrete(DiscreteColumn::from_cells(&cells))
    };
    let c1 = disc(0.1, 4);
    let c2 = disc(0.0, 3);
    let num: Vec<Option<f64>> = (0..n)
        .map(|_| (!rng.random_bool(0.1)).then(|| f64::from(rng.random_range(0..8u8)) * 0.5))
        .collect();
    let c3 = Column::Numeric(NumericColumn::from_cells(&num).unwrap());
    let schema = vec![
        AttributeSchema::new("x", AttributeKind::Discrete).with_category("1"),
        AttributeSchema::new("y", AttributeKind::Discrete).with_category("2"),
        AttributeSchema::new("t", AttributeKind::Numeric).with_category("2"),
    ];
    Dataset::new(schema, vec![c1, c2, c3], dates).unwrap()
}

fn random_targets(index: &TimeIndex, seed: u64) -> TargetSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TargetSeries::for_index(index, (0..index.len()).map(|_| rng.random_range(0..20)).collect()).unwrap()
}

fn config(min_support: f64) -> LearnerConfig {
    LearnerConfig {
        min_support,
        ..LearnerConfig::default()
    }
}

#[test]
fn support_floor_rounding() {
    assert_eq!(min_support_count(1_900_000, 0.0001), 190);
    assert_eq!(min_support_count(100_000, 0.0001), 10);
    assert_eq!(min_support_count(10, 0.25), 3);
    assert_eq!(min_support_count(10, 0.01), 1);
    assert_eq!(min_support_count(3, 0.5), 2);
    assert_eq!(min_support_count(10_000, 0.0051), 51);
    assert_eq!(min_support_count(10_000, 0.00511), 52);
}

#[test]
fn config_validation() {
    for s in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(matches!(config(s).validate(), Err(ConfigError::MinSupport)));
    }
    let mut c = config(0.01);
    c.max_rules = 0;
    assert!(matches!(c.validate(), Err(ConfigError::MaxRules)));
    let mut c = config(0.01);
    c.max_conditions = Some(0);
    assert!(matches!(c.validate(), Err(ConfigError::MaxConditions)));
    let mut c = config(0.01);
    c.improvement_epsilon = -1.0;
    assert!(matches!(c.validate(), Err(ConfigError::Epsilon)));
}

#[test]
fn blacklist_lines() {
    let spec = BlacklistSpec::parse_lines("# comment\nx\n\n\"y\"  # trailing\nt > 1.5\nx = a\n");
    assert_eq!(spec.attributes, ["x", "y"]);
    assert_eq!(spec.conditions, ["t > 1.5", "x = a"]);
    let ds = mixed(10, 3, 0);
    let bl = spec.resolve(ds.schema()).unwrap();
    assert_eq!(bl.attributes().collect::<Vec<_>>(), [0, 1]);
    assert_eq!(bl.conditions().count(), 2);
    let bad = BlacklistSpec {
        attributes: vec!["nope".into()],
        conditions: vec![],
    };
    assert!(matches!(bad.resolve(ds.schema()), Err(ConfigError::UnknownAttribute(_))));
}

#[test]
fn perfect_single_indicator() {
    let ds = mixed(3000, 40, 1);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let planted = Syndrome::new(vec![Conjunction::single(Condition::eq(ds.schema(), 0, "c").unwrap())]);
    let y = count_series(&planted, &ds, &index, Semantics::Disjunctive);
    let targets = TargetSeries::for_index(&index, y.0).unwrap();
    let report = fit(&ds, &index, &targets, &config(0.01)).unwrap();
    assert_eq!(report.syndrome_text, "x = \"c\"");
    assert!((report.score.value - 1.0).abs() < 1e-12);
    assert_eq!(report.trace.len(), 1);
    assert_eq!(report.counts.as_slice(), targets.counts());
}

#[test]
fn constant_target_learns_nothing() {
    let ds = mixed(500, 10, 2);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let targets = TargetSeries::for_index(&index, vec![7; index.len()]).unwrap();
    let report = fit(&ds, &index, &targets, &config(0.01)).unwrap();
    assert!(report.syndrome.is_empty());
    assert_eq!(report.syndrome_text, "FALSE");
    assert!(report.score.degenerate);
    assert_eq!(report.score.value, 0.0);
}

#[test]
fn misaligned_targets_rejected() {
    let ds = mixed(100, 10, 2);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let targets = TargetSeries::new(Granularity::Daily, day(0), vec![1; index.len() + 1]);
    assert!(matches!(
        fit(&ds, &index, &targets, &config(0.01)),
        Err(FitError::Misaligned { .. })
    ));
}

/// A random current model: the union of a few random conditions.
fn random_model(ds: &Dataset, index: &TimeIndex, semantics: Semantics, seed: u64) -> (CoverageMask, CountSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conds = candidate_conditions(ds, 1, &CandidateOptions::default());
    let k = rng.random_range(0..3);
    let syndrome = Syndrome::new(
        (0..k)
            .map(|_| Conjunction::single(conds[rng.random_range(0..conds.len())].clone()))
            .collect(),
    );
    (
        syndrome.coverage(ds),
        count_series(&syndrome, ds, index, semantics),
    )
}

#[test]
fn batch_scores_match_direct_evaluation() {
    for seed in 0..12u64 {
        let ds = mixed(400, 25, seed);
        let gran = Granularity::ALL[seed as usize % 3];
        let index = TimeIndex::spanning(&ds, gran);
        if index.len() < 2 {
            continue;
        }
        let targets = random_targets(&index, seed + 100);
        for semantics in [Semantics::Disjunctive, Semantics::Additive] {
            for objective in [ObjectiveKind::Pearson, ObjectiveKind::Spearman, ObjectiveKind::Kendall] {
                let cfg = LearnerConfig {
                    min_support: 0.02,
                    semantics,
                    objective,
                    ..LearnerConfig::default()
                };
                let (mask, counts) = random_model(&ds, &index, semantics, seed + 7);
                let scored = score_candidates(&ds, &index, &targets, &mask, &counts, &cfg).unwrap();
                let expected = candidate_conditions(&ds, cfg.min_support_count(ds.len()), &CandidateOptions::default());
                assert_eq!(scored.iter().map(|s| s.0.clone()).collect::<Vec<_>>(), expected);
                for (cond, support, score) in scored {
                    let cmask = Conjunction::single(cond.clone()).coverage(&ds);
                    assert_eq!(support, cmask.count());
                    let direct =
                        evaluate_candidate(&counts, &mask, &cmask, &index, &targets, semantics, objective).unwrap();
                    assert!(
                        (direct.value - score.value).abs() <= 1e-12,
                        "{objective:?} {semantics:?} {}: {} vs {}",
                        cond.display(ds.schema()),
                        direct.value,
                        score.value
                    );
                    assert_eq!(direct.degenerate, score.degenerate);
                    if objective == ObjectiveKind::Pearson {
                        assert_eq!(direct.value.to_bits(), score.value.to_bits());
                    }
                }
            }
        }
    }
}

#[test]
fn evaluate_candidate_is_pure_and_matches_union() {
    let ds = mixed(300, 12, 4);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let targets = random_targets(&index, 5);
    let a = Syndrome::new(vec![Conjunction::single(Condition::eq(ds.schema(), 0, "a").unwrap())]);
    let b = Conjunction::single(Condition::le(ds.schema(), 2, 1.25).unwrap());
    let mask = a.coverage(&ds);
    let counts = count_series(&a, &ds, &index, Semantics::Disjunctive);
    let before = counts.clone();
    let got = evaluate_candidate(
        &counts,
        &mask,
        &b.coverage(&ds),
        &index,
        &targets,
        Semantics::Disjunctive,
        ObjectiveKind::Pearson,
    )
    .unwrap();
    assert_eq!(counts, before);
    let mut both = a.clone();
    both.push(b);
    let union = count_series(&both, &ds, &index, Semantics::Disjunctive);
    assert_eq!(got, score_model(ObjectiveKind::Pearson, targets.counts(), union.as_slice()).unwrap());
}

/// Every conjunction of at most two candidate conditions, scored on its own.
fn exhaustive_pairs(ds: &Dataset, index: &TimeIndex, targets: &TargetSeries, floor: u64) -> f64 {
    let conds = candidate_conditions(ds, floor, &CandidateOptions::default());
    let masks: Vec<CoverageMask> = conds.iter().map(|c| Conjunction::single(c.clone()).coverage(ds)).collect();
    let mut best = 0.0f64;
    let mut consider = |mask: &CoverageMask| {
        if mask.count() >= floor {
            let counts = CountSeries::of_mask(mask, index);
            let s = score_model(ObjectiveKind::Pearson, targets.counts(), counts.as_slice()).unwrap();
            best = best.max(s.value);
        }
    };
    for i in 0..conds.len() {
        consider(&masks[i]);
        for j in i + 1..conds.len() {
            if Conjunction::new(vec![conds[i].clone(), conds[j].clone()]).is_ok() {
                let mut m = masks[i].clone();
                m.intersect_with(&masks[j]);
                consider(&m);
            }
        }
    }
    best
}

#[test]
fn first_conjunction_is_a_local_optimum() {
    for seed in 0..8u64 {
        let ds = mixed(300, 15, seed);
        let index = TimeIndex::spanning(&ds, Granularity::Daily);
        let targets = random_targets(&index, seed);
        let cfg = config(0.03);
        let floor = cfg.min_support_count(ds.len());
        let empty = CoverageMask::empty(ds.len());
        let zeros = CountSeries::zeros(index.len());
        let Some(grown) = grow_conjunction(&ds, &index, &targets, &empty, &zeros, &cfg).unwrap() else {
            continue;
        };
        let mask = grown.conjunction.coverage(&ds);
        assert_eq!(mask.count(), grown.support);
        assert!(grown.support >= floor);
        let direct = score_model(ObjectiveKind::Pearson, targets.counts(), CountSeries::of_mask(&mask, &index).as_slice())
            .unwrap();
        assert_eq!(direct, grown.score);

        // Greedy never beats the exhaustive optimum over short conjunctions.
        if grown.conjunction.len() <= 2 {
            assert!(grown.score.value <= exhaustive_pairs(&ds, &index, &targets, floor) + 1e-12);
        }

        // No admissible single refinement improves it.
        for c in candidate_conditions(&ds, floor, &CandidateOptions::default()) {
            let Ok(refined) = grown.conjunction.with(c) else { continue };
            let m = refined.coverage(&ds);
            if m.count() < floor {
                continue;
            }
            let s = score_model(ObjectiveKind::Pearson, targets.counts(), CountSeries::of_mask(&m, &index).as_slice())
                .unwrap();
            assert!(s.value <= grown.score.value + cfg.improvement_epsilon);
        }
    }
}

#[test]
fn planted_conjunction_is_recovered() {
    let ds = gen_synthetic_dataset(&SyntheticDataConfig {
        n_instances: 20_000,
        n_attributes: 6,
        n_values: 5,
        days: 120,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let s = ds.schema();
    let planted = Syndrome::new(vec![Conjunction::new(vec![
        Condition::eq(s, 1, "v01").unwrap(),
        Condition::eq(s, 4, "v00").unwrap(),
    ])
    .unwrap()]);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let y = count_series(&planted, &ds, &index, Semantics::Disjunctive);
    let targets = TargetSeries::for_index(&index, y.0).unwrap();
    let report = fit(&ds, &index, &targets, &LearnerConfig::default()).unwrap();
    assert!(report.syndrome.same_indicators(&planted), "{}", report.syndrome_text);
    assert!((report.score.value - 1.0).abs() < 1e-12);
}

#[test]
fn blacklisted_indicators_never_appear() {
    let ds = mixed(2000, 30, 9);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let planted = Syndrome::new(vec![Conjunction::single(Condition::eq(ds.schema(), 0, "c").unwrap())]);
    let y = count_series(&planted, &ds, &index, Semantics::Disjunctive);
    let targets = TargetSeries::for_index(&index, y.0).unwrap();
    let mut cfg = config(0.01);
    cfg.blacklist.conditions.push("x = c".into());
    let r = fit(&ds, &index, &targets, &cfg).unwrap();
    assert!(!r.syndrome_text.contains("x = \"c\""), "{}", r.syndrome_text);
    assert!(r.score.value < 1.0);

    cfg.blacklist = BlacklistSpec {
        attributes: vec!["x".into()],
        conditions: vec![],
    };
    let r = fit(&ds, &index, &targets, &cfg).unwrap();
    assert!(r
        .syndrome
        .conjunctions()
        .iter()
        .flat_map(|c| c.conditions())
        .all(|c| c.attribute() != 0));
}

#[test]
fn category_filter_restricts_attributes() {
    let ds = mixed(1000, 20, 3);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let targets = random_targets(&index, 3);
    let mut cfg = config(0.01);
    cfg.categories = Some(vec!["2".into()]);
    let r = fit(&ds, &index, &targets, &cfg).unwrap();
    assert!(r
        .syndrome
        .conjunctions()
        .iter()
        .flat_map(|c| c.conditions())
        .all(|c| c.attribute() != 0));
}

fn check_invariants(ds: &Dataset, index: &TimeIndex, targets: &TargetSeries, cfg: &LearnerConfig, r: &FitReport) {
    let floor = cfg.min_support_count(ds.len());
    assert!(r.syndrome.len() <= cfg.max_rules);
    assert_eq!(r.trace.len(), r.syndrome.len());
    let mut prev = score_model(cfg.objective, targets.counts(), &vec![0; index.len()]).unwrap().value;
    for (conj, t) in r.syndrome.conjunctions().iter().zip(&r.trace) {
        assert!(conj.coverage(ds).count() >= floor);
        assert_eq!(conj.coverage(ds).count(), t.support);
        if let Some(m) = cfg.max_conditions {
            assert!(conj.len() <= m);
        }
        assert_eq!(t.score_before, prev);
        assert!(t.score_after > t.score_before + cfg.improvement_epsilon);
        prev = t.score_after;
    }
    let counts = count_series(&r.syndrome, ds, index, cfg.semantics);
    assert_eq!(counts, r.counts);
    assert_eq!(r.score, score_model(cfg.objective, targets.counts(), counts.as_slice()).unwrap());
}

#[test]
fn deterministic_across_thread_counts() {
    let ds = mixed(3000, 60, 21);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let targets = random_targets(&index, 21);
    let cfg = config(0.005);
    let one = fit_with(&ds, &index, &targets, &cfg, Some(1), |_| {}).unwrap();
    let four = fit_with(&ds, &index, &targets, &cfg, Some(4), |_| {}).unwrap();
    assert_eq!(one.to_json(), four.to_json());
    check_invariants(&ds, &index, &targets, &cfg, &one);
}

#[test]
fn progress_sees_every_entry() {
    let ds = mixed(1000, 30, 8);
    let index = TimeIndex::spanning(&ds, Granularity::Daily);
    let targets = random_targets(&index, 8);
    let mut seen = Vec::new();
    let r = fit_with(&ds, &index, &targets, &config(0.01), None, |e| seen.push(e.clone())).unwrap();
    assert_eq!(seen, r.trace);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fits_respect_constraints(
        seed in 0u64..1000,
        max_rules in 1usize..4,
        max_conditions in proptest::option::of(1usize..3),
        s in 0.005f64..0.2,
        additive in any::<bool>(),
        objective in prop_oneof![
            Just(ObjectiveKind::Pearson),
            Just(ObjectiveKind::Spearman),
            Just(ObjectiveKind::Kendall)
        ],
    ) {
        let ds = mixed(400, 20, seed);
        let index = TimeIndex::spanning(&ds, Granularity::Daily);
        let targets = random_targets(&index, seed ^ 1);
        let cfg = LearnerConfig {
            min_support: s,
            max_rules,
            max_conditions,
            objective,
            semantics: if additive { Semantics::Additive } else { Semantics::Disjunctive },
            ..LearnerConfig::default()
        };
        let r = fit(&ds, &index, &targets, &cfg).unwrap();
        check_invariants(&ds, &index, &targets, &cfg, &r);
        let text = r.syndrome_text.clone();
        let reparsed = crate::syndrome::parse_syndrome(&text, ds.schema()).unwrap();
        prop_assert_eq!(reparsed, r.syndrome);
    }
}
