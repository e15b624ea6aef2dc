// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

//! Random datasets, syndromes and a per-instance reference evaluator.

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::Rng;
use syndro_core::data::{Cell, Column, DiscreteColumn, NumericColumn};
use syndro_core::{
    AttributeKind, AttributeSchema, Condition, Conjunction, Dataset, Operator, Semantics, Syndrome, TimeIndex,
};

pub fn day(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 3, 1).unwrap() + chrono::Days::new(u64::from(d))
}

/// Mixed-kind dataset with missing cells.
pub fn random_dataset(rng: &mut impl Rng, n: usize, k: usize, days: u32) -> Dataset {
    let dates = (0..n).map(|_| day(rng.random_range(0..days))).collect();
    let mut schema = Vec::new();
    let mut columns = Vec::new();
    for a in 0..k {
        let missing = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.3) };
        if rng.random_bool(0.5) {
            let v = rng.random_range(1..6);
            let cells: Vec<Option<String>> = (0..n)
                .map(|_| (!rng.random_bool(missing)).then(|| format!("t{}", rng.random_range(0..v))))
                .collect();
            schema.push(AttributeSchema::new(format!("d{a}"), AttributeKind::Discrete));
            columns.push(Column::Discrete(DiscreteColumn::from_cells(&cells)));
        } else {
            let scale = [0.5, 1.0, 7.25][rng.random_range(0..3)];
            let v = rng.random_range(1..12);
            let cells: Vec<Option<f64>> = (0..n)
                .map(|_| (!rng.random_bool(missing)).then(|| f64::from(rng.random_range(0..v)) * scale - 3.0))
                .collect();
            schema.push(AttributeSchema::new(format!("n{a}"), AttributeKind::Numeric));
            columns.push(Column::Numeric(NumericColumn::from_cells(&cells).unwrap()));
        }
    }
    Dataset::new(schema, columns, dates).unwrap()
}

pub fn random_condition(rng: &mut impl Rng, ds: &Dataset) -> Condition {
    let a = rng.random_range(0..ds.schema().len());
    match ds.column(a) {
        Column::Discrete(c) => {
            let token = if c.tokens().is_empty() || rng.random_bool(0.1) {
                "absent".to_string()
            } else {
                c.tokens().choose(rng).unwrap().clone()
            };
            Condition::eq(ds.schema(), a, &token).unwrap()
        }
        Column::Numeric(_) => {
            let t = rng.random_range(-5.0..20.0f64);
            let t = (t * 4.0).round() / 4.0 - 0.125;
            if rng.random_bool(0.5) {
                Condition::le(ds.schema(), a, t).unwrap()
            } else {
                Condition::gt(ds.schema(), a, t).unwrap()
            }
        }
    }
}

pub fn random_conjunction(rng: &mut impl Rng, ds: &Dataset, max_len: usize) -> Conjunction {
    loop {
        let m = rng.random_range(1..=max_len);
        let conds = (0..m).map(|_| random_condition(rng, ds)).collect();
        if let Ok(c) = Conjunction::new(conds) {
            return c;
        }
    }
}

pub fn random_syndrome(rng: &mut impl Rng, ds: &Dataset, max_rules: usize, max_len: usize) -> Syndrome {
    let l = rng.random_range(0..=max_rules);
    Syndrome::new((0..l).map(|_| random_conjunction(rng, ds, max_len)).collect())
}

/// Condition semantics evaluated directly on the raw cell.
pub fn holds(ds: &Dataset, c: &Condition, n: usize) -> bool {
    match (ds.cell(c.attribute(), n), c.operator()) {
        (Cell::Missing, _) => false,
        (Cell::Token(t), Operator::Eq) => Some(t) == c.token(),
        (Cell::Number(x), Operator::Le) => x <= c.threshold().unwrap(),
        (Cell::Number(x), Operator::Gt) => x > c.threshold().unwrap(),
        _ => panic!("condition kind does not match cell"),
    }
}

pub fn conj_holds(ds: &Dataset, conj: &Conjunction, n: usize) -> bool {
    conj.conditions().iter().all(|c| holds(ds, c, n))
}

/// Per-bucket counts by looping over instances.
pub fn brute_counts(ds: &Dataset, index: &TimeIndex, s: &Syndrome, semantics: Semantics) -> Vec<u64> {
    let mut out = vec![0u64; index.len()];
    for n in 0..ds.len() {
        let Some(b) = index.bucket(n) else { continue };
        let hits = s.conjunctions().iter().filter(|c| conj_holds(ds, c, n)).count() as u64;
        out[b] += match semantics {
            Semantics::Disjunctive => u64::from(hits > 0),
            Semantics::Additive => hits,
        };
    }
    out
}
