// SPDX-License-Identifier: Apache-2.0

//! Syndromes in disjunctive normal form and their per-bucket case counts.

pub(crate) mod dsl;
mod mask;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{AttributeSchema, Condition, Dataset, Operator, TimeIndex, NO_BUCKET};

pub use dsl::{format_syndrome, parse_condition, parse_syndrome, DslError};
pub use mask::CoverageMask;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyndromeError {
    #[error("a conjunction needs at least one condition")]
    EmptyConjunction,
    #[error("condition appears twice in one conjunction")]
    DuplicateCondition,
    #[error("two equality conditions on the same attribute")]
    ConflictingEquality,
    #[error("numeric bounds on one attribute exclude every value")]
    ContradictoryBounds,
}

/// How overlapping conjunctions are counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    /// An instance counts once if any conjunction covers it.
    #[default]
    Disjunctive,
    /// An instance counts once per covering conjunction.
    Additive,
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Semantics::Disjunctive => "disjunctive",
            Semantics::Additive => "additive",
        })
    }
}

impl FromStr for Semantics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disjunctive" => Ok(Semantics::Disjunctive),
            "additive" => Ok(Semantics::Additive),
            other => Err(format!("unknown semantics `{other}` (disjunctive, additive)")),
        }
    }
}

/// AND of conditions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conjunction {
    conditions: Vec<Condition>,
}

impl Conjunction {
    pub fn new(conditions: Vec<Condition>) -> Result<Self, SyndromeError> {
        if conditions.is_empty() {
            return Err(SyndromeError::EmptyConjunction);
        }
        let conj = Conjunction { conditions };
        conj.validate()?;
        Ok(conj)
    }

    pub fn single(condition: Condition) -> Self {
        Conjunction {
            conditions: vec![condition],
        }
    }

    fn validate(&self) -> Result<(), SyndromeError> {
        let mut seen = HashSet::new();
        let mut eq_attrs = HashSet::new();
        // attribute -> (largest `>` threshold, smallest `<=` threshold)
        let mut bounds: HashMap<usize, (f64, f64)> = HashMap::new();
        for c in &self.conditions {
            if !seen.insert(c) {
                return Err(SyndromeError::DuplicateCondition);
            }
            match c.operator() {
                Operator::Eq => {
                    if !eq_attrs.insert(c.attribute()) {
                        return Err(SyndromeError::ConflictingEquality);
                    }
                }
                op => {
                    let t = c.threshold().expect("numeric condition");
                    let b = bounds
                        .entry(c.attribute())
                        .or_insert((f64::NEG_INFINITY, f64::INFINITY));
                    if op == Operator::Gt {
                        b.0 = b.0.max(t);
                    } else {
                        b.1 = b.1.min(t);
                    }
                    if b.1 <= b.0 {
                        return Err(SyndromeError::ContradictoryBounds);
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether appending `condition` keeps the conjunction valid.
    pub fn admits(&self, condition: &Condition) -> bool {
        let mut conditions = self.conditions.clone();
        conditions.push(condition.clone());
        Conjunction { conditions }.validate().is_ok()
    }

    pub fn with(&self, condition: Condition) -> Result<Self, SyndromeError> {
        let mut conditions = self.conditions.clone();
        conditions.push(condition);
        Conjunction::new(conditions)
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    /// Instances satisfying every condition.
    pub fn coverage(&self, dataset: &Dataset) -> CoverageMask {
        let matchers: Vec<_> = self.conditions.iter().map(|c| c.matcher(dataset)).collect();
        CoverageMask::from_fn(dataset.len(), |n| matchers.iter().all(|m| m.test(n)))
    }

    /// Order-insensitive view, for structural comparison.
    pub fn condition_set(&self) -> BTreeSet<&Condition> {
        self.conditions.iter().collect()
    }
}

/// OR of conjunctions, in induction order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Syndrome {
    conjunctions: Vec<Conjunction>,
}

impl Syndrome {
    pub fn new(conjunctions: Vec<Conjunction>) -> Self {
        Syndrome { conjunctions }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, conjunction: Conjunction) {
        self.conjunctions.push(conjunction);
    }

    pub fn conjunctions(&self) -> &[Conjunction] {
        &self.conjunctions
    }

    pub fn len(&self) -> usize {
        self.conjunctions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conjunctions.is_empty()
    }

    /// Instances covered by at least one conjunction.
    pub fn coverage(&self, dataset: &Dataset) -> CoverageMask {
        let mut mask = CoverageMask::empty(dataset.len());
        for conj in &self.conjunctions {
            mask.union_with(&conj.coverage(dataset));
        }
        mask
    }

    /// Set-of-sets view ignoring condition and conjunction order.
    pub fn structure(&self) -> BTreeSet<BTreeSet<&Condition>> {
        self.conjunctions.iter().map(Conjunction::condition_set).collect()
    }

    /// Equality as sets of sets of conditions.
    pub fn same_indicators(&self, other: &Syndrome) -> bool {
        self.structure() == other.structure()
    }

    pub fn display<'a>(&'a self, schema: &'a [AttributeSchema]) -> impl fmt::Display + 'a {
        dsl::SyndromeDisplay { syndrome: self, schema }
    }
}

/// Estimated cases per bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountSeries(pub Vec<u64>);

impl CountSeries {
    pub fn zeros(len: usize) -> Self {
        CountSeries(vec![0; len])
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Adds one per covered instance to its bucket.
    pub fn add_mask(&mut self, mask: &CoverageMask, index: &TimeIndex) {
        let buckets = index.buckets();
        for n in mask.iter() {
            let b = buckets[n];
            if b != NO_BUCKET {
                self.0[b as usize] += 1;
            }
        }
    }

    pub fn of_mask(mask: &CoverageMask, index: &TimeIndex) -> Self {
        let mut series = Self::zeros(index.len());
        series.add_mask(mask, index);
        series
    }
}

/// Instances covered by a conjunction.
pub fn coverage(conjunction: &Conjunction, dataset: &Dataset) -> CoverageMask {
    conjunction.coverage(dataset)
}

/// Per-bucket case counts estimated by a syndrome.
pub fn count_series(
    syndrome: &Syndrome,
    dataset: &Dataset,
    index: &TimeIndex,
    semantics: Semantics,
) -> CountSeries {
    match semantics {
        Semantics::Disjunctive => CountSeries::of_mask(&syndrome.coverage(dataset), index),
        Semantics::Additive => {
            let mut series = CountSeries::zeros(index.len());
            for conj in syndrome.conjunctions() {
                series.add_mask(&conj.coverage(dataset), index);
            }
            series
        }
    }
}
