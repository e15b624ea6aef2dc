// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use super::{Column, Condition, ConditionValue, Dataset, Operator, MISSING};

/// Indicators excluded from the search, either whole attributes or single
/// conditions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blacklist {
    attributes: BTreeSet<usize>,
    conditions: BTreeSet<Condition>,
}

impl Blacklist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_attribute(mut self, attribute: usize) -> Self {
        self.attributes.insert(attribute);
        self
    }

    pub fn with_condition(mut self, condition: Condition) -> Self {
        self.conditions.insert(condition);
        self
    }

    pub fn insert_attribute(&mut self, attribute: usize) {
        self.attributes.insert(attribute);
    }

    pub fn insert_condition(&mut self, condition: Condition) {
        self.conditions.insert(condition);
    }

    pub fn attributes(&self) -> impl Iterator<Item = usize> + '_ {
        self.attributes.iter().copied()
    }

    pub fn conditions(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty() && self.conditions.is_empty()
    }

    pub fn blocks(&self, condition: &Condition) -> bool {
        self.attributes.contains(&condition.attribute()) || self.conditions.contains(condition)
    }
}

/// Filters applied while enumerating candidate indicators.
#[derive(Debug, Clone, Default)]
pub struct CandidateOptions {
    pub blacklist: Blacklist,
    /// Restrict to attributes whose schema category is in this set.
    pub categories: Option<BTreeSet<String>>,
    /// Equal-frequency cap on the number of thresholds per numeric column.
    pub max_thresholds: Option<usize>,
}

/// A candidate together with its global support and, for numeric
/// conditions, the rank boundary it splits at (`<=` covers ranks `0..=boundary`).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Candidate {
    pub condition: Condition,
    pub support: u64,
    pub boundary: u32,
}

/// Every admissible indicator in (attribute, operator, value) order.
///
/// Discrete attributes yield one equality per observed token. Numeric
/// attributes yield `<=` and `>` at the midpoints between adjacent distinct
/// observed values. Conditions covering fewer than `min_support_count`
/// instances, blacklisted ones, and attributes flagged `blacklisted` in the
/// schema are left out.
pub fn candidate_conditions(
    dataset: &Dataset,
    min_support_count: u64,
    options: &CandidateOptions,
) -> Vec<Condition> {
    enumerate(dataset, min_support_count, options)
        .into_iter()
        .map(|c| c.condition)
        .collect()
}

pub(crate) fn enumerate(
    dataset: &Dataset,
    min_support_count: u64,
    options: &CandidateOptions,
) -> Vec<Candidate> {
    let min_support = min_support_count.max(1);
    let mut out = Vec::new();
    for (a, (attr, column)) in dataset.schema().iter().zip(dataset.columns()).enumerate() {
        if attr.blacklisted || options.blacklist.attributes.contains(&a) {
            continue;
        }
        if let Some(categories) = &options.categories {
            if !attr.category.as_ref().is_some_and(|c| categories.contains(c)) {
                continue;
            }
        }
        let start = out.len();
        match column {
            Column::Discrete(col) => {
                let mut support = vec![0u64; col.tokens().len()];
                for &code in col.codes() {
                    if code != MISSING {
                        support[code as usize] += 1;
                    }
                }
                for (code, token) in col.tokens().iter().enumerate() {
                    out.push(Candidate {
                        condition: Condition::new_unchecked(
                            a,
                            Operator::Eq,
                            ConditionValue::Token(token.clone()),
                        ),
                        support: support[code],
                        boundary: code as u32,
                    });
                }
            }
            Column::Numeric(col) => {
                let distinct = col.distinct();
                if distinct.len() < 2 {
                    continue;
                }
                let mut per_rank = vec![0u64; distinct.len()];
                for &r in col.ranks() {
                    if r != MISSING {
                        per_rank[r as usize] += 1;
                    }
                }
                let total: u64 = per_rank.iter().sum();
                let mut prefix = Vec::with_capacity(distinct.len());
                let mut acc = 0;
                for &c in &per_rank {
                    acc += c;
                    prefix.push(acc);
                }
                let boundaries = select_boundaries(&prefix, options.max_thresholds);
                for op in [Operator::Le, Operator::Gt] {
                    for &i in &boundaries {
                        let threshold = midpoint(distinct[i], distinct[i + 1]);
                        let support = match op {
                            Operator::Le => prefix[i],
                            _ => total - prefix[i],
                        };
                        out.push(Candidate {
                            condition: Condition::new_unchecked(
                                a,
                                op,
                                ConditionValue::Number(threshold),
                            ),
                            support,
                            boundary: i as u32,
                        });
                    }
                }
            }
        }
        let mut kept = start;
        for i in start..out.len() {
            if out[i].support >= min_support && !options.blacklist.blocks(&out[i].condition) {
                out.swap(kept, i);
                kept += 1;
            }
        }
        out.truncate(kept);
    }
    out
}

/// Boundaries `i` (split between distinct values `i` and `i + 1`). With a
/// cap, boundaries are placed at equal-frequency quantiles of the observed
/// values.
fn select_boundaries(prefix: &[u64], cap: Option<usize>) -> Vec<usize> {
    let all = prefix.len() - 1;
    match cap {
        Some(cap) if cap < all => {
            let total = *prefix.last().unwrap();
            let mut picked: Vec<usize> = (1..=cap as u64)
                .map(|j| {
                    let target = j * total / (cap as u64 + 1);
                    prefix.partition_point(|&p| p < target.max(1)).min(all - 1)
                })
                .collect();
            picked.dedup();
            picked
        }
        _ => (0..all).collect(),
    }
}

/// A threshold `m` with `lo <= m < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo / 2.0 + hi / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}
