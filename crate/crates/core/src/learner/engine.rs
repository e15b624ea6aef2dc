// SPDX-License-Identifier: Apache-2.0

//! Batch scoring of candidate conditions.
//!
//! One pass per attribute visits every instance of the current base set
//! once and builds, for each candidate on that attribute, its support and
//! the per-bucket counts it would add to the model. Numeric attributes are
//! swept in value order so `<=`/`>` thresholds share one running histogram.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::ops::Range;

use rayon::prelude::*;

use crate::data::{Candidate, Column, Condition, Dataset, Operator, TimeIndex, MISSING, NO_BUCKET};
use crate::objective::{Score, Scorer};
use crate::syndrome::{Conjunction, CoverageMask, Semantics};

const NO_SLOT: u32 = u32::MAX;

/// Instances a pass runs over.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Base<'a> {
    All,
    /// Ascending instance indices.
    Subset(&'a [u32]),
}

/// Current model as seen by a pass.
pub(crate) struct ModelView<'a> {
    pub mask: &'a CoverageMask,
    pub counts: &'a [u64],
}

/// A scored candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Scored {
    pub candidate: usize,
    pub support: u64,
    pub score: Score,
}

impl Scored {
    /// Higher score, then higher support, then earlier candidate.
    pub fn beats(&self, other: &Scored) -> bool {
        match self.score.value.total_cmp(&other.score.value) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => match self.support.cmp(&other.support) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => self.candidate < other.candidate,
            },
        }
    }
}

pub(crate) fn best_of(items: impl IntoIterator<Item = Scored>) -> Option<Scored> {
    items
        .into_iter()
        .fold(None, |best: Option<Scored>, s| match best {
            Some(b) if !s.beats(&b) => Some(b),
            _ => Some(s),
        })
}

/// Candidates on one attribute: a contiguous range of the candidate list.
struct Group {
    attribute: usize,
    range: Range<usize>,
    /// Discrete: code -> slot within `range`.
    slot_of_code: Vec<u32>,
    /// Numeric: ascending distinct boundaries with their `<=` and `>` candidates.
    boundaries: Vec<(u32, Option<usize>, Option<usize>)>,
}

/// Which refinements a growing conjunction still admits.
pub(crate) struct Admissible<'a> {
    members: HashSet<&'a Condition>,
    eq_attributes: HashSet<usize>,
    /// attribute -> (largest `>` threshold, smallest `<=` threshold)
    bounds: HashMap<usize, (f64, f64)>,
}

impl<'a> Admissible<'a> {
    pub fn new(conj: &'a Conjunction) -> Self {
        let mut adm = Admissible {
            members: HashSet::new(),
            eq_attributes: HashSet::new(),
            bounds: HashMap::new(),
        };
        for c in conj.conditions() {
            adm.members.insert(c);
            match c.operator() {
                Operator::Eq => {
                    adm.eq_attributes.insert(c.attribute());
                }
                op => {
                    let t = c.threshold().expect("numeric");
                    let b = adm
                        .bounds
                        .entry(c.attribute())
                        .or_insert((f64::NEG_INFINITY, f64::INFINITY));
                    if op == Operator::Gt {
                        b.0 = b.0.max(t);
                    } else {
                        b.1 = b.1.min(t);
                    }
                }
            }
        }
        adm
    }

    fn skips_attribute(&self, attribute: usize) -> bool {
        self.eq_attributes.contains(&attribute)
    }

    pub fn admits(&self, c: &Condition) -> bool {
        if self.members.contains(c) {
            return false;
        }
        match c.operator() {
            Operator::Eq => !self.eq_attributes.contains(&c.attribute()),
            op => {
                let t = c.threshold().expect("numeric");
                let (gt, le) = self
                    .bounds
                    .get(&c.attribute())
                    .copied()
                    .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                match op {
                    Operator::Le => t > gt,
                    _ => t < le,
                }
            }
        }
    }
}

/// Immutable scoring context shared by all passes of one fit.
pub(crate) struct Engine<'a> {
    dataset: &'a Dataset,
    buckets: &'a [u32],
    t: usize,
    scorer: &'a Scorer,
    semantics: Semantics,
    floor: u64,
    candidates: &'a [Candidate],
    groups: Vec<Group>,
}

impl<'a> Engine<'a> {
    pub fn new(
        dataset: &'a Dataset,
        index: &'a TimeIndex,
        scorer: &'a Scorer,
        semantics: Semantics,
        floor: u64,
        candidates: &'a [Candidate],
    ) -> Self {
        let mut groups: Vec<Group> = Vec::new();
        for (i, cand) in candidates.iter().enumerate() {
            let a = cand.condition.attribute();
            match groups.last_mut() {
                Some(g) if g.attribute == a => g.range.end = i + 1,
                _ => groups.push(Group {
                    attribute: a,
                    range: i..i + 1,
                    slot_of_code: Vec::new(),
                    boundaries: Vec::new(),
                }),
            }
        }
        for g in &mut groups {
            match dataset.column(g.attribute) {
                Column::Discrete(col) => {
                    g.slot_of_code = vec![NO_SLOT; col.tokens().len()];
                    for (slot, i) in g.range.clone().enumerate() {
                        g.slot_of_code[candidates[i].boundary as usize] = slot as u32;
                    }
                }
                Column::Numeric(_) => {
                    let mut map: std::collections::BTreeMap<u32, (Option<usize>, Option<usize>)> =
                        Default::default();
                    for i in g.range.clone() {
                        let e = map.entry(candidates[i].boundary).or_default();
                        if candidates[i].condition.operator() == Operator::Le {
                            e.0 = Some(i);
                        } else {
                            e.1 = Some(i);
                        }
                    }
                    g.boundaries = map.into_iter().map(|(b, (le, gt))| (b, le, gt)).collect();
                }
            }
        }
        Engine {
            dataset,
            buckets: index.buckets(),
            t: index.len(),
            scorer,
            semantics,
            floor,
            candidates,
            groups,
        }
    }

    pub fn candidates(&self) -> &[Candidate] {
        self.candidates
    }

    /// Scores every admissible candidate on `base` and hands each to `visit`.
    /// Candidates below the support floor are not visited.
    pub fn for_each(
        &self,
        base: Base<'_>,
        model: &ModelView<'_>,
        admissible: Option<&Admissible<'_>>,
        visit: &mut dyn FnMut(Scored),
    ) {
        for g in &self.groups {
            self.pass(g, base, model, admissible, visit);
        }
    }

    /// Best admissible candidate on `base`, evaluated attribute-parallel.
    pub fn best(
        &self,
        base: Base<'_>,
        model: &ModelView<'_>,
        admissible: Option<&Admissible<'_>>,
    ) -> Option<Scored> {
        let per_group: Vec<Option<Scored>> = self
            .groups
            .par_iter()
            .map(|g| {
                let mut best: Option<Scored> = None;
                self.pass(g, base, model, admissible, &mut |s| {
                    if best.as_ref().is_none_or(|b| s.beats(b)) {
                        best = Some(s);
                    }
                });
                best
            })
            .collect();
        best_of(per_group.into_iter().flatten())
    }

    #[inline]
    fn counts_toward_delta(&self, model: &ModelView<'_>, n: usize) -> bool {
        self.semantics == Semantics::Additive || !model.mask.contains(n)
    }

    fn pass(
        &self,
        g: &Group,
        base: Base<'_>,
        model: &ModelView<'_>,
        admissible: Option<&Admissible<'_>>,
        visit: &mut dyn FnMut(Scored),
    ) {
        if admissible.is_some_and(|a| a.skips_attribute(g.attribute)) {
            return;
        }
        match self.dataset.column(g.attribute) {
            Column::Discrete(col) => self.pass_discrete(g, col.codes(), base, model, admissible, visit),
            Column::Numeric(col) => self.pass_numeric(g, col, base, model, admissible, visit),
        }
    }

    fn pass_discrete(
        &self,
        g: &Group,
        codes: &[u32],
        base: Base<'_>,
        model: &ModelView<'_>,
        admissible: Option<&Admissible<'_>>,
        visit: &mut dyn FnMut(Scored),
    ) {
        let t = self.t;
        let k = g.range.len();
        let mut support = vec![0u64; k];
        let mut delta = vec![0u32; k * t];
        let mut add = |n: usize| {
            let code = codes[n];
            if code == MISSING {
                return;
            }
            let slot = g.slot_of_code[code as usize];
            if slot == NO_SLOT {
                return;
            }
            support[slot as usize] += 1;
            let b = self.buckets[n];
            if b != NO_BUCKET && self.counts_toward_delta(model, n) {
                delta[slot as usize * t + b as usize] += 1;
            }
        };
        match base {
            Base::All => (0..codes.len()).for_each(&mut add),
            Base::Subset(list) => list.iter().for_each(|&n| add(n as usize)),
        }
        let mut buf = Vec::new();
        for (slot, i) in g.range.clone().enumerate() {
            if support[slot] < self.floor {
                continue;
            }
            if admissible.is_some_and(|a| !a.admits(&self.candidates[i].condition)) {
                continue;
            }
            let score = self
                .scorer
                .score_sum(model.counts, &delta[slot * t..(slot + 1) * t], &mut buf);
            visit(Scored {
                candidate: i,
                support: support[slot],
                score,
            });
        }
    }

    fn pass_numeric(
        &self,
        g: &Group,
        col: &crate::data::NumericColumn,
        base: Base<'_>,
        model: &ModelView<'_>,
        admissible: Option<&Admissible<'_>>,
        visit: &mut dyn FnMut(Scored),
    ) {
        let t = self.t;
        let ranks = col.ranks();
        let sorted: Vec<u32> = match base {
            Base::All => col.order().to_vec(),
            Base::Subset(list) => {
                let mut v: Vec<u32> = list
                    .iter()
                    .copied()
                    .filter(|&n| ranks[n as usize] != MISSING)
                    .collect();
                v.sort_by_key(|&n| ranks[n as usize]);
                v
            }
        };
        let mut total = vec![0u32; t];
        for &n in &sorted {
            let b = self.buckets[n as usize];
            if b != NO_BUCKET && self.counts_toward_delta(model, n as usize) {
                total[b as usize] += 1;
            }
        }
        let total_support = sorted.len() as u64;

        let mut le = vec![0u32; t];
        let mut gt = vec![0u32; t];
        let mut le_support = 0u64;
        let mut pos = 0;
        let mut buf = Vec::new();
        for &(boundary, le_cand, gt_cand) in &g.boundaries {
            while pos < sorted.len() && ranks[sorted[pos] as usize] <= boundary {
                let n = sorted[pos] as usize;
                le_support += 1;
                let b = self.buckets[n];
                if b != NO_BUCKET && self.counts_toward_delta(model, n) {
                    le[b as usize] += 1;
                }
                pos += 1;
            }
            let admitted = |i: usize| admissible.is_none_or(|a| a.admits(&self.candidates[i].condition));
            if let Some(i) = le_cand {
                if le_support >= self.floor && admitted(i) {
                    let score = self.scorer.score_sum(model.counts, &le, &mut buf);
                    visit(Scored {
                        candidate: i,
                        support: le_support,
                        score,
                    });
                }
            }
            if let Some(i) = gt_cand {
                let support = total_support - le_support;
                if support >= self.floor && admitted(i) {
                    for ((g, &tot), &l) in gt.iter_mut().zip(&total).zip(&le) {
                        *g = tot - l;
                    }
                    let score = self.scorer.score_sum(model.counts, &gt, &mut buf);
                    visit(Scored {
                        candidate: i,
                        support,
                        score,
                    });
                }
            }
        }
    }
}
