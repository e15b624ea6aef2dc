// SPDX-License-Identifier: Apache-2.0

//! Greedy sequential induction of DNF syndromes.
//!
//! The outer loop starts from the empty model and appends one conjunction
//! per iteration. Each conjunction is grown by top-down hill climbing: the
//! best single condition (scored as model plus candidate) seeds it, and
//! conditions are appended while the score strictly improves. The fit stops
//! when no seed improves the model or `max_rules` conjunctions were added.

mod engine;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    enumerate_candidates, AttributeSchema, Blacklist, CandidateOptions, Dataset, TargetSeries,
    TimeIndex, NO_BUCKET,
};
use crate::objective::{score_model, ObjectiveError, ObjectiveKind, Score, Scorer};
use crate::syndrome::{
    format_syndrome, parse_condition, Conjunction, CountSeries, CoverageMask, DslError, Semantics,
    Syndrome,
};

use engine::{Admissible, Base, Engine, ModelView};

pub const DEFAULT_MIN_SUPPORT: f64 = 0.0001;
pub const DEFAULT_MAX_RULES: usize = 50;
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("min-support must be in (0,1)")]
    MinSupport,
    #[error("max-rules must be at least 1")]
    MaxRules,
    #[error("max-conditions must be at least 1")]
    MaxConditions,
    #[error("improvement epsilon must be finite and non-negative")]
    Epsilon,
    #[error("blacklisted attribute `{0}` is not in the schema")]
    UnknownAttribute(String),
    #[error("blacklisted condition `{text}`: {source}")]
    Condition {
        text: String,
        #[source]
        source: DslError,
    },
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("time index has {index} buckets but target series has {targets}")]
    Misaligned { index: usize, targets: usize },
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
}

/// Blacklist as names and DSL condition texts, resolved against a schema
/// at fit time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlacklistSpec {
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default)]
    pub conditions: Vec<String>,
}

impl BlacklistSpec {
    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty() && self.conditions.is_empty()
    }

    pub fn resolve(&self, schema: &[AttributeSchema]) -> Result<Blacklist, ConfigError> {
        let mut blacklist = Blacklist::new();
        for name in &self.attributes {
            let a = schema
                .iter()
                .position(|s| &s.name == name)
                .ok_or_else(|| ConfigError::UnknownAttribute(name.clone()))?;
            blacklist.insert_attribute(a);
        }
        for text in &self.conditions {
            let c = parse_condition(text, schema).map_err(|source| ConfigError::Condition {
                text: text.clone(),
                source,
            })?;
            blacklist.insert_condition(c);
        }
        Ok(blacklist)
    }

    /// Reads one entry per line: a condition if the line contains an
    /// operator, an attribute name otherwise. `#` starts a comment.
    pub fn parse_lines(text: &str) -> Self {
        let mut spec = BlacklistSpec::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.contains(['=', '>', '<']) {
                spec.conditions.push(line.to_owned());
            } else {
                spec.attributes.push(line.trim_matches('"').to_owned());
            }
        }
        spec
    }
}

/// Search parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// Fraction of all instances every conjunction must cover.
    pub min_support: f64,
    /// Upper bound on the number of conjunctions.
    pub max_rules: usize,
    /// Upper bound on conditions per conjunction; `None` is unlimited.
    pub max_conditions: Option<usize>,
    pub objective: ObjectiveKind,
    pub semantics: Semantics,
    pub improvement_epsilon: f64,
    pub blacklist: BlacklistSpec,
    /// Restrict candidates to these schema categories.
    pub categories: Option<Vec<String>>,
    /// Equal-frequency cap on thresholds per numeric attribute.
    pub max_thresholds: Option<usize>,
    /// Recorded for reproducibility; the search itself is deterministic.
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            min_support: DEFAULT_MIN_SUPPORT,
            max_rules: DEFAULT_MAX_RULES,
            max_conditions: None,
            objective: ObjectiveKind::Pearson,
            semantics: Semantics::Disjunctive,
            improvement_epsilon: DEFAULT_EPSILON,
            blacklist: BlacklistSpec::default(),
            categories: None,
            max_thresholds: None,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.min_support > 0.0 && self.min_support < 1.0) {
            return Err(ConfigError::MinSupport);
        }
        if self.max_rules == 0 {
            return Err(ConfigError::MaxRules);
        }
        if self.max_conditions == Some(0) {
            return Err(ConfigError::MaxConditions);
        }
        if !(self.improvement_epsilon.is_finite() && self.improvement_epsilon >= 0.0) {
            return Err(ConfigError::Epsilon);
        }
        Ok(())
    }

    /// Absolute support floor `ceil(N * s)`.
    pub fn min_support_count(&self, n_instances: usize) -> u64 {
        min_support_count(n_instances, self.min_support)
    }

    pub fn candidate_options(&self, schema: &[AttributeSchema]) -> Result<CandidateOptions, ConfigError> {
        Ok(CandidateOptions {
            blacklist: self.blacklist.resolve(schema)?,
            categories: self
                .categories
                .as_ref()
                .map(|c| c.iter().cloned().collect::<BTreeSet<_>>()),
            max_thresholds: self.max_thresholds,
        })
    }
}

/// `ceil(n * s)`, treating products within 1e-9 (relative) of an integer as
/// that integer so decimal fractions like 0.0001 resolve as written.
pub fn min_support_count(n_instances: usize, min_support: f64) -> u64 {
    let x = n_instances as f64 * min_support;
    let nearest = x.round();
    let floor = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (floor as u64).max(1)
}

/// One accepted conjunction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub conjunction: String,
    pub conditions: Vec<String>,
    /// Instances covered by the conjunction.
    pub support: u64,
    /// Covered instances not covered by earlier conjunctions.
    pub newly_covered: u64,
    pub score_before: f64,
    pub score_after: f64,
}

/// Outcome of a fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    /// Canonical DSL text of the learned syndrome.
    #[serde(rename = "syndrome")]
    pub syndrome_text: String,
    #[serde(skip)]
    pub syndrome: Syndrome,
    pub trace: Vec<TraceEntry>,
    pub score: Score,
    pub labels: Vec<String>,
    pub targets: Vec<u64>,
    pub counts: CountSeries,
    pub n_instances: usize,
    pub dropped_instances: usize,
    pub min_support_count: u64,
    pub n_candidates: usize,
    pub config: LearnerConfig,
    /// Not serialized, so that reports of identical runs are identical.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl FitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct ModelState {
    mask: CoverageMask,
    counts: Vec<u64>,
    score: Score,
}

impl ModelState {
    fn view(&self) -> ModelView<'_> {
        ModelView {
            mask: &self.mask,
            counts: &self.counts,
        }
    }
}

/// A grown conjunction with its score as part of the model.
#[derive(Debug, Clone)]
pub struct Grown {
    pub conjunction: Conjunction,
    pub score: Score,
    pub support: u64,
}

struct Search<'a> {
    dataset: &'a Dataset,
    index: &'a TimeIndex,
    scorer: &'a Scorer,
    engine: Engine<'a>,
    config: &'a LearnerConfig,
}

impl Search<'_> {
    fn grow(&self, model: &ModelState) -> Option<Grown> {
        let eps = self.config.improvement_epsilon;
        let view = model.view();
        let seed = self.engine.best(Base::All, &view, None)?;
        if !(seed.score.value > model.score.value + eps) {
            return None;
        }
        let mut best = seed;
        let first = self.engine.candidates()[seed.candidate].condition.clone();
        let matcher = first.matcher(self.dataset);
        let mut base: Vec<u32> = (0..self.dataset.len() as u32)
            .filter(|&n| matcher.test(n as usize))
            .collect();
        let mut conjunction = Conjunction::single(first);
        while self.config.max_conditions.is_none_or(|m| conjunction.len() < m) {
            let admissible = Admissible::new(&conjunction);
            let Some(next) = self.engine.best(Base::Subset(&base), &view, Some(&admissible)) else {
                break;
            };
            if !(next.score.value > best.score.value + eps) {
                break;
            }
            let condition = self.engine.candidates()[next.candidate].condition.clone();
            let matcher = condition.matcher(self.dataset);
            base.retain(|&n| matcher.test(n as usize));
            conjunction = conjunction
                .with(condition)
                .expect("admissible refinement keeps the conjunction valid");
            best = next;
        }
        debug_assert_eq!(base.len() as u64, best.support);
        Some(Grown {
            conjunction,
            score: best.score,
            support: best.support,
        })
    }
}

fn check_alignment(index: &TimeIndex, targets: &TargetSeries) -> Result<(), FitError> {
    if index.len() != targets.len() {
        return Err(FitError::Misaligned {
            index: index.len(),
            targets: targets.len(),
        });
    }
    Ok(())
}

/// Learns a syndrome whose count series correlates with `targets`.
pub fn fit(
    dataset: &Dataset,
    index: &TimeIndex,
    targets: &TargetSeries,
    config: &LearnerConfig,
) -> Result<FitReport, FitError> {
    fit_with(dataset, index, targets, config, None, |_| {})
}

/// [`fit`] on a dedicated pool of `threads` workers (the global pool when
/// `None`), reporting each accepted conjunction to `progress`. The result
/// does not depend on the thread count.
pub fn fit_with(
    dataset: &Dataset,
    index: &TimeIndex,
    targets: &TargetSeries,
    config: &LearnerConfig,
    threads: Option<usize>,
    progress: impl FnMut(&TraceEntry) + Send,
) -> Result<FitReport, FitError> {
    match threads {
        None => fit_inner(dataset, index, targets, config, progress),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| FitError::ThreadPool(e.to_string()))?
            .install(|| fit_inner(dataset, index, targets, config, progress)),
    }
}

fn fit_inner(
    dataset: &Dataset,
    index: &TimeIndex,
    targets: &TargetSeries,
    config: &LearnerConfig,
    mut progress: impl FnMut(&TraceEntry),
) -> Result<FitReport, FitError> {
    let started = Instant::now();
    config.validate()?;
    check_alignment(index, targets)?;
    let scorer = Scorer::new(config.objective, targets.counts())?;
    let floor = config.min_support_count(dataset.len());
    let options = config.candidate_options(dataset.schema())?;
    let candidates = enumerate_candidates(dataset, floor, &options);
    let engine = Engine::new(dataset, index, &scorer, config.semantics, floor, &candidates);
    let search = Search {
        dataset,
        index,
        scorer: &scorer,
        engine,
        config,
    };

    let mut model = ModelState {
        mask: CoverageMask::empty(dataset.len()),
        counts: vec![0; index.len()],
        score: scorer.score(&vec![0; index.len()]),
    };
    let mut syndrome = Syndrome::empty();
    let mut trace = Vec::new();
    let schema = dataset.schema();

    while syndrome.len() < config.max_rules {
        let Some(grown) = search.grow(&model) else {
            break;
        };
        let mask = grown.conjunction.coverage(dataset);
        let fresh = mask.difference(&model.mask);
        let added = match config.semantics {
            Semantics::Disjunctive => &fresh,
            Semantics::Additive => &mask,
        };
        let buckets = search.index.buckets();
        for n in added.iter() {
            let b = buckets[n];
            if b != NO_BUCKET {
                model.counts[b as usize] += 1;
            }
        }
        model.mask.union_with(&mask);
        let score_before = model.score;
        model.score = search.scorer.score(&model.counts);
        debug_assert_eq!(model.score, grown.score);

        let entry = TraceEntry {
            conjunction: format_syndrome(&Syndrome::new(vec![grown.conjunction.clone()]), schema),
            conditions: grown
                .conjunction
                .conditions()
                .iter()
                .map(|c| c.display(schema).to_string())
                .collect(),
            support: grown.support,
            newly_covered: fresh.count(),
            score_before: score_before.value,
            score_after: model.score.value,
        };
        progress(&entry);
        trace.push(entry);
        syndrome.push(grown.conjunction);
    }

    Ok(FitReport {
        syndrome_text: format_syndrome(&syndrome, schema),
        syndrome,
        trace,
        score: model.score,
        labels: index.labels().to_vec(),
        targets: targets.counts().to_vec(),
        counts: CountSeries(model.counts),
        n_instances: dataset.len(),
        dropped_instances: index.dropped(),
        min_support_count: floor,
        n_candidates: candidates.len(),
        config: config.clone(),
        wall_time: started.elapsed(),
    })
}

/// Grows one conjunction against an existing model, or `None` when no
/// single condition improves the model's score.
pub fn grow_conjunction(
    dataset: &Dataset,
    index: &TimeIndex,
    targets: &TargetSeries,
    current_mask: &CoverageMask,
    current_counts: &CountSeries,
    config: &LearnerConfig,
) -> Result<Option<Grown>, FitError> {
    config.validate()?;
    check_alignment(index, targets)?;
    let scorer = Scorer::new(config.objective, targets.counts())?;
    let floor = config.min_support_count(dataset.len());
    let options = config.candidate_options(dataset.schema())?;
    let candidates = enumerate_candidates(dataset, floor, &options);
    let engine = Engine::new(dataset, index, &scorer, config.semantics, floor, &candidates);
    let search = Search {
        dataset,
        index,
        scorer: &scorer,
        engine,
        config,
    };
    let model = ModelState {
        mask: current_mask.clone(),
        counts: current_counts.0.clone(),
        score: scorer.score(&current_counts.0),
    };
    Ok(search.grow(&model))
}

/// Score of the model after adding a candidate conjunction's coverage.
/// Pure: the current model is not modified.
pub fn evaluate_candidate(
    current_counts: &CountSeries,
    current_mask: &CoverageMask,
    candidate_mask: &CoverageMask,
    index: &TimeIndex,
    targets: &TargetSeries,
    semantics: Semantics,
    objective: ObjectiveKind,
) -> Result<Score, ObjectiveError> {
    let mut counts = current_counts.clone();
    match semantics {
        Semantics::Disjunctive => counts.add_mask(&candidate_mask.difference(current_mask), index),
        Semantics::Additive => counts.add_mask(candidate_mask, index),
    }
    score_model(objective, targets.counts(), counts.as_slice())
}

/// Every candidate condition with its support and score as a single-condition
/// extension of the given model, in candidate order. Exposed for inspection
/// and testing of the batch scorer.
pub fn score_candidates(
    dataset: &Dataset,
    index: &TimeIndex,
    targets: &TargetSeries,
    current_mask: &CoverageMask,
    current_counts: &CountSeries,
    config: &LearnerConfig,
) -> Result<Vec<(crate::data::Condition, u64, Score)>, FitError> {
    config.validate()?;
    check_alignment(index, targets)?;
    let scorer = Scorer::new(config.objective, targets.counts())?;
    let floor = config.min_support_count(dataset.len());
    let options = config.candidate_options(dataset.schema())?;
    let candidates = enumerate_candidates(dataset, floor, &options);
    let engine = Engine::new(dataset, index, &scorer, config.semantics, floor, &candidates);
    let view = ModelView {
        mask: current_mask,
        counts: &current_counts.0,
    };
    let mut out = Vec::new();
    engine.for_each(Base::All, &view, None, &mut |s| {
        out.push((candidates[s.candidate].condition.clone(), s.support, s.score));
    });
    out.sort_by_key(|(c, _, _)| c.clone());
    Ok(out)
}

#[cfg(test)]
mod tests;
