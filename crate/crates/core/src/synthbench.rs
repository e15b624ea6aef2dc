// SPDX-License-Identifier: Apache-2.0

//! Reconstruction benchmark on synthetic data.
//!
//! A syndrome is planted in a synthetic dataset, its count series becomes
//! the target, and the learner has to recover exactly the planted
//! indicators from the correlation signal alone.
//!
//! Synthetic attributes are discrete and independent, with Zipf-distributed
//! token frequencies and uniformly spread dates. Token rates can optionally
//! be jittered per day by independent log-normal factors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    candidate_conditions, date_range, AttributeKind, AttributeSchema, CandidateOptions, Column, Condition,
    Dataset, DiscreteColumn, Granularity, TargetSeries, TimeIndex,
};
use crate::learner::{fit, FitError, LearnerConfig};
use crate::objective::pearson_abs;
use crate::syndrome::{count_series, format_syndrome, Conjunction, CoverageMask, Semantics, Syndrome};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("could not sample a {kind} syndrome of size {size} with support >= {min_support} after {attempts} attempts")]
    Exhausted {
        kind: SyndromeType,
        size: usize,
        min_support: u64,
        attempts: usize,
    },
    #[error("size {size} is outside the range {lo}..={hi} for {kind} syndromes")]
    BadSize {
        kind: SyndromeType,
        size: usize,
        lo: usize,
        hi: usize,
    },
    #[error("reconstruction rate of an empty result list")]
    NoResults,
    #[error("invalid synthetic data parameters: {0}")]
    Parameters(String),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Shape of a planted syndrome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyndromeType {
    /// `c1 AND ... AND cM`, M in 2..=3.
    And,
    /// `c1 OR ... OR cL`, L in 2..=9.
    Or,
    /// L two-condition conjunctions, L in 2..=5.
    AndOr,
}

impl SyndromeType {
    pub const ALL: [SyndromeType; 3] = [SyndromeType::And, SyndromeType::Or, SyndromeType::AndOr];

    /// Admissible size parameter (M for AND, L otherwise).
    pub fn size_range(self) -> (usize, usize) {
        match self {
            SyndromeType::And => (2, 3),
            SyndromeType::Or => (2, 9),
            SyndromeType::AndOr => (2, 5),
        }
    }
}

impl fmt::Display for SyndromeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyndromeType::And => "and",
            SyndromeType::Or => "or",
            SyndromeType::AndOr => "and-or",
        })
    }
}

impl FromStr for SyndromeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "and" => Ok(SyndromeType::And),
            "or" => Ok(SyndromeType::Or),
            "and-or" | "andor" => Ok(SyndromeType::AndOr),
            other => Err(format!("unknown syndrome type `{other}` (and, or, and-or)")),
        }
    }
}

/// Parameters of the synthetic instance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataConfig {
    pub n_instances: usize,
    pub n_attributes: usize,
    pub n_values: usize,
    pub start: NaiveDate,
    pub days: u32,
    /// Exponent of the Zipf token distribution.
    pub zipf_exponent: f64,
    /// Standard deviation of the per-day log-normal rate factor; 0 disables it.
    pub daily_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticDataConfig {
    fn default() -> Self {
        SyntheticDataConfig {
            n_instances: 100_000,
            n_attributes: 30,
            n_values: 20,
            start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            days: 365,
            zipf_exponent: 1.0,
            daily_jitter: 0.0,
            seed: 1,
        }
    }
}

fn token_name(k: usize, width: usize) -> String {
    format!("v{k:0width$}")
}

/// Discrete-only synthetic dataset; deterministic in `config.seed`.
pub fn gen_synthetic_dataset(config: &SyntheticDataConfig) -> Result<Dataset, BenchError> {
    let SyntheticDataConfig {
        n_instances: n,
        n_attributes: k,
        n_values: v,
        days,
        ..
    } = *config;
    if n == 0 || k == 0 || v == 0 || days == 0 {
        return Err(BenchError::Parameters("all sizes must be at least 1".into()));
    }
    if !(config.daily_jitter.is_finite() && config.daily_jitter >= 0.0 && config.zipf_exponent.is_finite()) {
        return Err(BenchError::Parameters("jitter and exponent must be finite, jitter >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let day_of: Vec<u32> = (0..n).map(|_| rng.random_range(0..days)).collect();
    let calendar: Vec<NaiveDate> = date_range(config.start, days).collect();
    let dates: Vec<NaiveDate> = day_of.iter().map(|&d| calendar[d as usize]).collect();

    let width = (v.max(2) - 1).to_string().len().max(2);
    let tokens: Vec<String> = (0..v).map(|i| token_name(i, width)).collect();
    let base: Vec<f64> = (0..v).map(|i| ((i + 1) as f64).powf(-config.zipf_exponent)).collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let sigma = config.daily_jitter;

    let mut schema = Vec::with_capacity(k);
    let mut columns = Vec::with_capacity(k);
    let name_width = (k.max(2) - 1).to_string().len().max(2);
    let mut cumulative = vec![0.0f64; days as usize * v];
    for a in 0..k {
        for d in 0..days as usize {
            let row = &mut cumulative[d * v..(d + 1) * v];
            let mut acc = 0.0;
            for (i, w) in base.iter().enumerate() {
                let factor = if sigma > 0.0 {
                    (sigma * normal.sample(&mut rng) - sigma * sigma / 2.0).exp()
                } else {
                    1.0
                };
                acc += w * factor;
                row[i] = acc;
            }
        }
        let codes: Vec<u32> = day_of
            .iter()
            .map(|&d| {
                let row = &cumulative[d as usize * v..(d as usize + 1) * v];
                let u = rng.random::<f64>() * row[v - 1];
                row.partition_point(|&c| c <= u).min(v - 1) as u32
            })
            .collect();
        schema.push(
            AttributeSchema::new(format!("a{a:0name_width$}"), AttributeKind::Discrete).with_category("1"),
        );
        columns.push(Column::Discrete(
            DiscreteColumn::from_codes(tokens.clone(), codes).expect("codes within dictionary"),
        ));
    }
    Dataset::new(schema, columns, dates).map_err(|e| BenchError::Parameters(e.to_string()))
}

/// What to plant and how to evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyndromeType,
    /// M for AND, L otherwise; sampled uniformly from the type's range when `None`.
    pub size: Option<usize>,
    pub min_indicator_support: u64,
    pub trials: usize,
    pub granularity: Granularity,
    pub seed: u64,
    /// Mean of additive Poisson noise on the target counts; off when `None`.
    pub noise: Option<f64>,
}

impl SyntheticSpec {
    pub fn new(kind: SyndromeType) -> Self {
        SyntheticSpec {
            kind,
            size: None,
            min_indicator_support: 200,
            trials: 100,
            granularity: Granularity::Daily,
            seed: 0,
            noise: None,
        }
    }
}

const MAX_ATTEMPTS: usize = 2_000;

struct IndicatorPool<'a> {
    dataset: &'a Dataset,
    conditions: Vec<Condition>,
    masks: Vec<CoverageMask>,
}

impl<'a> IndicatorPool<'a> {
    fn new(dataset: &'a Dataset, min_support: u64) -> Self {
        let conditions: Vec<Condition> =
            candidate_conditions(dataset, min_support, &CandidateOptions::default())
                .into_iter()
                .filter(|c| dataset.schema()[c.attribute()].kind == AttributeKind::Discrete)
                .collect();
        let masks = conditions
            .iter()
            .map(|c| Conjunction::single(c.clone()).coverage(dataset))
            .collect();
        IndicatorPool {
            dataset,
            conditions,
            masks,
        }
    }

    /// A random conjunction of `m` indicators on distinct attributes with
    /// joint support >= `min_support`, avoiding `used` conditions.
    fn conjunction(
        &self,
        m: usize,
        min_support: u64,
        used: &BTreeSet<usize>,
        rng: &mut impl Rng,
    ) -> Option<Vec<usize>> {
        let free: Vec<usize> = (0..self.conditions.len()).filter(|i| !used.contains(i)).collect();
        let first = *free.choose(rng)?;
        let mut picked = vec![first];
        let mut mask = self.masks[first].clone();
        while picked.len() < m {
            let options: Vec<usize> = free
                .iter()
                .copied()
                .filter(|&i| {
                    let a = self.conditions[i].attribute();
                    picked.iter().all(|&p| self.conditions[p].attribute() != a) && {
                        let mut joint = mask.clone();
                        joint.intersect_with(&self.masks[i]);
                        joint.count() >= min_support
                    }
                })
                .collect();
            let next = *options.choose(rng)?;
            mask.intersect_with(&self.masks[next]);
            picked.push(next);
        }
        Some(picked)
    }

    fn build(&self, groups: &[Vec<usize>]) -> Syndrome {
        Syndrome::new(
            groups
                .iter()
                .map(|g| {
                    Conjunction::new(g.iter().map(|&i| self.conditions[i].clone()).collect())
                        .expect("distinct attributes make a valid conjunction")
                })
                .collect(),
        )
    }

    fn sample(
        &self,
        kind: SyndromeType,
        size: usize,
        min_support: u64,
        rng: &mut impl Rng,
    ) -> Result<Syndrome, BenchError> {
        let exhausted = || BenchError::Exhausted {
            kind,
            size,
            min_support,
            attempts: MAX_ATTEMPTS,
        };
        match kind {
            SyndromeType::And => (0..MAX_ATTEMPTS)
                .find_map(|_| self.conjunction(size, min_support, &BTreeSet::new(), rng))
                .map(|g| self.build(&[g]))
                .ok_or_else(exhausted),
            SyndromeType::Or => {
                if self.conditions.len() < size {
                    return Err(exhausted());
                }
                let picked: Vec<usize> =
                    rand::seq::index::sample(rng, self.conditions.len(), size).into_vec();
                let mut groups: Vec<Vec<usize>> = picked.into_iter().map(|i| vec![i]).collect();
                groups.sort();
                Ok(self.build(&groups))
            }
            SyndromeType::AndOr => {
                'attempt: for _ in 0..MAX_ATTEMPTS {
                    let mut used = BTreeSet::new();
                    let mut groups = Vec::with_capacity(size);
                    for _ in 0..size {
                        let Some(g) = self.conjunction(2, min_support, &used, rng) else {
                            continue 'attempt;
                        };
                        used.extend(g.iter().copied());
                        groups.push(g);
                    }
                    return Ok(self.build(&groups));
                }
                Err(exhausted())
            }
        }
    }

    fn dataset(&self) -> &Dataset {
        self.dataset
    }
}

fn check_size(kind: SyndromeType, size: usize) -> Result<(), BenchError> {
    let (lo, hi) = kind.size_range();
    if (lo..=hi).contains(&size) {
        Ok(())
    } else {
        Err(BenchError::BadSize { kind, size, lo, hi })
    }
}

/// Plants a random syndrome of the requested type. Every indicator and
/// every conjunction covers at least `spec.min_indicator_support` instances
/// and no condition is used twice.
pub fn sample_syndrome(dataset: &Dataset, spec: &SyntheticSpec) -> Result<Syndrome, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool = IndicatorPool::new(dataset, spec.min_indicator_support);
    let size = pick_size(spec, &mut rng)?;
    pool.sample(spec.kind, size, spec.min_indicator_support, &mut rng)
}

fn pick_size(spec: &SyntheticSpec, rng: &mut impl Rng) -> Result<usize, BenchError> {
    match spec.size {
        Some(s) => {
            check_size(spec.kind, s)?;
            Ok(s)
        }
        None => {
            let (lo, hi) = spec.kind.size_range();
            Ok(rng.random_range(lo..=hi))
        }
    }
}

/// One planted-vs-learned comparison.
#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub kind: SyndromeType,
    pub size: usize,
    pub granularity: Granularity,
    #[serde(skip)]
    pub planted: Syndrome,
    #[serde(skip)]
    pub learned: Syndrome,
    pub planted_text: String,
    pub learned_text: String,
    pub reconstructed: bool,
    pub planted_score: f64,
    pub learned_score: f64,
}

fn size_of(kind: SyndromeType, s: &Syndrome) -> usize {
    match kind {
        SyndromeType::And => s.conjunctions().first().map_or(0, Conjunction::len),
        _ => s.len(),
    }
}

/// Fits against the count series of `planted` at `granularity` and compares.
pub fn run_planted_trial(
    dataset: &Dataset,
    kind: SyndromeType,
    planted: &Syndrome,
    granularity: Granularity,
    noise: Option<(f64, u64)>,
    config: &LearnerConfig,
) -> Result<TrialResult, BenchError> {
    let index = TimeIndex::spanning(dataset, granularity);
    let mut y = count_series(planted, dataset, &index, Semantics::Disjunctive).0;
    if let Some((lambda, seed)) = noise {
        if lambda > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poisson = Poisson::new(lambda).map_err(|e| BenchError::Parameters(e.to_string()))?;
            for v in &mut y {
                *v += poisson.sample(&mut rng) as u64;
            }
        }
    }
    let targets = TargetSeries::for_index(&index, y).expect("target aligned with index");
    let planted_counts = count_series(planted, dataset, &index, Semantics::Disjunctive);
    let planted_score = pearson_abs(targets.counts(), planted_counts.as_slice())
        .map(|s| s.value)
        .unwrap_or(0.0);
    let report = fit(dataset, &index, &targets, config)?;
    let schema = dataset.schema();
    Ok(TrialResult {
        kind,
        size: size_of(kind, planted),
        granularity,
        planted_text: format_syndrome(planted, schema),
        learned_text: report.syndrome_text.clone(),
        reconstructed: report.syndrome.same_indicators(planted),
        planted: planted.clone(),
        learned: report.syndrome,
        planted_score,
        learned_score: report.score.value,
    })
}

/// Samples a planted syndrome per `spec` and tries to reconstruct it.
pub fn run_trial(dataset: &Dataset, spec: &SyntheticSpec, config: &LearnerConfig) -> Result<TrialResult, BenchError> {
    let planted = sample_syndrome(dataset, spec)?;
    let noise = spec.noise.map(|l| (l, spec.seed ^ 0x9e37_79b9_7f4a_7c15));
    run_planted_trial(dataset, spec.kind, &planted, spec.granularity, noise, config)
}

/// Fraction of trials whose learned syndrome uses exactly the planted indicators.
pub fn reconstruction_rate(results: &[TrialResult]) -> Result<f64, BenchError> {
    if results.is_empty() {
        return Err(BenchError::NoResults);
    }
    Ok(results.iter().filter(|r| r.reconstructed).count() as f64 / results.len() as f64)
}

/// Full benchmark: every type crossed with every granularity, evaluated on
/// the same planted syndromes per type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub data: SyntheticDataConfig,
    pub kinds: Vec<SyndromeType>,
    pub granularities: Vec<Granularity>,
    pub trials: usize,
    pub size: Option<usize>,
    pub min_indicator_support: u64,
    pub noise: Option<f64>,
    pub seed: u64,
    pub learner: LearnerConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            data: SyntheticDataConfig::default(),
            kinds: SyndromeType::ALL.to_vec(),
            granularities: Granularity::ALL.to_vec(),
            trials: 100,
            size: None,
            min_indicator_support: 200,
            noise: None,
            seed: 0,
            learner: LearnerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub kind: SyndromeType,
    pub granularity: Granularity,
    pub trials: usize,
    pub reconstructed: usize,
    pub rate: f64,
    pub mean_learned_score: f64,
    /// size -> (trials, reconstructed)
    pub by_size: BTreeMap<usize, (usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub cells: Vec<CellReport>,
    pub trials: Vec<TrialResult>,
}

impl BenchmarkReport {
    pub fn cell(&self, kind: SyndromeType, granularity: Granularity) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.kind == kind && c.granularity == granularity)
    }

    /// Reconstruction rate per type and size (rows) and granularity (columns).
    pub fn to_table(&self) -> String {
        let grans = &self.config.granularities;
        let mut out = String::new();
        let _ = write!(out, "{:<8} {:>5}", "type", "size");
        for g in grans {
            let _ = write!(out, " {:>9}", g.to_string());
        }
        out.push('\n');
        for &kind in &self.config.kinds {
            let sizes: BTreeSet<usize> = self
                .cells
                .iter()
                .filter(|c| c.kind == kind)
                .flat_map(|c| c.by_size.keys().copied())
                .collect();
            let rows = sizes.iter().map(|&s| (s.to_string(), Some(s))).chain([("all".to_string(), None)]);
            for (label, size) in rows {
                let _ = write!(out, "{:<8} {:>5}", kind.to_string(), label);
                for &g in grans {
                    let cell = self.cell(kind, g);
                    let rate = cell.and_then(|c| match size {
                        Some(s) => c.by_size.get(&s).map(|&(n, r)| r as f64 / n as f64),
                        None => Some(c.rate),
                    });
                    match rate {
                        Some(r) => {
                            let _ = write!(out, " {:>8.1}%", 100.0 * r);
                        }
                        None => {
                            let _ = write!(out, " {:>9}", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn trial_seed(seed: u64, kind: SyndromeType, trial: usize) -> u64 {
    // splitmix64 over (seed, kind, trial)
    let mut z = seed
        .wrapping_add((kind as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((trial as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs the benchmark; trials run in parallel and results are collected in
/// trial order, so the report depends only on the configuration.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport, BenchError> {
    let dataset = gen_synthetic_dataset(&config.data)?;
    run_benchmark_on(&dataset, config)
}

pub fn run_benchmark_on(dataset: &Dataset, config: &BenchmarkConfig) -> Result<BenchmarkReport, BenchError> {
    let pool = IndicatorPool::new(dataset, config.min_indicator_support);
    let mut cells = Vec::new();
    let mut all_trials = Vec::new();
    for &kind in &config.kinds {
        let planted: Vec<(Syndrome, u64)> = (0..config.trials)
            .map(|t| {
                let seed = trial_seed(config.seed, kind, t);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let spec = SyntheticSpec {
                    kind,
                    size: config.size,
                    min_indicator_support: config.min_indicator_support,
                    trials: config.trials,
                    granularity: Granularity::Daily,
                    seed,
                    noise: config.noise,
                };
                let size = pick_size(&spec, &mut rng)?;
                Ok((pool.sample(kind, size, config.min_indicator_support, &mut rng)?, seed))
            })
            .collect::<Result<_, BenchError>>()?;
        for &granularity in &config.granularities {
            let results: Vec<TrialResult> = planted
                .par_iter()
                .map(|(s, seed)| {
                    let noise = config.noise.map(|l| (l, *seed));
                    run_planted_trial(pool.dataset(), kind, s, granularity, noise, &config.learner)
                })
                .collect::<Result<_, _>>()?;
            let mut by_size: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
            for r in &results {
                let e = by_size.entry(r.size).or_default();
                e.0 += 1;
                e.1 += usize::from(r.reconstructed);
            }
            let reconstructed = results.iter().filter(|r| r.reconstructed).count();
            cells.push(CellReport {
                kind,
                granularity,
                trials: results.len(),
                reconstructed,
                rate: if results.is_empty() { 0.0 } else { reconstructed as f64 / results.len() as f64 },
                mean_learned_score: results.iter().map(|r| r.learned_score).sum::<f64>()
                    / results.len().max(1) as f64,
                by_size,
            });
            all_trials.extend(results);
        }
    }
    Ok(BenchmarkReport {
        config: config.clone(),
        cells,
        trials: all_trials,
    })
}
