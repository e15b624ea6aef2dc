// SPDX-License-Identifier: Apache-2.0

//! Learning syndrome definitions from time-stamped health records.
//!
//! Given instances (patient visits) with discrete and numeric attributes,
//! a date per instance, and an externally reported case-count series, the
//! learner searches for a DNF pattern over attribute conditions whose
//! per-period match counts correlate best with the reported cases.
//!
//! - [`data`]: loading, time bucketing, candidate conditions
//! - [`syndrome`]: DNF representation, coverage, count series, text form
//! - [`objective`]: absolute Pearson / Spearman / Kendall scores
//! - [`learner`]: greedy sequential covering with hill-climbed conjunctions
//! - [`synthbench`]: planted-syndrome reconstruction benchmark

pub mod data;
pub mod learner;
pub mod objective;
pub mod syndrome;
pub mod synthbench;

pub use data::{
    build_time_index, candidate_conditions, load_dataset, AttributeKind, AttributeSchema, Blacklist,
    CandidateOptions, Condition, DataError, Dataset, Granularity, Operator, TargetSeries, TimeIndex,
};
pub use learner::{
    evaluate_candidate, fit, fit_with, grow_conjunction, BlacklistSpec, FitError, FitReport,
    LearnerConfig, TraceEntry,
};
pub use objective::{kendall_abs, pearson_abs, score_model, spearman_abs, ObjectiveKind, Score};
pub use syndrome::{
    count_series, coverage, format_syndrome, parse_syndrome, Conjunction, CountSeries, CoverageMask,
    DslError, Semantics, Syndrome,
};
