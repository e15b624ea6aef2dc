// SPDX-License-Identifier: Apache-2.0

//! Absolute correlation between reported and estimated case counts.
//!
//! Both series are non-negative integers, so Pearson sums are accumulated
//! exactly in 128-bit integers and only the final ratio is taken in floating
//! point. Spearman reuses that path on doubled average ranks, which are
//! integers as well. Kendall is τ-b computed in `O(T log T)`.
//!
//! A series with zero variance yields a degenerate score of exactly 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    #[default]
    Pearson,
    Spearman,
    Kendall,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 3] = [ObjectiveKind::Pearson, ObjectiveKind::Spearman, ObjectiveKind::Kendall];
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::Pearson => "pearson",
            ObjectiveKind::Spearman => "spearman",
            ObjectiveKind::Kendall => "kendall",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().trim_end_matches("_abs") {
            "pearson" => Ok(ObjectiveKind::Pearson),
            "spearman" => Ok(ObjectiveKind::Spearman),
            "kendall" => Ok(ObjectiveKind::Kendall),
            other => Err(format!("unknown objective `{other}` (pearson, spearman, kendall)")),
        }
    }
}

/// Absolute correlation in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

impl Score {
    pub const DEGENERATE: Score = Score {
        value: 0.0,
        degenerate: true,
    };

    fn of(value: f64) -> Score {
        Score {
            value: value.clamp(0.0, 1.0),
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObjectiveError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least two buckets are required, got {0}")]
    TooShort(usize),
}

fn check(y: &[u64], yhat: &[u64]) -> Result<(), ObjectiveError> {
    if y.len() != yhat.len() {
        return Err(ObjectiveError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.len() < 2 {
        return Err(ObjectiveError::TooShort(y.len()));
    }
    Ok(())
}

/// Exact running sums for one Pearson evaluation.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: u128,
    x: u128,
    y: u128,
    xx: u128,
    yy: u128,
    xy: u128,
}

impl Sums {
    #[inline]
    fn push(&mut self, x: u64, y: u64) -> Option<()> {
        let (x, y) = (u128::from(x), u128::from(y));
        self.n += 1;
        self.x = self.x.checked_add(x)?;
        self.y = self.y.checked_add(y)?;
        self.xx = self.xx.checked_add(x.checked_mul(x)?)?;
        self.yy = self.yy.checked_add(y.checked_mul(y)?)?;
        self.xy = self.xy.checked_add(x.checked_mul(y)?)?;
        Some(())
    }

    /// `None` when an intermediate product overflows 128 bits.
    fn score(&self) -> Option<Score> {
        let n = self.n;
        let a = n.checked_mul(self.xy)?;
        let b = self.x.checked_mul(self.y)?;
        let cov = a.abs_diff(b);
        let vx = n.checked_mul(self.xx)?.checked_sub(self.x.checked_mul(self.x)?)?;
        let vy = n.checked_mul(self.yy)?.checked_sub(self.y.checked_mul(self.y)?)?;
        if vx == 0 || vy == 0 {
            return Some(Score::DEGENERATE);
        }
        Some(Score::of(cov as f64 / ((vx as f64).sqrt() * (vy as f64).sqrt())))
    }
}

/// Mean-centred fallback for magnitudes beyond exact integer range.
fn pearson_float(x: &[u64], y: &[u64]) -> Score {
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a as f64 - mx, b as f64 - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Score::DEGENERATE;
    }
    Score::of((sxy / (sxx.sqrt() * syy.sqrt())).abs())
}

fn pearson_unchecked(x: &[u64], y: &[u64]) -> Score {
    let mut sums = Sums::default();
    for (&a, &b) in x.iter().zip(y) {
        if sums.push(a, b).is_none() {
            return pearson_float(x, y);
        }
    }
    sums.score().unwrap_or_else(|| pearson_float(x, y))
}

/// |Pearson r| in a single pass.
pub fn pearson_abs(y: &[u64], yhat: &[u64]) -> Result<Score, ObjectiveError> {
    check(y, yhat)?;
    Ok(pearson_unchecked(y, yhat))
}

/// Average ranks (1-based), doubled so that ties stay integral.
pub(crate) fn doubled_ranks(values: &[u64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by_key(|&i| values[i]);
    let mut ranks = vec![0u64; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && values[idx[end + 1]] == values[idx[start]] {
            end += 1;
        }
        // (start + 1 + end + 1) / 2, doubled
        let r = (start + end + 2) as u64;
        for &i in &idx[start..=end] {
            ranks[i] = r;
        }
        start = end + 1;
    }
    ranks
}

/// |Spearman ρ|: Pearson on average ranks.
pub fn spearman_abs(y: &[u64], yhat: &[u64]) -> Result<Score, ObjectiveError> {
    check(y, yhat)?;
    Ok(pearson_unchecked(&doubled_ranks(y), &doubled_ranks(yhat)))
}

fn tie_pairs(sorted: impl Iterator<Item = u64>) -> u128 {
    let mut total = 0u128;
    let mut run = 0u128;
    let mut prev = None;
    for v in sorted {
        if Some(v) == prev {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
            prev = Some(v);
        }
    }
    total + run * run.saturating_sub(1) / 2
}

/// Counts strict inversions while sorting `v` ascending.
fn merge_count(v: &mut [u64], buf: &mut [u64]) -> u128 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u128;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// |Kendall τ-b| via Knight's merge-sort algorithm.
pub fn kendall_abs(y: &[u64], yhat: &[u64]) -> Result<Score, ObjectiveError> {
    check(y, yhat)?;
    Ok(kendall_unchecked(y, yhat))
}

fn kendall_unchecked(x: &[u64], y: &[u64]) -> Score {
    let n = x.len() as u128;
    let n0 = n * (n - 1) / 2;
    let mut pairs: Vec<(u64, u64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_unstable();
    let n1 = tie_pairs(pairs.iter().map(|p| p.0));
    // joint ties: runs of identical (x, y)
    let mut n3 = 0u128;
    let mut run = 1u128;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;
    let mut ys: Vec<u64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0u64; ys.len()];
    let swaps = merge_count(&mut ys, &mut buf);
    let n2 = tie_pairs(ys.iter().copied());
    if n0 == n1 || n0 == n2 {
        return Score::DEGENERATE;
    }
    let s = (n0 + n3) as i128 - (n1 + n2) as i128 - 2 * swaps as i128;
    let denom = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    Score::of(s.unsigned_abs() as f64 / denom)
}

/// Scores an estimate under the chosen measure.
pub fn score_model(objective: ObjectiveKind, y: &[u64], yhat: &[u64]) -> Result<Score, ObjectiveError> {
    match objective {
        ObjectiveKind::Pearson => pearson_abs(y, yhat),
        ObjectiveKind::Spearman => spearman_abs(y, yhat),
        ObjectiveKind::Kendall => kendall_abs(y, yhat),
    }
}

/// A target series prepared for repeated scoring of same-length estimates.
#[derive(Debug, Clone)]
pub struct Scorer {
    kind: ObjectiveKind,
    target: Vec<u64>,
    ranks: Vec<u64>,
}

impl Scorer {
    pub fn new(kind: ObjectiveKind, target: &[u64]) -> Result<Self, ObjectiveError> {
        if target.len() < 2 {
            return Err(ObjectiveError::TooShort(target.len()));
        }
        let ranks = match kind {
            ObjectiveKind::Spearman => doubled_ranks(target),
            _ => Vec::new(),
        };
        Ok(Scorer {
            kind,
            target: target.to_vec(),
            ranks,
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn target(&self) -> &[u64] {
        &self.target
    }

    /// Score of `yhat`; panics if its length differs from the target's.
    pub fn score(&self, yhat: &[u64]) -> Score {
        assert_eq!(yhat.len(), self.target.len(), "estimate length must match target");
        match self.kind {
            ObjectiveKind::Pearson => pearson_unchecked(&self.target, yhat),
            ObjectiveKind::Spearman => pearson_unchecked(&self.ranks, &doubled_ranks(yhat)),
            ObjectiveKind::Kendall => kendall_unchecked(&self.target, yhat),
        }
    }

    /// Score of `base + delta`, using `buf` as scratch for rank measures.
    pub fn score_sum(&self, base: &[u64], delta: &[u32], buf: &mut Vec<u64>) -> Score {
        debug_assert_eq!(base.len(), self.target.len());
        debug_assert_eq!(delta.len(), self.target.len());
        if self.kind == ObjectiveKind::Pearson {
            let mut sums = Sums::default();
            let mut ok = true;
            for ((&y, &c), &d) in self.target.iter().zip(base).zip(delta) {
                if sums.push(y, c + u64::from(d)).is_none() {
                    ok = false;
                    break;
                }
            }
            if let Some(score) = ok.then(|| sums.score()).flatten() {
                return score;
            }
        }
        buf.clear();
        buf.extend(base.iter().zip(delta).map(|(&c, &d)| c + u64::from(d)));
        self.score(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn pearson_examples() {
        assert!(close(pearson_abs(&[1, 2, 3], &[3, 2, 1]).unwrap().value, 1.0));
        assert_eq!(pearson_abs(&[1, 2, 3], &[5, 5, 5]).unwrap(), Score::DEGENERATE);
        // centred sums: cov 6.5, var 5 and 8.75
        let expected = 6.5 / (5.0f64 * 8.75).sqrt();
        assert!(close(pearson_abs(&[1, 2, 3, 4], &[1, 2, 3, 5]).unwrap().value, expected));
        assert!((expected - 0.982707).abs() < 1e-6);
    }

    #[test]
    fn spearman_examples() {
        assert!(close(spearman_abs(&[1, 2, 3, 4], &[2, 5, 9, 100]).unwrap().value, 1.0));
        // sum d^2 = 2 -> 1 - 6*2 / (4 * 15) = 0.8
        assert!(close(spearman_abs(&[1, 2, 3, 4], &[10, 30, 20, 40]).unwrap().value, 0.8));
        assert!(spearman_abs(&[1, 2, 3], &[7, 7, 7]).unwrap().degenerate);
    }

    #[test]
    fn kendall_examples() {
        assert!(close(kendall_abs(&[1, 2, 3, 4], &[4, 3, 2, 1]).unwrap().value, 1.0));
        // 2 concordant, 1 discordant of 3 pairs
        assert!(close(kendall_abs(&[1, 2, 3], &[1, 3, 2]).unwrap().value, 1.0 / 3.0));
        assert!(kendall_abs(&[1, 2, 3], &[0, 0, 0]).unwrap().degenerate);
    }

    #[test]
    fn errors() {
        assert_eq!(pearson_abs(&[1, 2], &[1]), Err(ObjectiveError::LengthMismatch(2, 1)));
        assert_eq!(kendall_abs(&[1], &[1]), Err(ObjectiveError::TooShort(1)));
    }

    #[test]
    fn all_zero_estimate_is_baseline() {
        for kind in ObjectiveKind::ALL {
            assert_eq!(score_model(kind, &[3, 1, 4], &[0, 0, 0]).unwrap(), Score::DEGENERATE);
        }
    }

    #[test]
    fn overflow_falls_back_to_float() {
        let big = u64::MAX / 2;
        let s = pearson_abs(&[0, big, 1], &[0, big, 1]).unwrap();
        assert!(close(s.value, 1.0));
    }

    /// Pairwise tau-b straight from the definition.
    fn kendall_pairs(x: &[u64], y: &[u64]) -> f64 {
        let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let a = x[i].cmp(&x[j]) as i64;
                let b = y[i].cmp(&y[j]) as i64;
                match (a, b) {
                    (0, 0) => {}
                    (0, _) => tx += 1,
                    (_, 0) => ty += 1,
                    _ if a == b => c += 1,
                    _ => d += 1,
                }
            }
        }
        let denom = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            ((c - d) as f64 / denom).abs()
        }
    }

    fn series() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
        (2usize..40).prop_flat_map(|t| {
            (
                proptest::collection::vec(0u64..20, t),
                proptest::collection::vec(0u64..20, t),
            )
        })
    }

    proptest! {
        #[test]
        fn range_and_symmetry((y, yhat) in series()) {
            for kind in ObjectiveKind::ALL {
                let a = score_model(kind, &y, &yhat).unwrap();
                let b = score_model(kind, &yhat, &y).unwrap();
                prop_assert!((0.0..=1.0).contains(&a.value));
                prop_assert!(!a.degenerate || a.value == 0.0);
                prop_assert!(close(a.value, b.value));
            }
        }

        #[test]
        fn pearson_affine_invariant((y, yhat) in series(), a in 1u64..50, b in 0u64..1000) {
            let base = pearson_abs(&y, &yhat).unwrap().value;
            let scaled: Vec<u64> = y.iter().map(|v| a * v + b).collect();
            prop_assert!(close(pearson_abs(&scaled, &yhat).unwrap().value, base));
            // negative slope: c - y
            let flipped: Vec<u64> = y.iter().map(|v| 1000 - v).collect();
            prop_assert!(close(pearson_abs(&flipped, &yhat).unwrap().value, base));
        }

        #[test]
        fn rank_measures_monotone_invariant((y, yhat) in series()) {
            let warped: Vec<u64> = yhat.iter().map(|v| v * v * v + 7).collect();
            for kind in [ObjectiveKind::Spearman, ObjectiveKind::Kendall] {
                let a = score_model(kind, &y, &yhat).unwrap().value;
                let b = score_model(kind, &y, &warped).unwrap().value;
                prop_assert!(close(a, b));
            }
        }

        #[test]
        fn kendall_matches_pair_enumeration((y, yhat) in series()) {
            prop_assert!(close(kendall_abs(&y, &yhat).unwrap().value, kendall_pairs(&y, &yhat)));
        }

        #[test]
        fn single_pass_matches_two_pass(y in proptest::collection::vec(0u64..10_000_000, 2..100), seed in any::<u64>()) {
            let yhat: Vec<u64> = y.iter().enumerate().map(|(i, v)| (v ^ seed.rotate_left(i as u32)) % 10_000_000).collect();
            let exact = pearson_abs(&y, &yhat).unwrap().value;
            let float = pearson_float(&y, &yhat).value;
            prop_assert!((exact - float).abs() <= 1e-12 * exact.max(1e-3));
        }

        #[test]
        fn scorer_agrees_with_dispatch((y, yhat) in series(), shift in 0u32..5) {
            let delta: Vec<u32> = yhat.iter().map(|&v| (v as u32 + shift) % 3).collect();
            let sum: Vec<u64> = yhat.iter().zip(&delta).map(|(&a, &b)| a + u64::from(b)).collect();
            let mut buf = Vec::new();
            for kind in ObjectiveKind::ALL {
                let scorer = Scorer::new(kind, &y).unwrap();
                prop_assert_eq!(scorer.score_sum(&yhat, &delta, &mut buf), score_model(kind, &y, &sum).unwrap());
            }
        }
    }
}
