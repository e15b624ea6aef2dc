// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Bucket index stored for instances outside the target range.
pub const NO_BUCKET: u32 = u32::MAX;

/// Width of one time bucket. Weeks are ISO-8601 weeks (Monday start).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Daily,
    Weekly,
    Monthly,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Daily, Granularity::Weekly, Granularity::Monthly];

    /// Ordinal of the bucket containing `date`; consecutive buckets have
    /// consecutive ordinals.
    pub fn ordinal(self, date: NaiveDate) -> i32 {
        match self {
            Granularity::Daily => date.num_days_from_ce(),
            // 0001-01-01 is a Monday with day number 1.
            Granularity::Weekly => (date.num_days_from_ce() - 1).div_euclid(7),
            Granularity::Monthly => date.year() * 12 + date.month0() as i32,
        }
    }

    /// First calendar day of the bucket with the given ordinal.
    pub fn start_date(self, ordinal: i32) -> Option<NaiveDate> {
        match self {
            Granularity::Daily => NaiveDate::from_num_days_from_ce_opt(ordinal),
            Granularity::Weekly => NaiveDate::from_num_days_from_ce_opt(ordinal.checked_mul(7)? + 1),
            Granularity::Monthly => {
                NaiveDate::from_ymd_opt(ordinal.div_euclid(12), ordinal.rem_euclid(12) as u32 + 1, 1)
            }
        }
    }

    /// Calendar label: `YYYY-MM-DD`, `YYYY-Www` or `YYYY-MM`.
    pub fn label(self, ordinal: i32) -> String {
        let Some(start) = self.start_date(ordinal) else {
            return format!("<bucket {ordinal}>");
        };
        match self {
            Granularity::Daily => start.format("%Y-%m-%d").to_string(),
            Granularity::Weekly => {
                let week = start.iso_week();
                format!("{:04}-W{:02}", week.year(), week.week())
            }
            Granularity::Monthly => format!("{:04}-{:02}", start.year(), start.month()),
        }
    }

    pub fn label_of(self, date: NaiveDate) -> String {
        self.label(self.ordinal(date))
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Daily => "daily",
            Granularity::Weekly => "weekly",
            Granularity::Monthly => "monthly",
        })
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "daily" | "day" => Ok(Granularity::Daily),
            "weekly" | "week" => Ok(Granularity::Weekly),
            "monthly" | "month" => Ok(Granularity::Monthly),
            other => Err(format!("unknown granularity `{other}` (daily, weekly, monthly)")),
        }
    }
}

/// A parsed bucket label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketLabel {
    pub granularity: Granularity,
    pub ordinal: i32,
}

impl FromStr for BucketLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        let digits = |r: std::ops::Range<usize>| bytes[r].iter().all(u8::is_ascii_digit);
        let num = |r: std::ops::Range<usize>| s[r].parse::<u32>().map_err(|e| e.to_string());
        match bytes.len() {
            10 if digits(0..4) && bytes[4] == b'-' && digits(5..7) && bytes[7] == b'-' && digits(8..10) => {
                let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| e.to_string())?;
                Ok(BucketLabel {
                    granularity: Granularity::Daily,
                    ordinal: Granularity::Daily.ordinal(date),
                })
            }
            8 if digits(0..4) && bytes[4] == b'-' && bytes[5] == b'W' && digits(6..8) => {
                let year = num(0..4)? as i32;
                let week = num(6..8)?;
                let monday = NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)
                    .ok_or_else(|| format!("ISO year {year} has no week {week}"))?;
                Ok(BucketLabel {
                    granularity: Granularity::Weekly,
                    ordinal: Granularity::Weekly.ordinal(monday),
                })
            }
            7 if digits(0..4) && bytes[4] == b'-' && digits(5..7) => {
                let year = num(0..4)? as i32;
                let month = num(5..7)?;
                let first = NaiveDate::from_ymd_opt(year, month, 1)
                    .ok_or_else(|| format!("no month {month}"))?;
                Ok(BucketLabel {
                    granularity: Granularity::Monthly,
                    ordinal: Granularity::Monthly.ordinal(first),
                })
            }
            _ => Err("expected YYYY-MM-DD, YYYY-Www or YYYY-MM".into()),
        }
    }
}

/// Reported case counts per bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSeries {
    granularity: Granularity,
    first: i32,
    labels: Vec<String>,
    counts: Vec<u64>,
}

impl TargetSeries {
    /// Series starting at the bucket containing `start`.
    pub fn new(granularity: Granularity, start: NaiveDate, counts: Vec<u64>) -> Self {
        let first = granularity.ordinal(start);
        let labels = (0..counts.len() as i32)
            .map(|i| granularity.label(first + i))
            .collect();
        TargetSeries {
            granularity,
            first,
            labels,
            counts,
        }
    }

    /// Series aligned to an existing index.
    pub fn for_index(index: &TimeIndex, counts: Vec<u64>) -> Option<Self> {
        (counts.len() == index.len()).then(|| TargetSeries {
            granularity: index.granularity,
            first: index.first,
            labels: index.labels.clone(),
            counts,
        })
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Granularity of the first bucket label in target text, if any.
pub fn detect_granularity(text: &str) -> Option<Granularity> {
    text.lines()
        .map(|l| l.split(['\t', ',']).next().unwrap_or("").trim())
        .filter(|f| !f.is_empty() && !f.eq_ignore_ascii_case("bucket"))
        .find_map(|f| f.parse::<BucketLabel>().ok())
        .map(|b| b.granularity)
}

/// Parses `bucket,count` rows. A leading header row whose first field is
/// `bucket` is skipped. Labels must be contiguous and ascending.
pub fn parse_targets(text: &str, granularity: Granularity) -> Result<TargetSeries, DataError> {
    let delimiter = if text.lines().next().unwrap_or("").contains('\t') { b'\t' } else { b',' };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut first = None;
    let mut prev: Option<i32> = None;
    let mut labels = Vec::new();
    let mut counts = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if row == 1 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("bucket")) {
            continue;
        }
        if record.len() != 2 {
            return Err(DataError::RowLength {
                row,
                found: record.len(),
                expected: 2,
            });
        }
        let label = &record[0];
        let parsed: BucketLabel = label.parse().map_err(|reason| DataError::BadLabel {
            row,
            label: label.to_owned(),
            reason,
        })?;
        if parsed.granularity != granularity {
            return Err(DataError::GranularityMismatch {
                label: label.to_owned(),
                expected: granularity,
            });
        }
        let count: i64 = record[1].parse().map_err(|_| DataError::BadLabel {
            row,
            label: label.to_owned(),
            reason: format!("count `{}` is not an integer", &record[1]),
        })?;
        if count < 0 {
            return Err(DataError::NegativeCount {
                label: label.to_owned(),
                count,
            });
        }
        if let Some(p) = prev {
            if parsed.ordinal <= p {
                return Err(DataError::BadLabel {
                    row,
                    label: label.to_owned(),
                    reason: "labels must be strictly ascending".into(),
                });
            }
            if parsed.ordinal > p + 1 {
                return Err(DataError::Gap(granularity.label(p + 1)));
            }
        }
        first.get_or_insert(parsed.ordinal);
        prev = Some(parsed.ordinal);
        labels.push(granularity.label(parsed.ordinal));
        counts.push(count as u64);
    }
    let first = first.ok_or(DataError::NoTargets)?;
    Ok(TargetSeries {
        granularity,
        first,
        labels,
        counts,
    })
}

/// Assignment of instances to contiguous calendar buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeIndex {
    granularity: Granularity,
    first: i32,
    labels: Vec<String>,
    bucket_of: Vec<u32>,
    dropped: usize,
}

impl TimeIndex {
    /// Buckets `first .. first + len`; instances outside are dropped.
    fn over_range(dataset: &Dataset, granularity: Granularity, first: i32, len: usize) -> Self {
        let mut dropped = 0;
        let bucket_of = dataset
            .dates()
            .iter()
            .map(|&d| {
                let offset = i64::from(granularity.ordinal(d)) - i64::from(first);
                if (0..len as i64).contains(&offset) {
                    offset as u32
                } else {
                    dropped += 1;
                    NO_BUCKET
                }
            })
            .collect();
        let labels = (0..len as i32).map(|i| granularity.label(first + i)).collect();
        TimeIndex {
            granularity,
            first,
            labels,
            bucket_of,
            dropped,
        }
    }

    /// Index covering every bucket from the earliest to the latest instance.
    pub fn spanning(dataset: &Dataset, granularity: Granularity) -> Self {
        let lo = dataset.dates().iter().min().copied().expect("non-empty dataset");
        let hi = dataset.dates().iter().max().copied().expect("non-empty dataset");
        let first = granularity.ordinal(lo);
        let len = (granularity.ordinal(hi) - first + 1) as usize;
        Self::over_range(dataset, granularity, first, len)
    }

    /// Index aligned 1:1 with the buckets of a target series.
    pub fn aligned(dataset: &Dataset, targets: &TargetSeries) -> Self {
        Self::over_range(dataset, targets.granularity, targets.first, targets.len())
    }

    /// Number of buckets `T`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Bucket per instance, [`NO_BUCKET`] for dropped instances.
    pub fn buckets(&self) -> &[u32] {
        &self.bucket_of
    }

    pub fn bucket(&self, n: usize) -> Option<usize> {
        match self.bucket_of[n] {
            NO_BUCKET => None,
            b => Some(b as usize),
        }
    }

    /// Instances outside the bucket range.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn retained(&self) -> usize {
        self.bucket_of.len() - self.dropped
    }
}

/// Reads a targets file and aligns the dataset's instances to its buckets.
pub fn build_time_index(
    dataset: &Dataset,
    targets_file: &Path,
    granularity: Granularity,
) -> Result<(TimeIndex, TargetSeries), DataError> {
    let text = std::fs::read_to_string(targets_file).map_err(|source| DataError::Io {
        path: targets_file.to_path_buf(),
        source,
    })?;
    let targets = parse_targets(&text, granularity)?;
    Ok((TimeIndex::aligned(dataset, &targets), targets))
}

/// Days in `[start, start + days)`.
pub(crate) fn date_range(start: NaiveDate, days: u32) -> impl Iterator<Item = NaiveDate> {
    (0..days).map(move |d| start + Days::new(u64::from(d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn granularity_detection() {
        assert_eq!(detect_granularity("bucket\tcases\n2020-W05\t3\n"), Some(Granularity::Weekly));
        assert_eq!(detect_granularity("2020-02,7\n"), Some(Granularity::Monthly));
        assert_eq!(detect_granularity("\n2020-02-29\t1\n"), Some(Granularity::Daily));
        assert_eq!(detect_granularity("bucket,cases\n"), None);
        assert_eq!(detect_granularity("week 5,3\n"), None);
    }
    use crate::data::{AttributeKind, AttributeSchema, Column, DiscreteColumn};

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    /// Independent ISO-8601 week computation: the week containing a date's
    /// Thursday belongs to that Thursday's year, and week 1 is the week
    /// containing January 4th.
    fn iso_week_oracle(date: NaiveDate) -> (i32, u32) {
        let weekday = date.weekday().num_days_from_monday() as i64;
        let thursday = date + chrono::Duration::days(3 - weekday);
        let year = thursday.year();
        let jan4 = ymd(year, 1, 4);
        let week1_monday = jan4 - chrono::Duration::days(jan4.weekday().num_days_from_monday() as i64);
        let week = (thursday - week1_monday).num_days() / 7 + 1;
        (year, week as u32)
    }

    #[test]
    fn calendar_labels() {
        let d = ymd(2017, 1, 5);
        assert_eq!(Granularity::Monthly.label_of(d), "2017-01");
        assert_eq!(Granularity::Weekly.label_of(d), "2017-W01");
        assert_eq!(Granularity::Daily.label_of(d), "2017-01-05");
        // ISO year differs from calendar year at the edges.
        assert_eq!(Granularity::Weekly.label_of(ymd(2017, 1, 1)), "2016-W52");
        assert_eq!(Granularity::Weekly.label_of(ymd(2019, 12, 30)), "2020-W01");
        assert_eq!(Granularity::Weekly.label_of(ymd(2021, 1, 3)), "2020-W53");
    }

    #[test]
    fn weekly_matches_iso_oracle_over_decade() {
        let mut prev = None;
        for d in date_range(ymd(2015, 1, 1), 3700) {
            let (y, w) = iso_week_oracle(d);
            assert_eq!(Granularity::Weekly.label_of(d), format!("{y:04}-W{w:02}"));
            let ord = Granularity::Weekly.ordinal(d);
            if let Some(p) = prev {
                assert!(ord == p || ord == p + 1);
                assert_eq!(ord == p + 1, d.weekday() == Weekday::Mon);
            }
            prev = Some(ord);
        }
    }

    #[test]
    fn labels_round_trip() {
        for g in Granularity::ALL {
            for ord in [g.ordinal(ymd(2016, 12, 31)), g.ordinal(ymd(2020, 2, 29))] {
                let parsed: BucketLabel = g.label(ord).parse().unwrap();
                assert_eq!(parsed, BucketLabel { granularity: g, ordinal: ord });
            }
        }
    }

    #[test]
    fn gap_detected() {
        let err = parse_targets("2020-01,5\n2020-03,7\n", Granularity::Monthly).unwrap_err();
        assert_eq!(err.to_string(), "gap at 2020-02");
    }

    #[test]
    fn negative_and_mismatch() {
        assert!(matches!(
            parse_targets("bucket,count\n2020-01,-1\n", Granularity::Monthly),
            Err(DataError::NegativeCount { count: -1, .. })
        ));
        assert!(matches!(
            parse_targets("2020-01,4\n", Granularity::Weekly),
            Err(DataError::GranularityMismatch { .. })
        ));
        assert!(matches!(parse_targets("bucket,count\n", Granularity::Daily), Err(DataError::NoTargets)));
    }

    #[test]
    fn alignment_drops_out_of_range() {
        let schema = vec![AttributeSchema::new("x", AttributeKind::Discrete)];
        let dates = vec![ymd(2019, 12, 31), ymd(2020, 1, 15), ymd(2020, 2, 1), ymd(2020, 3, 1)];
        let col = DiscreteColumn::from_cells(&[Some("a"); 4]);
        let ds = Dataset::new(schema, vec![Column::Discrete(col)], dates).unwrap();
        let targets = parse_targets("bucket,count\n2020-01,3\n2020-02,4\n", Granularity::Monthly).unwrap();
        let index = TimeIndex::aligned(&ds, &targets);
        assert_eq!(index.len(), 2);
        assert_eq!(index.buckets(), &[NO_BUCKET, 0, 1, NO_BUCKET]);
        assert_eq!(index.dropped(), 2);
        assert_eq!(index.retained() + index.dropped(), ds.len());
        assert_eq!(index.labels(), targets.labels());
    }

    #[test]
    fn spanning_covers_all() {
        let schema = vec![AttributeSchema::new("x", AttributeKind::Discrete)];
        let dates = vec![ymd(2020, 1, 30), ymd(2020, 1, 1), ymd(2020, 2, 3)];
        let col = DiscreteColumn::from_cells(&[Some("a"); 3]);
        let ds = Dataset::new(schema, vec![Column::Discrete(col)], dates).unwrap();
        let index = TimeIndex::spanning(&ds, Granularity::Weekly);
        assert_eq!(index.labels().first().unwrap(), "2020-W01");
        assert_eq!(index.labels().last().unwrap(), "2020-W06");
        assert_eq!(index.dropped(), 0);
    }
}
