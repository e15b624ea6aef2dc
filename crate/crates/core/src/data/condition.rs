// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use super::{AttributeKind, AttributeSchema, Column, Dataset, MISSING};

/// Relational operator of a condition. Declaration order is the candidate
/// enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    /// Equality with a discrete token.
    Eq,
    /// Numeric `<=` (inclusive).
    Le,
    /// Numeric `>` (strict).
    Gt,
}

impl Operator {
    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Eq => "=",
            Operator::Le => "<=",
            Operator::Gt => ">",
        }
    }

    pub fn applies_to(self) -> AttributeKind {
        match self {
            Operator::Eq => AttributeKind::Discrete,
            Operator::Le | Operator::Gt => AttributeKind::Numeric,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone)]
pub enum ConditionValue {
    Token(String),
    Number(f64),
}

impl PartialEq for ConditionValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ConditionValue {}

impl Ord for ConditionValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ConditionValue::Token(a), ConditionValue::Token(b)) => a.cmp(b),
            (ConditionValue::Number(a), ConditionValue::Number(b)) => a.total_cmp(b),
            (ConditionValue::Token(_), ConditionValue::Number(_)) => Ordering::Less,
            (ConditionValue::Number(_), ConditionValue::Token(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for ConditionValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Hash for ConditionValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            ConditionValue::Token(t) => {
                0u8.hash(state);
                t.hash(state);
            }
            ConditionValue::Number(v) => {
                1u8.hash(state);
                v.to_bits().hash(state);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConditionError {
    #[error("attribute index {0} is out of range")]
    NoSuchAttribute(usize),
    #[error("operator `{op}` cannot be applied to {kind} attribute `{name}`")]
    KindMismatch {
        op: Operator,
        kind: AttributeKind,
        name: String,
    },
    #[error("threshold for `{0}` must be a finite number")]
    NonFinite(String),
}

/// One indicator: an attribute compared against a constant.
///
/// Ordering is (attribute, operator, value), the order in which candidates
/// are enumerated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Condition {
    attribute: usize,
    op: Operator,
    value: ConditionValue,
}

impl Condition {
    /// Validates operator kind and threshold finiteness against the schema.
    pub fn new(
        schema: &[AttributeSchema],
        attribute: usize,
        op: Operator,
        value: ConditionValue,
    ) -> Result<Self, ConditionError> {
        let attr = schema
            .get(attribute)
            .ok_or(ConditionError::NoSuchAttribute(attribute))?;
        let value_kind = match &value {
            ConditionValue::Token(_) => AttributeKind::Discrete,
            ConditionValue::Number(v) => {
                if !v.is_finite() {
                    return Err(ConditionError::NonFinite(attr.name.clone()));
                }
                AttributeKind::Numeric
            }
        };
        if op.applies_to() != attr.kind || value_kind != attr.kind {
            return Err(ConditionError::KindMismatch {
                op,
                kind: attr.kind,
                name: attr.name.clone(),
            });
        }
        Ok(Condition {
            attribute,
            op,
            value,
        })
    }

    pub fn eq(schema: &[AttributeSchema], attribute: usize, token: &str) -> Result<Self, ConditionError> {
        Self::new(schema, attribute, Operator::Eq, ConditionValue::Token(token.to_owned()))
    }

    pub fn le(schema: &[AttributeSchema], attribute: usize, threshold: f64) -> Result<Self, ConditionError> {
        Self::new(schema, attribute, Operator::Le, ConditionValue::Number(threshold))
    }

    pub fn gt(schema: &[AttributeSchema], attribute: usize, threshold: f64) -> Result<Self, ConditionError> {
        Self::new(schema, attribute, Operator::Gt, ConditionValue::Number(threshold))
    }

    /// Constructor for callers that already guarantee validity.
    pub(crate) fn new_unchecked(attribute: usize, op: Operator, value: ConditionValue) -> Self {
        Condition {
            attribute,
            op,
            value,
        }
    }

    pub fn attribute(&self) -> usize {
        self.attribute
    }

    pub fn operator(&self) -> Operator {
        self.op
    }

    pub fn value(&self) -> &ConditionValue {
        &self.value
    }

    pub fn token(&self) -> Option<&str> {
        match &self.value {
            ConditionValue::Token(t) => Some(t),
            ConditionValue::Number(_) => None,
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.value {
            ConditionValue::Number(v) => Some(v),
            ConditionValue::Token(_) => None,
        }
    }

    /// Whether instance `n` satisfies the condition. A missing cell never does.
    pub fn matches(&self, dataset: &Dataset, n: usize) -> bool {
        self.matcher(dataset).test(n)
    }

    /// Resolves the condition against a dataset once, for repeated tests.
    pub fn matcher<'a>(&self, dataset: &'a Dataset) -> Matcher<'a> {
        match (dataset.column(self.attribute), &self.value) {
            (Column::Discrete(col), ConditionValue::Token(t)) => match col.code_of(t) {
                Some(code) => Matcher::Code(col.codes(), code),
                None => Matcher::Never,
            },
            (Column::Numeric(col), ConditionValue::Number(v)) => match self.op {
                Operator::Le => Matcher::Le(col.values(), *v),
                _ => Matcher::Gt(col.values(), *v),
            },
            _ => Matcher::Never,
        }
    }

    /// `name op value` using the schema's attribute names.
    pub fn display<'a>(&'a self, schema: &'a [AttributeSchema]) -> impl fmt::Display + 'a {
        crate::syndrome::dsl::ConditionDisplay::new(self, schema)
    }
}

/// A condition resolved against a concrete dataset.
#[derive(Debug, Clone, Copy)]
pub enum Matcher<'a> {
    Code(&'a [u32], u32),
    Le(&'a [f64], f64),
    Gt(&'a [f64], f64),
    Never,
}

impl Matcher<'_> {
    #[inline]
    pub fn test(&self, n: usize) -> bool {
        match *self {
            Matcher::Code(codes, code) => code != MISSING && codes[n] == code,
            // NaN marks MISSING and fails both comparisons.
            Matcher::Le(values, t) => values[n] <= t,
            Matcher::Gt(values, t) => values[n] > t,
            Matcher::Never => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DiscreteColumn, NumericColumn};
    use chrono::NaiveDate;

    fn dataset() -> Dataset {
        let schema = vec![
            AttributeSchema::new("icd", AttributeKind::Discrete),
            AttributeSchema::new("temperature", AttributeKind::Numeric),
        ];
        let icd = DiscreteColumn::from_cells(&[Some("J10"), Some("J11"), None]);
        let temp = NumericColumn::from_cells(&[Some(38.5), None, Some(39.0)]).unwrap();
        let d = NaiveDate::from_ymd_opt(2017, 1, 5).unwrap();
        Dataset::new(schema, vec![Column::Discrete(icd), Column::Numeric(temp)], vec![d; 3]).unwrap()
    }

    #[test]
    fn equality_on_token() {
        let ds = dataset();
        let c = Condition::eq(ds.schema(), 0, "J10").unwrap();
        assert!(c.matches(&ds, 0));
        assert!(!c.matches(&ds, 1));
        assert!(!c.matches(&ds, 2));
    }

    #[test]
    fn missing_never_matches() {
        let ds = dataset();
        assert!(!Condition::gt(ds.schema(), 1, 38.5).unwrap().matches(&ds, 1));
        assert!(!Condition::le(ds.schema(), 1, 38.5).unwrap().matches(&ds, 1));
    }

    #[test]
    fn le_inclusive_gt_strict() {
        let ds = dataset();
        assert!(Condition::le(ds.schema(), 1, 38.5).unwrap().matches(&ds, 0));
        assert!(!Condition::gt(ds.schema(), 1, 38.5).unwrap().matches(&ds, 0));
        assert!(Condition::gt(ds.schema(), 1, 38.5).unwrap().matches(&ds, 2));
    }

    #[test]
    fn unknown_token_matches_nothing() {
        let ds = dataset();
        let c = Condition::eq(ds.schema(), 0, "A00").unwrap();
        assert!((0..3).all(|n| !c.matches(&ds, n)));
    }

    #[test]
    fn kind_checks() {
        let ds = dataset();
        assert!(matches!(
            Condition::le(ds.schema(), 0, 1.0),
            Err(ConditionError::KindMismatch { .. })
        ));
        assert!(matches!(
            Condition::eq(ds.schema(), 1, "x"),
            Err(ConditionError::KindMismatch { .. })
        ));
        assert!(matches!(
            Condition::gt(ds.schema(), 1, f64::NAN),
            Err(ConditionError::NonFinite(_))
        ));
        assert!(Condition::eq(ds.schema(), 5, "x").is_err());
    }
}
