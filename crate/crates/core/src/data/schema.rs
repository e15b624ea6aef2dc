// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use super::DataError;

/// Value type of an attribute column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Discrete,
    Numeric,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeKind::Discrete => f.write_str("discrete"),
            AttributeKind::Numeric => f.write_str("numeric"),
        }
    }
}

impl FromStr for AttributeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "discrete" => Ok(AttributeKind::Discrete),
            "numeric" => Ok(AttributeKind::Numeric),
            other => Err(format!("unknown attribute kind `{other}`")),
        }
    }
}

/// Declaration of one attribute column.
///
/// `category` is a free-form tag. Schema files may give it as a number
/// (`"category": 3`) or a string; either way it is stored as text so that
/// category filters compare uniformly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "category_tag"
    )]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub blacklisted: bool,
}

impl AttributeSchema {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        AttributeSchema {
            name: name.into(),
            kind,
            category: None,
            blacklisted: false,
        }
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }
}

fn category_tag<'de, D>(deserializer: D) -> Result<Option<String>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Tag {
        Int(i64),
        Text(String),
    }
    Ok(Option::<Tag>::deserialize(deserializer)?.map(|tag| match tag {
        Tag::Int(i) => i.to_string(),
        Tag::Text(s) => s,
    }))
}

/// Checks that attribute names are unique and none collides with the
/// reserved `date` column.
pub fn validate_schema(schema: &[AttributeSchema]) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for attr in schema {
        if attr.name == super::DATE_COLUMN {
            return Err(DataError::ReservedName(attr.name.clone()));
        }
        if attr.name.is_empty() {
            return Err(DataError::Schema("attribute name must not be empty".into()));
        }
        if !seen.insert(attr.name.as_str()) {
            return Err(DataError::DuplicateAttribute(attr.name.clone()));
        }
    }
    Ok(())
}

/// Parses a JSON schema document: an array of attribute declarations.
pub fn parse_schema(text: &str) -> Result<Vec<AttributeSchema>, DataError> {
    let schema: Vec<AttributeSchema> =
        serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
    validate_schema(&schema)?;
    Ok(schema)
}

pub fn load_schema(path: &Path) -> Result<Vec<AttributeSchema>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_schema(&text)
}
