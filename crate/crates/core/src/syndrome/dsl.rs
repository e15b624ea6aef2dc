// SPDX-License-Identifier: Apache-2.0

//! Text form of syndromes.
//!
//! ```text
//! syndrome := "FALSE" | conj ("OR" conj)*
//! conj     := atom ("AND" atom)*
//! atom     := cond | "(" conj ")"
//! cond     := name op literal
//! op       := "=" | "<=" | ">"
//! ```
//!
//! Names are bare identifiers or double-quoted strings. Discrete literals are
//! double-quoted (`\"` and `\\` escape); numeric literals are decimal numbers.
//! Keywords are case-insensitive. `#` starts a comment running to the end of
//! the line. Positions in errors are 1-based.

use std::fmt;

use thiserror::Error;

use super::{Conjunction, Syndrome, SyndromeError};
use crate::data::{AttributeKind, AttributeSchema, Condition, ConditionValue, Operator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown attribute `{name}` at line {line}, column {column}")]
    UnknownAttribute {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("line {line}, column {column}: {message}")]
    KindMismatch {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid conjunction at line {line}, column {column}: {source}")]
    Conjunction {
        line: usize,
        column: usize,
        #[source]
        source: SyndromeError,
    },
}

impl DslError {
    /// `(line, column)` of the offending input.
    pub fn position(&self) -> (usize, usize) {
        match self {
            DslError::Syntax { line, column, .. }
            | DslError::UnknownAttribute { line, column, .. }
            | DslError::KindMismatch { line, column, .. }
            | DslError::Conjunction { line, column, .. } => (*line, *column),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            DslError::Syntax { .. } => "syntax_error",
            DslError::UnknownAttribute { .. } => "unknown_attribute",
            DslError::KindMismatch { .. } => "kind_mismatch",
            DslError::Conjunction { .. } => "invalid_conjunction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Op(Operator),
    And,
    Or,
    False,
    LParen,
    RParen,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("name `{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Num(v) => format!("number {v}"),
            Tok::Op(op) => format!("`{op}`"),
            Tok::And => "`AND`".into(),
            Tok::Or => "`OR`".into(),
            Tok::False => "`FALSE`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

fn syntax(pos: Pos, message: impl Into<String>) -> DslError {
    DslError::Syntax {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn keyword(word: &str) -> Option<Tok> {
    if word.eq_ignore_ascii_case("and") {
        Some(Tok::And)
    } else if word.eq_ignore_ascii_case("or") {
        Some(Tok::Or)
    } else if word.eq_ignore_ascii_case("false") {
        Some(Tok::False)
    } else {
        None
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut column) = (0, 1, 1);
    // End-of-input errors point at the last token, which is where an editor
    // can still show the cursor.
    let mut last = Pos { line: 1, column: 1 };

    macro_rules! advance {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance!();
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance!();
            }
            continue;
        }
        let pos = Pos { line, column };
        last = pos;
        let tok = match c {
            '(' => {
                advance!();
                Tok::LParen
            }
            ')' => {
                advance!();
                Tok::RParen
            }
            '=' => {
                advance!();
                Tok::Op(Operator::Eq)
            }
            '>' => {
                advance!();
                if i < chars.len() && chars[i] == '=' {
                    return Err(syntax(pos, "`>=` is not supported; use `>` with an adjusted threshold"));
                }
                Tok::Op(Operator::Gt)
            }
            '<' => {
                advance!();
                if i < chars.len() && chars[i] == '=' {
                    advance!();
                    Tok::Op(Operator::Le)
                } else {
                    return Err(syntax(pos, "`<` is not supported; use `<=`"));
                }
            }
            '"' => {
                advance!();
                let mut s = String::new();
                loop {
                    if i >= chars.len() {
                        return Err(syntax(pos, "unterminated string"));
                    }
                    match chars[i] {
                        '"' => {
                            advance!();
                            break;
                        }
                        '\n' => return Err(syntax(pos, "unterminated string")),
                        '\\' => {
                            let esc = Pos { line, column };
                            advance!();
                            match chars.get(i) {
                                Some(&ch @ ('"' | '\\')) => {
                                    s.push(ch);
                                    advance!();
                                }
                                _ => return Err(syntax(esc, "invalid escape; only \\\" and \\\\ are allowed")),
                            }
                        }
                        ch => {
                            s.push(ch);
                            advance!();
                        }
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                advance!();
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric()
                        || chars[i] == '.'
                        || ((chars[i] == '-' || chars[i] == '+')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    advance!();
                }
                let word: String = chars[start..i].iter().collect();
                let valid = word
                    .trim_start_matches(['-', '+'])
                    .chars()
                    .next()
                    .is_some_and(|ch| ch.is_ascii_digit() || ch == '.')
                    && !word.contains(['i', 'I', 'n', 'N']);
                match word.parse::<f64>() {
                    Ok(v) if valid && v.is_finite() => Tok::Num(v),
                    _ => return Err(syntax(pos, format!("invalid number `{word}`"))),
                }
            }
            c if is_ident_start(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    advance!();
                }
                let word: String = chars[start..i].iter().collect();
                keyword(&word).unwrap_or(Tok::Ident(word))
            }
            other => return Err(syntax(pos, format!("unexpected character `{other}`"))),
        };
        out.push((tok, pos));
    }
    out.push((Tok::Eof, last));
    Ok(out)
}

/// Syntax tree before name resolution.
struct RawCond {
    name: String,
    name_pos: Pos,
    op: Operator,
    value: Tok,
    value_pos: Pos,
}

struct RawConj {
    conds: Vec<RawCond>,
    pos: Pos,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> DslError {
        syntax(
            self.pos(),
            format!("expected {expected}, found {}", self.peek().describe()),
        )
    }

    fn syndrome(&mut self) -> Result<Vec<RawConj>, DslError> {
        if *self.peek() == Tok::False {
            self.bump();
            return match self.peek() {
                Tok::Eof => Ok(Vec::new()),
                _ => Err(self.unexpected("end of input after `FALSE`")),
            };
        }
        let mut conjs = vec![self.conj(0)?];
        loop {
            match self.peek() {
                Tok::Or => {
                    self.bump();
                    conjs.push(self.conj(0)?);
                }
                Tok::Eof => return Ok(conjs),
                _ => return Err(self.unexpected("`AND`, `OR` or end of input")),
            }
        }
    }

    fn conj(&mut self, depth: usize) -> Result<RawConj, DslError> {
        let pos = self.pos();
        let mut conds = Vec::new();
        self.atom(depth, &mut conds)?;
        while *self.peek() == Tok::And {
            self.bump();
            self.atom(depth, &mut conds)?;
        }
        Ok(RawConj { conds, pos })
    }

    fn atom(&mut self, depth: usize, out: &mut Vec<RawCond>) -> Result<(), DslError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let inner = self.conj(depth + 1)?;
            match self.peek() {
                Tok::RParen => {
                    self.bump();
                }
                Tok::Or => {
                    return Err(syntax(
                        self.pos(),
                        "`OR` inside parentheses; syndromes must be in disjunctive normal form",
                    ))
                }
                _ => return Err(self.unexpected("`)`")),
            }
            out.extend(inner.conds);
            return Ok(());
        }
        out.push(self.cond()?);
        Ok(())
    }

    fn cond(&mut self) -> Result<RawCond, DslError> {
        let (name, name_pos) = match self.peek().clone() {
            Tok::Ident(s) | Tok::Str(s) => {
                let pos = self.pos();
                self.bump();
                (s, pos)
            }
            _ => return Err(self.unexpected("an attribute name")),
        };
        let op = match self.peek() {
            Tok::Op(op) => {
                let op = *op;
                self.bump();
                op
            }
            _ => return Err(self.unexpected("`=`, `<=` or `>`")),
        };
        let value_pos = self.pos();
        let value = match (op, self.peek()) {
            (_, Tok::Num(_)) | (Operator::Eq, Tok::Ident(_) | Tok::Str(_)) => self.bump().0,
            (Operator::Eq, _) => return Err(self.unexpected("a token or a number")),
            _ => return Err(self.unexpected("a number")),
        };
        Ok(RawCond {
            name,
            name_pos,
            op,
            value,
            value_pos,
        })
    }
}

fn resolve(raw: RawCond, schema: &[AttributeSchema]) -> Result<Condition, DslError> {
    let attribute = schema
        .iter()
        .position(|a| a.name == raw.name)
        .ok_or_else(|| DslError::UnknownAttribute {
            name: raw.name.clone(),
            line: raw.name_pos.line,
            column: raw.name_pos.column,
        })?;
    let kind = schema[attribute].kind;
    let mismatch = |pos: Pos, message: String| DslError::KindMismatch {
        line: pos.line,
        column: pos.column,
        message,
    };
    if raw.op.applies_to() != kind {
        return Err(mismatch(
            raw.name_pos,
            format!("operator `{}` cannot be applied to {kind} attribute `{}`", raw.op, raw.name),
        ));
    }
    let value = match (kind, raw.value) {
        (AttributeKind::Discrete, Tok::Str(s) | Tok::Ident(s)) => ConditionValue::Token(s),
        (AttributeKind::Numeric, Tok::Num(v)) => ConditionValue::Number(v),
        (AttributeKind::Discrete, _) => {
            return Err(mismatch(
                raw.value_pos,
                format!("discrete attribute `{}` needs a token; quote numeric-looking tokens", raw.name),
            ))
        }
        (AttributeKind::Numeric, _) => {
            return Err(mismatch(
                raw.value_pos,
                format!("numeric attribute `{}` needs a number", raw.name),
            ))
        }
    };
    Condition::new(schema, attribute, raw.op, value)
        .map_err(|e| mismatch(raw.name_pos, e.to_string()))
}

/// Parses DSL text into a syndrome, resolving names against `schema`.
pub fn parse_syndrome(text: &str, schema: &[AttributeSchema]) -> Result<Syndrome, DslError> {
    let mut parser = Parser { toks: lex(text)?, at: 0 };
    let raw = parser.syndrome()?;
    let mut conjunctions = Vec::with_capacity(raw.len());
    for conj in raw {
        let conditions = conj
            .conds
            .into_iter()
            .map(|c| resolve(c, schema))
            .collect::<Result<Vec<_>, _>>()?;
        let conjunction = Conjunction::new(conditions).map_err(|source| DslError::Conjunction {
            line: conj.pos.line,
            column: conj.pos.column,
            source,
        })?;
        conjunctions.push(conjunction);
    }
    Ok(Syndrome::new(conjunctions))
}

/// Parses a single condition such as `icd = "Z96.0"`.
pub fn parse_condition(text: &str, schema: &[AttributeSchema]) -> Result<Condition, DslError> {
    let mut parser = Parser { toks: lex(text)?, at: 0 };
    let raw = parser.cond()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.unexpected("end of input"));
    }
    resolve(raw, schema)
}

/// Canonical text: one conjunction per line, lines after the first
/// prefixed with `OR`; `FALSE` for the empty syndrome.
pub fn format_syndrome(syndrome: &Syndrome, schema: &[AttributeSchema]) -> String {
    syndrome.display(schema).to_string()
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for ch in s.chars() {
        if ch == '"' || ch == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{ch}")?;
    }
    f.write_str("\"")
}

fn is_bare_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(is_ident_start) && chars.all(is_ident_char) && keyword(name).is_none()
}

pub(crate) struct ConditionDisplay<'a> {
    condition: &'a Condition,
    schema: &'a [AttributeSchema],
}

impl<'a> ConditionDisplay<'a> {
    pub(crate) fn new(condition: &'a Condition, schema: &'a [AttributeSchema]) -> Self {
        ConditionDisplay { condition, schema }
    }
}

impl fmt::Display for ConditionDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.condition;
        match self.schema.get(c.attribute()) {
            Some(attr) if is_bare_name(&attr.name) => f.write_str(&attr.name)?,
            Some(attr) => write_quoted(f, &attr.name)?,
            None => write!(f, "<attribute {}>", c.attribute())?,
        }
        write!(f, " {} ", c.operator())?;
        match c.value() {
            ConditionValue::Token(t) => write_quoted(f, t),
            // `Display` for f64 is the shortest string that parses back to
            // the same value.
            ConditionValue::Number(v) => write!(f, "{v}"),
        }
    }
}

pub(crate) struct SyndromeDisplay<'a> {
    pub(crate) syndrome: &'a Syndrome,
    pub(crate) schema: &'a [AttributeSchema],
}

impl fmt::Display for SyndromeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.syndrome.is_empty() {
            return f.write_str("FALSE");
        }
        for (i, conj) in self.syndrome.conjunctions().iter().enumerate() {
            if i > 0 {
                f.write_str("\nOR ")?;
            }
            for (j, cond) in conj.conditions().iter().enumerate() {
                if j > 0 {
                    f.write_str(" AND ")?;
                }
                write!(f, "{}", ConditionDisplay::new(cond, self.schema))?;
            }
        }
        Ok(())
    }
}
