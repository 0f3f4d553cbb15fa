//! Concrete syntax for the five document kinds: policies (`.dcp`), policy
//! traces (`.dct`), architectures (`.dca`), architecture traces (`.dcat`)
//! and HAS queries (`.dcq`).
//!
//! Parsing never panics; every failure carries the position it was found
//! at and, for syntax errors, the tokens that would have been accepted.
//! Serialization is canonical, and `parse(serialize(d)) == d`.

mod lexer;
mod parser;
mod print;

use std::collections::BTreeSet;
use std::fmt;

use crate::arch::{ArchEvent, Architecture};
use crate::logic::HasProperty;
use crate::model::PolicyModel;
use crate::semantics::AbstractEvent;

pub use lexer::quote;
pub use print::{
    render_activity, render_arch_event, render_event, serialize_arch_trace, serialize_architecture,
    serialize_policy, serialize_query, serialize_trace,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceSpan {
    pub file: Option<String>,
    pub line: usize,
    pub column: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize) -> Self {
        Self {
            file: None,
            line,
            column,
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    /// Tokens that would have been accepted at `span`.
    pub expected: BTreeSet<String>,
}

impl ParseError {
    pub fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        Self {
            span,
            message: message.into(),
            expected: BTreeSet::new(),
        }
    }

    pub fn with_file(mut self, file: impl Into<String>) -> Self {
        self.span.file = Some(file.into());
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)?;
        if !self.expected.is_empty() {
            let list: Vec<&str> = self.expected.iter().map(String::as_str).collect();
            write!(f, " (expected one of: {})", list.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DocKind {
    Policy,
    Trace,
    Architecture,
    ArchTrace,
    Query,
}

impl DocKind {
    pub const ALL: [DocKind; 5] = [
        DocKind::Policy,
        DocKind::Trace,
        DocKind::Architecture,
        DocKind::ArchTrace,
        DocKind::Query,
    ];

    pub fn extension(self) -> &'static str {
        match self {
            DocKind::Policy => "dcp",
            DocKind::Trace => "dct",
            DocKind::Architecture => "dca",
            DocKind::ArchTrace => "dcat",
            DocKind::Query => "dcq",
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.extension() == ext)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Policy(PolicyModel),
    Trace(Vec<AbstractEvent>),
    Architecture(Architecture),
    ArchTrace(Vec<ArchEvent>),
    Query(HasProperty),
}

impl Payload {
    pub fn kind(&self) -> DocKind {
        match self {
            Payload::Policy(_) => DocKind::Policy,
            Payload::Trace(_) => DocKind::Trace,
            Payload::Architecture(_) => DocKind::Architecture,
            Payload::ArchTrace(_) => DocKind::ArchTrace,
            Payload::Query(_) => DocKind::Query,
        }
    }
}

/// A parsed document with the source position of each top-level item
/// (declaration, event or activity) in source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub payload: Payload,
    pub spans: Vec<SourceSpan>,
}

impl Document {
    pub fn kind(&self) -> DocKind {
        self.payload.kind()
    }
}

pub fn parse_policy(text: &str) -> Result<PolicyModel, ParseError> {
    parser::policy(text).map(|(m, _)| m)
}

/// Parse a policy trace; actions, data and aliases resolve against `model`.
pub fn parse_trace(text: &str, model: &PolicyModel) -> Result<Vec<AbstractEvent>, ParseError> {
    parser::trace(text, model).map(|(t, _)| t)
}

pub fn parse_architecture(text: &str) -> Result<Architecture, ParseError> {
    parser::architecture(text).map(|(a, _)| a)
}

pub fn parse_arch_trace(text: &str) -> Result<Vec<ArchEvent>, ParseError> {
    parser::arch_trace(text).map(|(t, _)| t)
}

pub fn parse_has_query(text: &str) -> Result<HasProperty, ParseError> {
    parser::query(text)
}

/// Parse any document kind. Traces need the policy model they refer to.
pub fn parse_document(
    kind: DocKind,
    text: &str,
    model: Option<&PolicyModel>,
) -> Result<Document, ParseError> {
    let (payload, spans) = match kind {
        DocKind::Policy => parser::policy(text).map(|(m, s)| (Payload::Policy(m), s))?,
        DocKind::Trace => {
            let empty = PolicyModel::default();
            parser::trace(text, model.unwrap_or(&empty)).map(|(t, s)| (Payload::Trace(t), s))?
        }
        DocKind::Architecture => {
            parser::architecture(text).map(|(a, s)| (Payload::Architecture(a), s))?
        }
        DocKind::ArchTrace => parser::arch_trace(text).map(|(t, s)| (Payload::ArchTrace(t), s))?,
        DocKind::Query => (
            Payload::Query(parser::query(text)?),
            vec![SourceSpan::new(1, 1)],
        ),
    };
    Ok(Document { payload, spans })
}

/// Canonical text. Traces collapse alias expansions back into alias calls
/// when `model` declares the alias.
pub fn serialize(doc: &Document, model: Option<&PolicyModel>) -> String {
    serialize_payload(&doc.payload, model)
}

pub fn serialize_payload(payload: &Payload, model: Option<&PolicyModel>) -> String {
    match payload {
        Payload::Policy(m) => serialize_policy(m),
        Payload::Trace(t) => serialize_trace(t, model),
        Payload::Architecture(a) => serialize_architecture(a),
        Payload::ArchTrace(t) => serialize_arch_trace(t),
        Payload::Query(q) => serialize_query(q),
    }
}
