//! The textual workflow language.
//!
//! A workflow file starts with `workflow <name>` and then declares one
//! operator per line:
//!
//! ```text
//! workflow census
//! source data = csv("census.csv")
//! extractor edu = categorical(data, "education")
//! learner model = logreg(edu, label="income", reg=0.1)
//! ```
//!
//! Bare identifiers in argument position are parent references and must name
//! an earlier declaration. `#` starts a comment that runs to the end of the
//! line.

mod normalize;
mod parser;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use normalize::{format_number, normalize, render_decl};
pub use parser::parse;

/// Operator functions the engine knows how to run.
pub const KNOWN_FUNCS: &[&str] = &[
    "csv",
    "numeric",
    "categorical",
    "bucketize",
    "label",
    "union",
    "logreg",
    "predict",
    "accuracy",
    "f1",
    "sim",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclKind {
    Source,
    Extractor,
    Features,
    Learner,
    Output,
    Metric,
    Sim,
}

impl DeclKind {
    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "source" => Self::Source,
            "extractor" => Self::Extractor,
            "features" => Self::Features,
            "learner" => Self::Learner,
            "output" => Self::Output,
            "metric" => Self::Metric,
            "sim" => Self::Sim,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Self::Source => "source",
            Self::Extractor => "extractor",
            Self::Features => "features",
            Self::Learner => "learner",
            Self::Output => "output",
            Self::Metric => "metric",
            Self::Sim => "sim",
        }
    }

    /// Outputs and metrics are the results a workflow exists to produce.
    pub fn is_sink(self) -> bool {
        matches!(self, Self::Output | Self::Metric)
    }
}

impl fmt::Display for DeclKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Literal value of a keyword argument.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Num(f64),
    Ident(String),
}

impl Literal {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) | Literal::Ident(s) => Some(s),
            Literal::Num(_) => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Literal::Num(n) => Some(*n),
            _ => None,
        }
    }
}

/// Positional argument: either a parent reference or a literal.
#[derive(Debug, Clone, PartialEq)]
pub enum Positional {
    Ref(String),
    Str(String),
    Num(f64),
}

/// One operator declaration.
///
/// Positional arguments keep their file order; keyword arguments are keyed by
/// name, so their order never matters. `line` is informational and does not
/// take part in equality.
#[derive(Debug, Clone)]
pub struct Decl {
    pub kind: DeclKind,
    pub name: String,
    pub func: String,
    pub positional: Vec<Positional>,
    pub named: BTreeMap<String, Literal>,
    pub line: usize,
}

impl PartialEq for Decl {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.name == other.name
            && self.func == other.func
            && self.positional == other.positional
            && self.named == other.named
    }
}

impl Decl {
    /// Names of parent declarations, in argument order.
    pub fn parents(&self) -> impl Iterator<Item = &str> {
        self.positional.iter().filter_map(|a| match a {
            Positional::Ref(name) => Some(name.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkflowAst {
    pub name: String,
    pub decls: Vec<Decl>,
}

impl WorkflowAst {
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name == name)
    }
}

/// Name-keyed change summary between two programs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclDiff {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub modified: BTreeSet<String>,
}

impl DeclDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }
}

/// Compares two programs declaration by declaration. A renamed declaration
/// shows up as one removal plus one addition.
pub fn diff(a: &WorkflowAst, b: &WorkflowAst) -> DeclDiff {
    let left: BTreeMap<&str, String> = a
        .decls
        .iter()
        .map(|d| (d.name.as_str(), render_decl(d)))
        .collect();
    let right: BTreeMap<&str, String> = b
        .decls
        .iter()
        .map(|d| (d.name.as_str(), render_decl(d)))
        .collect();

    let mut out = DeclDiff::default();
    for (name, text) in &left {
        match right.get(name) {
            None => {
                out.removed.insert(name.to_string());
            }
            Some(other) if other != text => {
                out.modified.insert(name.to_string());
            }
            Some(_) => {}
        }
    }
    for name in right.keys() {
        if !left.contains_key(name) {
            out.added.insert(name.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate declaration `{name}`")]
    DuplicateName { name: String, line: usize },
    #[error("line {line}: unknown reference `{name}`")]
    UnknownReference { name: String, line: usize },
    #[error("line {line}: unknown declaration kind `{kind}`")]
    UnknownKind { kind: String, line: usize },
    #[error("line {line}: unknown operator function `{func}`")]
    UnknownFunc { func: String, line: usize },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::DuplicateName { line, .. }
            | ParseError::UnknownReference { line, .. }
            | ParseError::UnknownKind { line, .. }
            | ParseError::UnknownFunc { line, .. } => *line,
        }
    }
}
