//! Raw inputs (diffs, bug reports, class sources) and the two preprocessing
//! pipelines that turn them into bags of terms.

mod diff;
mod methods;
mod preprocess;
pub mod stem;
mod tokenize;
mod tree;
mod wordlist;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{parse_diff, render_file_diff, CommitMeta};
pub use methods::segment_methods;
pub use preprocess::{
    code_token_ratio, is_camel_case, preprocess_bug_report, preprocess_changeset,
    preprocess_natural_text, preprocess_source_unit, PreprocessConfig,
};
pub use tokenize::{split_words, tokenize_identifier, tokenize_identifier_with};
pub use tree::SourceTree;
pub use wordlist::{parse_word_list, WordList};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("malformed diff at line {line}: {reason}")]
    MalformedDiff { line: usize, reason: String },
    #[error("no tokens survived preprocessing for `{0}`")]
    EmptyDocument(String),
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
    #[error("cannot apply change to `{path}`: {reason}")]
    PatchMismatch { path: String, reason: String },
}

/// One commit: metadata plus the parsed diff against its first parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Changeset {
    pub sha: String,
    /// Seconds since the epoch, UTC.
    pub timestamp: i64,
    pub author: String,
    pub message: String,
    pub files: Vec<FileChange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileStatus {
    Added,
    Deleted,
    Modified,
    Renamed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    /// Path after the change (the pre-image path for deletions).
    pub path: String,
    /// Pre-image path when it differs from `path`.
    pub old_path: Option<String>,
    pub status: FileStatus,
    pub hunks: Vec<Hunk>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HunkLine {
    Context(String),
    Added(String),
    Removed(String),
}

impl HunkLine {
    pub fn text(&self) -> &str {
        match self {
            HunkLine::Context(s) | HunkLine::Added(s) | HunkLine::Removed(s) => s,
        }
    }
}

/// A hunk keeps its lines in diff order so the change can be re-applied;
/// `added`, `removed` and `context` give the per-kind views.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    pub fn added(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().filter_map(|l| match l {
            HunkLine::Added(s) => Some(s.as_str()),
            _ => None,
        })
    }

    pub fn removed(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().filter_map(|l| match l {
            HunkLine::Removed(s) => Some(s.as_str()),
            _ => None,
        })
    }

    pub fn context(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().filter_map(|l| match l {
            HunkLine::Context(s) => Some(s.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub timestamp_reported: i64,
    pub summary: String,
    #[serde(default)]
    pub description: String,
}

impl BugReport {
    pub fn full_text(&self) -> String {
        if self.description.is_empty() {
            self.summary.clone()
        } else {
            format!("{}\n{}", self.summary, self.description)
        }
    }
}

/// Bag of preprocessed terms. Keyed by term so the same document can be
/// encoded against either model's vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    pub source_id: String,
    pub term_counts: BTreeMap<String, u32>,
    pub total_tokens: u64,
}

impl Document {
    pub fn new(source_id: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            ..Self::default()
        }
    }

    pub fn add(&mut self, term: &str, count: u32) {
        if count == 0 {
            return;
        }
        *self.term_counts.entry(term.to_owned()).or_insert(0) += count;
        self.total_tokens += u64::from(count);
    }

    pub fn count(&self, term: &str) -> u32 {
        self.term_counts.get(term).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.total_tokens == 0
    }

    /// Builds a document directly from already-preprocessed terms.
    pub fn from_terms<'a>(
        source_id: impl Into<String>,
        terms: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut doc = Self::new(source_id);
        for t in terms {
            doc.add(t, 1);
        }
        doc
    }
}
