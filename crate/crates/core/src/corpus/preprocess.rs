use std::collections::BTreeSet;

use tracing::warn;

use super::stem::stem;
use super::tokenize::{split_words, tokenize_identifier_with};
use super::wordlist::WordList;
use super::{BugReport, Changeset, CorpusError, Document, HunkLine};

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// How many times each touched file's base name enters a changeset document.
    pub filename_repeat: u32,
    pub keep_unsplit: bool,
    /// Context lines kept on either side of a change.
    pub context_lines: usize,
    pub code_keywords: WordList,
    pub stopwords: WordList,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            filename_repeat: 10,
            keep_unsplit: true,
            context_lines: 3,
            code_keywords: WordList::java_keywords(),
            stopwords: WordList::english_stopwords(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.filename_repeat == 0 {
            return Err(CorpusError::InvalidConfig(
                "filename_repeat must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Pipeline {
    Code,
    NaturalLanguage,
}

fn is_noise(piece: &str) -> bool {
    piece.chars().count() < 2 || piece.chars().all(|c| c.is_ascii_digit())
}

/// Runs `text` through tokenization, filtering and stemming, adding each
/// surviving term `weight` times.
fn add_text(doc: &mut Document, text: &str, cfg: &PreprocessConfig, pipeline: Pipeline, weight: u32) {
    for word in split_words(text) {
        for piece in tokenize_identifier_with(word, cfg.keep_unsplit) {
            if is_noise(&piece) {
                continue;
            }
            let dropped = match pipeline {
                Pipeline::Code => cfg.code_keywords.contains(&piece),
                Pipeline::NaturalLanguage => cfg.stopwords.contains(&piece),
            };
            if dropped {
                continue;
            }
            let term = stem(&piece);
            if !is_noise(&term) {
                doc.add(&term, weight);
            }
        }
    }
}

fn base_name(path: &str) -> &str {
    let file = path.rsplit(['/', '\\']).next().unwrap_or(path);
    match file.rfind('.') {
        Some(0) | None => file,
        Some(dot) => &file[..dot],
    }
}

/// Indices of lines within `context_lines` of a changed line.
fn kept_lines(lines: &[HunkLine], context_lines: usize) -> Vec<bool> {
    let changed: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !matches!(l, HunkLine::Context(_)))
        .map(|(i, _)| i)
        .collect();
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| match l {
            HunkLine::Context(_) => changed.iter().any(|&c| c.abs_diff(i) <= context_lines),
            _ => true,
        })
        .collect()
}

/// Builds the changeset document: boosted file base names, hunk lines and
/// the commit message, through the source-code pipeline.
pub fn preprocess_changeset(cs: &Changeset, cfg: &PreprocessConfig) -> Result<Document, CorpusError> {
    cfg.validate()?;
    let mut doc = Document::new(&cs.sha);
    for file in &cs.files {
        add_text(&mut doc, base_name(&file.path), cfg, Pipeline::Code, cfg.filename_repeat);
        for hunk in &file.hunks {
            let keep = kept_lines(&hunk.lines, cfg.context_lines);
            for (line, keep) in hunk.lines.iter().zip(keep) {
                if keep {
                    add_text(&mut doc, line.text(), cfg, Pipeline::Code, 1);
                }
            }
        }
    }
    add_text(&mut doc, &cs.message, cfg, Pipeline::Code, 1);
    if doc.is_empty() {
        return Err(CorpusError::EmptyDocument(cs.sha.clone()));
    }
    Ok(doc)
}

/// Summary plus description through the natural-language pipeline.
pub fn preprocess_bug_report(br: &BugReport, cfg: &PreprocessConfig) -> Result<Document, CorpusError> {
    preprocess_natural_text(&br.id, &br.full_text(), cfg)
}

/// The natural-language pipeline on arbitrary text (commit messages used as
/// stand-in bug reports go through here too).
pub fn preprocess_natural_text(
    source_id: &str,
    text: &str,
    cfg: &PreprocessConfig,
) -> Result<Document, CorpusError> {
    let mut doc = Document::new(source_id);
    add_text(&mut doc, text, cfg, Pipeline::NaturalLanguage, 1);
    if doc.is_empty() {
        return Err(CorpusError::EmptyDocument(source_id.to_owned()));
    }
    Ok(doc)
}

/// A class or method body through the source-code pipeline, with the
/// owning class name added once.
pub fn preprocess_source_unit(
    source_id: &str,
    class_name: &str,
    text: &str,
    cfg: &PreprocessConfig,
) -> Result<Document, CorpusError> {
    let mut doc = Document::new(source_id);
    add_text(&mut doc, class_name, cfg, Pipeline::Code, 1);
    add_text(&mut doc, text, cfg, Pipeline::Code, 1);
    if doc.is_empty() {
        return Err(CorpusError::EmptyDocument(source_id.to_owned()));
    }
    Ok(doc)
}

/// `camelCase`, `PascalCase` or an acronym followed by a word (`XMLParser`).
pub fn is_camel_case(token: &str) -> bool {
    let chars: Vec<char> = token.chars().collect();
    chars.windows(2).any(|w| w[0].is_lowercase() && w[1].is_uppercase())
        || chars
            .windows(3)
            .any(|w| w[0].is_uppercase() && w[1].is_uppercase() && w[2].is_lowercase())
}

/// Fraction of the report's raw whitespace tokens that look like code: camel
/// case, or an exact match of a class name in the current snapshot.
pub fn code_token_ratio(br: &BugReport, class_names: &BTreeSet<String>) -> f64 {
    let text = format!("{} {}", br.summary, br.description);
    let mut total = 0usize;
    let mut code = 0usize;
    for raw in text.split_whitespace() {
        let token = raw.trim_matches(|c: char| !(c.is_alphanumeric() || c == '_'));
        if token.is_empty() {
            continue;
        }
        total += 1;
        if is_camel_case(token) || class_names.contains(token) {
            code += 1;
        }
    }
    if total == 0 {
        warn!(bug = %br.id, "bug report has no tokens; code-token ratio set to 0");
        return 0.0;
    }
    code as f64 / total as f64
}
