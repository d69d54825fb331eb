//! The three exchange formats: changesets and bug reports as JSON lines,
//! fix links as CSV.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use changeloc_core::corpus::{parse_diff, BugReport, Changeset, CommitMeta};
use changeloc_core::evaluation::FixLink;

/// One commit as exported: metadata plus the raw unified diff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangesetRecord {
    pub sha: String,
    pub timestamp: i64,
    pub author: String,
    pub message: String,
    pub diff: String,
}

impl ChangesetRecord {
    pub fn parse(&self) -> Result<Changeset> {
        let meta = CommitMeta {
            sha: self.sha.clone(),
            timestamp: self.timestamp,
            author: self.author.clone(),
            message: self.message.clone(),
        };
        parse_diff(&self.diff, meta).with_context(|| format!("commit {}", self.sha))
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T], append: bool) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_changesets(path: &Path) -> Result<Vec<ChangesetRecord>> {
    read_jsonl(path)
}

/// A missing file reads as an empty stream.
pub fn read_changesets_or_empty(path: &Path) -> Result<Vec<ChangesetRecord>> {
    if path.exists() {
        read_changesets(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn write_changesets(path: &Path, records: &[ChangesetRecord], append: bool) -> Result<()> {
    write_jsonl(path, records, append)
}

pub fn read_bugs(path: &Path) -> Result<Vec<BugReport>> {
    read_jsonl(path)
}

pub fn write_bugs(path: &Path, bugs: &[BugReport]) -> Result<()> {
    write_jsonl(path, bugs, false)
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkRow {
    bug_id: String,
    fixing_sha: String,
    fixed_files: String,
}

pub fn read_links(path: &Path) -> Result<Vec<FixLink>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: LinkRow = row.with_context(|| format!("reading {}", path.display()))?;
        out.push(FixLink {
            bug_id: row.bug_id,
            fixing_sha: row.fixing_sha,
            fixed_files: row
                .fixed_files
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect(),
        });
    }
    Ok(out)
}

pub fn write_links(path: &Path, links: &[FixLink]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for l in links {
        w.serialize(LinkRow {
            bug_id: l.bug_id.clone(),
            fixing_sha: l.fixing_sha.clone(),
            fixed_files: l.fixed_files.join(";"),
        })?;
    }
    w.flush()?;
    Ok(())
}
