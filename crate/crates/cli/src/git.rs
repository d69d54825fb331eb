//! Repository access through the `git` executable.

use std::collections::BTreeSet;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tracing::debug;

use crate::streams::ChangesetRecord;

/// Hash of git's empty tree, the pre-image of a root commit.
pub const EMPTY_TREE: &str = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";

#[derive(Debug, thiserror::Error)]
pub enum GitError {
    #[error("{0} is not a git repository")]
    NotARepository(PathBuf),
    #[error("git executable unavailable: {0}")]
    ToolUnavailable(String),
    #[error("unknown commit {0}")]
    UnknownCommit(String),
    #[error("git {args} failed: {stderr}")]
    Failed { args: String, stderr: String },
    #[error("unexpected git output: {0}")]
    BadOutput(String),
}

fn run(repo: &Path, args: &[&str]) -> Result<Output, GitError> {
    Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["-c", "core.quotepath=off"])
        .args(args)
        .output()
        .map_err(|e| match e.kind() {
            ErrorKind::NotFound => GitError::ToolUnavailable("git not found on PATH".into()),
            _ => GitError::ToolUnavailable(e.to_string()),
        })
}

fn run_ok(repo: &Path, args: &[&str]) -> Result<Vec<u8>, GitError> {
    let out = run(repo, args)?;
    if !out.status.success() {
        return Err(GitError::Failed {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_owned(),
        });
    }
    Ok(out.stdout)
}

fn ensure_repository(repo: &Path) -> Result<(), GitError> {
    if !repo.is_dir() || !run(repo, &["rev-parse", "--git-dir"])?.status.success() {
        return Err(GitError::NotARepository(repo.to_owned()));
    }
    Ok(())
}

fn has_head(repo: &Path) -> Result<bool, GitError> {
    Ok(run(repo, &["rev-parse", "--verify", "--quiet", "HEAD"])?.status.success())
}

struct LogEntry {
    sha: String,
    first_parent: Option<String>,
    timestamp: i64,
    author: String,
    message: String,
}

fn first_parent_log(repo: &Path) -> Result<Vec<LogEntry>, GitError> {
    let raw = run_ok(
        repo,
        &["log", "--first-parent", "--reverse", "--format=%H%x00%P%x00%ct%x00%an%x00%B%x1e", "HEAD"],
    )?;
    let text = String::from_utf8_lossy(&raw);
    let mut out = Vec::new();
    for record in text.split('\x1e') {
        let record = record.trim_start_matches('\n');
        if record.is_empty() {
            continue;
        }
        let fields: Vec<&str> = record.splitn(5, '\0').collect();
        let [sha, parents, ts, author, message] = fields[..] else {
            return Err(GitError::BadOutput(record.chars().take(80).collect()));
        };
        let timestamp = ts.trim().parse().map_err(|_| GitError::BadOutput(format!("timestamp {ts:?}")))?;
        out.push(LogEntry {
            sha: sha.to_owned(),
            first_parent: parents.split_whitespace().next().map(str::to_owned),
            timestamp,
            author: author.to_owned(),
            message: message.trim_end().to_owned(),
        });
    }
    Ok(out)
}

/// One record per first-parent commit newer than `since` (exclusive), in
/// timestamp order. Each diff is taken against the commit's first parent, or
/// the empty tree for a root commit.
pub fn extract_changesets(repo: &Path, since: Option<i64>) -> Result<Vec<ChangesetRecord>, GitError> {
    ensure_repository(repo)?;
    if !has_head(repo)? {
        return Ok(Vec::new());
    }
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for entry in first_parent_log(repo)? {
        if since.is_some_and(|s| entry.timestamp <= s) || !seen.insert(entry.sha.clone()) {
            continue;
        }
        let base = entry.first_parent.as_deref().unwrap_or(EMPTY_TREE);
        let diff = run_ok(repo, &["diff", "-U3", "--no-color", "--no-ext-diff", base, &entry.sha])?;
        debug!(sha = %entry.sha, bytes = diff.len(), "extracted diff");
        records.push(ChangesetRecord {
            sha: entry.sha,
            timestamp: entry.timestamp,
            author: entry.author,
            message: entry.message,
            diff: String::from_utf8_lossy(&diff).into_owned(),
        });
    }
    // history order is topological; committer clocks can disagree with it
    records.sort_by_key(|r| r.timestamp);
    Ok(records)
}

fn resolve_commit(repo: &Path, sha: &str) -> Result<String, GitError> {
    let spec = format!("{sha}^{{commit}}");
    let out = run(repo, &["rev-parse", "--verify", "--quiet", &spec])?;
    if !out.status.success() {
        return Err(GitError::UnknownCommit(sha.to_owned()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_owned())
}

/// Paths and contents of the source files in `sha`'s tree.
pub fn snapshot_at(repo: &Path, sha: &str, extensions: &[String]) -> Result<Vec<(String, String)>, GitError> {
    ensure_repository(repo)?;
    let commit = resolve_commit(repo, sha)?;
    let listing = run_ok(repo, &["ls-tree", "-r", "-z", "--full-tree", &commit])?;
    let mut files = Vec::new();
    for entry in listing.split(|&b| b == 0).filter(|e| !e.is_empty()) {
        let entry = String::from_utf8_lossy(entry);
        let Some((meta, path)) = entry.split_once('\t') else {
            return Err(GitError::BadOutput(entry.into_owned()));
        };
        let mut parts = meta.split_whitespace();
        let (Some(_mode), Some(kind), Some(object)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(GitError::BadOutput(entry.into_owned()));
        };
        if kind != "blob" || !(extensions.is_empty() || extensions.iter().any(|e| path.ends_with(e.as_str()))) {
            continue;
        }
        let content = run_ok(repo, &["cat-file", "blob", object])?;
        files.push((path.to_owned(), String::from_utf8_lossy(&content).into_owned()));
    }
    Ok(files)
}
