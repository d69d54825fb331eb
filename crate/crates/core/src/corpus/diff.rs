use similar::TextDiff;
use tracing::debug;

use super::{Changeset, CorpusError, FileChange, FileStatus, Hunk, HunkLine};

/// Commit metadata that travels alongside the raw diff text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitMeta {
    pub sha: String,
    pub timestamp: i64,
    pub author: String,
    pub message: String,
}

#[derive(Default)]
struct PendingFile {
    git_old: Option<String>,
    git_new: Option<String>,
    minus: Option<String>,
    plus: Option<String>,
    rename_from: Option<String>,
    rename_to: Option<String>,
    created: bool,
    deleted: bool,
    binary: bool,
    headers_seen: bool,
    hunks: Vec<Hunk>,
}

impl PendingFile {
    fn finish(self) -> Option<FileChange> {
        if self.binary {
            let name = self.git_new.or(self.git_old).unwrap_or_default();
            debug!(path = %name, "skipping binary file");
            return None;
        }
        let deleted = self.deleted;
        let new_path = self
            .plus
            .clone()
            .or_else(|| self.rename_to.clone())
            .or_else(|| self.git_new.clone());
        let old_path = self
            .minus
            .clone()
            .or_else(|| self.rename_from.clone())
            .or_else(|| self.git_old.clone());
        let (path, status) = if deleted || new_path.is_none() {
            (old_path.clone()?, FileStatus::Deleted)
        } else if self.created || old_path.is_none() {
            (new_path?, FileStatus::Added)
        } else {
            let new_path = new_path?;
            if old_path.as_deref() != Some(new_path.as_str()) {
                (new_path, FileStatus::Renamed)
            } else {
                (new_path, FileStatus::Modified)
            }
        };
        let old_path = match status {
            FileStatus::Renamed => old_path,
            _ => None,
        };
        Some(FileChange {
            path,
            old_path,
            status,
            hunks: self.hunks,
        })
    }
}

fn strip_side_prefix(path: &str) -> String {
    let path = path.split('\t').next().unwrap_or(path).trim_end();
    let path = unquote(path);
    path.strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(&path)
        .to_owned()
}

fn unquote(path: &str) -> String {
    if path.len() >= 2 && path.starts_with('"') && path.ends_with('"') {
        path[1..path.len() - 1]
            .replace("\\\"", "\"")
            .replace("\\\\", "\\")
            .replace("\\t", "\t")
    } else {
        path.to_owned()
    }
}

/// `a/x b/y` on a `diff --git` line; ambiguous when paths contain spaces, so
/// only used when no better header is present.
fn split_git_header(rest: &str) -> (Option<String>, Option<String>) {
    match rest.rfind(" b/") {
        Some(idx) => (
            Some(strip_side_prefix(&rest[..idx])),
            Some(strip_side_prefix(&rest[idx + 1..])),
        ),
        None => (None, None),
    }
}

/// Parses `@@ -a[,b] +c[,d] @@`.
fn parse_hunk_header(line: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = line.strip_prefix("@@ ")?;
    let end = rest.find(" @@")?;
    let mut parts = rest[..end].split(' ');
    let old = parts.next()?.strip_prefix('-')?;
    let new = parts.next()?.strip_prefix('+')?;
    let range = |s: &str| -> Option<(usize, usize)> {
        match s.split_once(',') {
            Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
            None => Some((s.parse().ok()?, 1)),
        }
    };
    let (os, ol) = range(old)?;
    let (ns, nl) = range(new)?;
    Some((os, ol, ns, nl))
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedDiff {
        line,
        reason: reason.into(),
    }
}

/// Parses `git diff` output (default algorithm, three context lines) into a
/// [`Changeset`]. An empty input yields a changeset without files.
pub fn parse_diff(raw: &str, meta: CommitMeta) -> Result<Changeset, CorpusError> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut files = Vec::new();
    let mut current: Option<PendingFile> = None;
    let mut i = 0;

    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("diff --git ") {
            if let Some(done) = current.take() {
                files.extend(done.finish());
            }
            let (old, new) = split_git_header(rest);
            current = Some(PendingFile {
                git_old: old,
                git_new: new,
                ..PendingFile::default()
            });
            i += 1;
            continue;
        }
        if line.starts_with("--- ") && lines.get(i + 1).is_some_and(|l| l.starts_with("+++ ")) {
            // Plain unified diffs have no `diff --git` line; start a file here.
            let needs_new = match &current {
                None => true,
                Some(f) => f.headers_seen || !f.hunks.is_empty(),
            };
            if needs_new {
                if let Some(done) = current.take() {
                    files.extend(done.finish());
                }
                current = Some(PendingFile::default());
            }
            let file = current.as_mut().expect("file started above");
            file.headers_seen = true;
            let minus = &line[4..];
            let plus = &lines[i + 1][4..];
            if is_dev_null(minus) {
                file.created = true;
            } else {
                file.minus = Some(strip_side_prefix(minus));
            }
            if is_dev_null(plus) {
                file.deleted = true;
            } else {
                file.plus = Some(strip_side_prefix(plus));
            }
            i += 2;
            continue;
        }
        if line.starts_with("@@") {
            let Some(file) = current.as_mut() else {
                return Err(malformed(i + 1, "hunk without a file header"));
            };
            let (old_start, old_len, new_start, new_len) =
                parse_hunk_header(line).ok_or_else(|| malformed(i + 1, "bad hunk header"))?;
            let header_line = i + 1;
            i += 1;
            let mut old_left = old_len;
            let mut new_left = new_len;
            let mut body = Vec::new();
            while old_left > 0 || new_left > 0 {
                let Some(&l) = lines.get(i) else {
                    return Err(malformed(header_line, "hunk body truncated"));
                };
                match l.as_bytes().first() {
                    None => {
                        take(&mut old_left, i)?;
                        take(&mut new_left, i)?;
                        body.push(HunkLine::Context(String::new()));
                    }
                    Some(b' ') => {
                        take(&mut old_left, i)?;
                        take(&mut new_left, i)?;
                        body.push(HunkLine::Context(l[1..].to_owned()));
                    }
                    Some(b'-') => {
                        take(&mut old_left, i)?;
                        body.push(HunkLine::Removed(l[1..].to_owned()));
                    }
                    Some(b'+') => {
                        take(&mut new_left, i)?;
                        body.push(HunkLine::Added(l[1..].to_owned()));
                    }
                    Some(b'\\') => {}
                    Some(_) => return Err(malformed(i + 1, "unexpected line inside hunk")),
                }
                i += 1;
            }
            if lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                i += 1;
            }
            if body.is_empty() {
                return Err(malformed(header_line, "empty hunk"));
            }
            file.hunks.push(Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                lines: body,
            });
            continue;
        }
        if let Some(file) = current.as_mut() {
            if line.starts_with("new file mode") {
                file.created = true;
            } else if line.starts_with("deleted file mode") {
                file.deleted = true;
            } else if let Some(p) = line.strip_prefix("rename from ") {
                file.rename_from = Some(unquote(p));
            } else if let Some(p) = line.strip_prefix("rename to ") {
                file.rename_to = Some(unquote(p));
            } else if line.starts_with("Binary files ") || line.starts_with("GIT binary patch") {
                file.binary = true;
            }
        }
        // index, mode, similarity and anything else is boilerplate
        i += 1;
    }
    if let Some(done) = current.take() {
        files.extend(done.finish());
    }

    Ok(Changeset {
        sha: meta.sha,
        timestamp: meta.timestamp,
        author: meta.author,
        message: meta.message,
        files,
    })
}

fn is_dev_null(p: &str) -> bool {
    p.split('\t').next().unwrap_or(p).trim_end() == "/dev/null"
}

fn take(counter: &mut usize, line: usize) -> Result<(), CorpusError> {
    if *counter == 0 {
        return Err(malformed(line + 1, "hunk longer than its header declares"));
    }
    *counter -= 1;
    Ok(())
}

/// Renders a git-style diff for one file with three lines of context.
/// `None` on either side means the file is created or deleted.
pub fn render_file_diff(old: Option<(&str, &str)>, new: Option<(&str, &str)>) -> String {
    let (old_path, old_text) = old.unwrap_or(("/dev/null", ""));
    let (new_path, new_text) = new.unwrap_or(("/dev/null", ""));
    let git_old = if old.is_some() { old_path } else { new_path };
    let git_new = if new.is_some() { new_path } else { old_path };
    let mut out = format!("diff --git a/{git_old} b/{git_new}\n");
    if old.is_none() {
        out.push_str("new file mode 100644\n");
    } else if new.is_none() {
        out.push_str("deleted file mode 100644\n");
    }
    let side = |prefix: &str, present: bool, path: &str| {
        if present {
            format!("{prefix}{path}")
        } else {
            "/dev/null".to_owned()
        }
    };
    let diff = TextDiff::from_lines(old_text, new_text);
    let body = diff
        .unified_diff()
        .context_radius(3)
        .header(
            &side("a/", old.is_some(), old_path),
            &side("b/", new.is_some(), new_path),
        )
        .to_string();
    out.push_str(&body);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out
}
