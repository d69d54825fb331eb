use std::collections::BTreeMap;

use tracing::warn;

use super::{Changeset, CorpusError, FileChange, FileStatus, Hunk, HunkLine};

/// File contents reconstructed by replaying changesets in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceTree {
    files: BTreeMap<String, Vec<String>>,
}

impl SourceTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_files<I, P, S>(files: I) -> Self
    where
        I: IntoIterator<Item = (P, S)>,
        P: Into<String>,
        S: AsRef<str>,
    {
        Self {
            files: files
                .into_iter()
                .map(|(p, s)| (p.into(), s.as_ref().lines().map(str::to_owned).collect()))
                .collect(),
        }
    }

    /// Builds a tree from already split lines, kept verbatim.
    pub fn from_lines(files: impl IntoIterator<Item = (String, Vec<String>)>) -> Self {
        Self {
            files: files.into_iter().collect(),
        }
    }

    /// Every file with its lines, in path order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.files.iter().map(|(p, l)| (p.as_str(), l.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn contains(&self, path: &str) -> bool {
        self.files.contains_key(path)
    }

    pub fn content(&self, path: &str) -> Option<String> {
        self.files.get(path).map(|lines| join_lines(lines))
    }

    /// `(path, content)` for every file whose path ends with one of `extensions`.
    pub fn source_files(&self, extensions: &[String]) -> Vec<(String, String)> {
        self.files
            .iter()
            .filter(|(p, _)| extensions.is_empty() || extensions.iter().any(|e| p.ends_with(e.as_str())))
            .map(|(p, lines)| (p.clone(), join_lines(lines)))
            .collect()
    }

    /// Applies every file change of `cs`. Files whose hunks do not match the
    /// current content are left untouched and reported.
    pub fn apply(&mut self, cs: &Changeset) -> Vec<CorpusError> {
        let mut errors = Vec::new();
        for change in &cs.files {
            if let Err(e) = self.apply_file(change) {
                warn!(sha = %cs.sha, error = %e, "could not apply file change");
                errors.push(e);
            }
        }
        errors
    }

    fn apply_file(&mut self, change: &FileChange) -> Result<(), CorpusError> {
        match change.status {
            FileStatus::Deleted => {
                self.files.remove(&change.path);
                Ok(())
            }
            FileStatus::Added => {
                let content = apply_hunks(&change.path, &[], &change.hunks)?;
                self.files.insert(change.path.clone(), content);
                Ok(())
            }
            FileStatus::Renamed | FileStatus::Modified => {
                let source = change.old_path.as_deref().unwrap_or(&change.path);
                let Some(old) = self.files.get(source) else {
                    return Err(CorpusError::PatchMismatch {
                        path: source.to_owned(),
                        reason: "file not present in tree".into(),
                    });
                };
                let content = apply_hunks(&change.path, old, &change.hunks)?;
                if source != change.path {
                    self.files.remove(source);
                }
                self.files.insert(change.path.clone(), content);
                Ok(())
            }
        }
    }
}

fn join_lines(lines: &[String]) -> String {
    let mut s = lines.join("\n");
    if !lines.is_empty() {
        s.push('\n');
    }
    s
}

fn apply_hunks(path: &str, old: &[String], hunks: &[Hunk]) -> Result<Vec<String>, CorpusError> {
    let mismatch = |reason: String| CorpusError::PatchMismatch {
        path: path.to_owned(),
        reason,
    };
    let mut out = Vec::with_capacity(old.len());
    let mut cursor = 0usize;
    for hunk in hunks {
        // old_start is 1-based; an empty old range names the line it follows
        let start = if hunk.old_len == 0 {
            hunk.old_start
        } else {
            hunk.old_start.saturating_sub(1)
        };
        if start < cursor || start > old.len() {
            return Err(mismatch(format!("hunk at line {} out of range", hunk.old_start)));
        }
        out.extend_from_slice(&old[cursor..start]);
        cursor = start;
        for line in &hunk.lines {
            match line {
                HunkLine::Added(s) => out.push(s.clone()),
                HunkLine::Context(s) | HunkLine::Removed(s) => {
                    if old.get(cursor) != Some(s) {
                        return Err(mismatch(format!("line {} does not match", cursor + 1)));
                    }
                    if matches!(line, HunkLine::Context(_)) {
                        out.push(s.clone());
                    }
                    cursor += 1;
                }
            }
        }
    }
    out.extend_from_slice(&old[cursor..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_diff, render_file_diff, CommitMeta};

    fn cs(raw: &str) -> Changeset {
        parse_diff(
            raw,
            CommitMeta {
                sha: "s".into(),
                timestamp: 1,
                author: "a".into(),
                message: String::new(),
            },
        )
        .unwrap()
    }

    #[test]
    fn create_modify_rename_delete() {
        let v1 = "class A {\n  int a;\n  int b;\n  int c;\n  int d;\n}\n";
        let v2 = "class A {\n  int a;\n  int bb;\n  int c;\n  int d;\n  int e;\n}\n";
        let mut tree = SourceTree::new();
        assert!(tree.apply(&cs(&render_file_diff(None, Some(("A.java", v1))))).is_empty());
        assert_eq!(tree.content("A.java").unwrap(), v1);
        assert!(tree
            .apply(&cs(&render_file_diff(Some(("A.java", v1)), Some(("A.java", v2)))))
            .is_empty());
        assert_eq!(tree.content("A.java").unwrap(), v2);

        let rename = "diff --git a/A.java b/B.java\nsimilarity index 100%\nrename from A.java\nrename to B.java\n";
        assert!(tree.apply(&cs(rename)).is_empty());
        assert!(!tree.contains("A.java"));
        assert_eq!(tree.content("B.java").unwrap(), v2);

        assert!(tree.apply(&cs(&render_file_diff(Some(("B.java", v2)), None))).is_empty());
        assert!(tree.is_empty());
    }

    #[test]
    fn mismatched_context_is_reported() {
        let mut tree = SourceTree::from_files([("A.java", "x\ny\n")]);
        let patch = render_file_diff(Some(("A.java", "p\nq\n")), Some(("A.java", "p\nr\n")));
        let errs = tree.apply(&cs(&patch));
        assert_eq!(errs.len(), 1);
        assert_eq!(tree.content("A.java").unwrap(), "x\ny\n");
    }
}
