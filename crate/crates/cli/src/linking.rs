//! Links bug reports to fixing commits by scanning commit messages.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use changeloc_core::corpus::BugReport;
use changeloc_core::evaluation::FixLink;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConventions {
    /// Words that precede `#N`, e.g. `fixes`, `closes`.
    pub keywords: Vec<String>,
    /// Issue-key prefix, e.g. `BOOKKEEPER` for `BOOKKEEPER-700`.
    pub project: String,
}

/// What linking needs from a commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitInfo {
    pub sha: String,
    pub timestamp: i64,
    pub message: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkResult {
    pub links: Vec<FixLink>,
    /// Bugs no commit mentions (or whose commit touched no source file).
    pub unlinked: Vec<String>,
}

pub struct Linker {
    keyword: Option<Regex>,
    project: Regex,
}

impl Linker {
    pub fn new(conv: &LinkConventions) -> Result<Self, regex::Error> {
        let keyword = if conv.keywords.is_empty() {
            None
        } else {
            let alts: Vec<String> = conv.keywords.iter().map(|k| regex::escape(k)).collect();
            Some(Regex::new(&format!(r"(?i)\b(?:{})\b[\s:]*#(\d+)\b", alts.join("|")))?)
        };
        let project = Regex::new(&format!(r"(?i)\b{}-#?(\d+)\b", regex::escape(&conv.project)))?;
        Ok(Self { keyword, project })
    }

    /// Issue numbers mentioned in `message`, deduplicated.
    pub fn issue_numbers(&self, message: &str) -> BTreeSet<u64> {
        let mut out = BTreeSet::new();
        let regexes = self.keyword.iter().chain(std::iter::once(&self.project));
        for re in regexes {
            for cap in re.captures_iter(message) {
                if let Ok(n) = cap[1].parse() {
                    out.insert(n);
                }
            }
        }
        out
    }
}

/// The number a bug id stands for: `123`, `#123` or `PROJECT-123`.
fn bug_number(id: &str, project: &str) -> Option<u64> {
    let trimmed = id.trim();
    let rest = trimmed
        .get(..project.len())
        .filter(|p| p.eq_ignore_ascii_case(project))
        .and_then(|_| trimmed[project.len()..].strip_prefix('-'))
        .unwrap_or(trimmed);
    rest.trim_start_matches('#').parse().ok()
}

/// Keeps the latest matching commit per bug; its changed files filtered to
/// `extensions` form the goldset.
pub fn link_bugs(
    bugs: &[BugReport],
    commits: &[CommitInfo],
    conv: &LinkConventions,
    extensions: &[String],
) -> Result<LinkResult, regex::Error> {
    let linker = Linker::new(conv)?;
    let mut by_number: BTreeMap<u64, Vec<&BugReport>> = BTreeMap::new();
    for b in bugs {
        if let Some(n) = bug_number(&b.id, &conv.project) {
            by_number.entry(n).or_default().push(b);
        }
    }
    // bug id -> (timestamp, stream position, commit)
    let mut best: BTreeMap<&str, (i64, usize, &CommitInfo)> = BTreeMap::new();
    for (pos, c) in commits.iter().enumerate() {
        for n in linker.issue_numbers(&c.message) {
            for b in by_number.get(&n).into_iter().flatten() {
                let key = (c.timestamp, pos);
                let entry = best.entry(b.id.as_str()).or_insert((c.timestamp, pos, c));
                if key > (entry.0, entry.1) {
                    *entry = (c.timestamp, pos, c);
                }
            }
        }
    }
    let is_source = |p: &str| extensions.is_empty() || extensions.iter().any(|e| p.ends_with(e.as_str()));
    let mut result = LinkResult::default();
    for b in bugs {
        let Some((_, _, c)) = best.get(b.id.as_str()) else {
            result.unlinked.push(b.id.clone());
            continue;
        };
        let files: Vec<String> = c.files.iter().filter(|f| is_source(f)).cloned().collect();
        if files.is_empty() {
            result.unlinked.push(b.id.clone());
            continue;
        }
        result.links.push(FixLink {
            bug_id: b.id.clone(),
            fixing_sha: c.sha.clone(),
            fixed_files: files,
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv() -> LinkConventions {
        LinkConventions {
            keywords: vec!["fixes".into(), "closes".into(), "resolves".into()],
            project: "BOOKKEEPER".into(),
        }
    }

    fn bug(id: &str) -> BugReport {
        BugReport {
            id: id.into(),
            timestamp_reported: 0,
            summary: "s".into(),
            description: String::new(),
        }
    }

    fn commit(sha: &str, ts: i64, msg: &str) -> CommitInfo {
        CommitInfo {
            sha: sha.into(),
            timestamp: ts,
            message: msg.into(),
            files: vec!["src/A.java".into(), "README.md".into()],
        }
    }

    #[test]
    fn keyword_and_project_patterns() {
        let l = Linker::new(&conv()).unwrap();
        assert_eq!(l.issue_numbers("Fixes #123"), [123].into());
        assert_eq!(l.issue_numbers("closes: #9 and RESOLVES #10"), [9, 10].into());
        assert_eq!(l.issue_numbers("BOOKKEEPER-700 fix gc thread"), [700].into());
        assert_eq!(l.issue_numbers("bookkeeper-#701"), [701].into());
        assert!(l.issue_numbers("see #12").is_empty());
        assert!(l.issue_numbers("prefixes #12").is_empty());
        assert!(l.issue_numbers("OTHER-700").is_empty());
        assert!(l.issue_numbers("fixes #123abc").is_empty());
    }

    #[test]
    fn word_boundaries_protect_numbers() {
        let r = link_bugs(&[bug("123")], &[commit("a", 1, "fixes #1234")], &conv(), &[".java".into()]).unwrap();
        assert!(r.links.is_empty());
        assert_eq!(r.unlinked, vec!["123".to_owned()]);
    }

    #[test]
    fn latest_commit_wins_and_files_filtered() {
        let commits = [
            commit("old", 10, "Fixes #5"),
            commit("new", 20, "fixes #5 again, fixes #5"),
            commit("older", 5, "BOOKKEEPER-5"),
        ];
        let r = link_bugs(&[bug("BOOKKEEPER-5")], &commits, &conv(), &[".java".into()]).unwrap();
        assert_eq!(r.links.len(), 1);
        assert_eq!(r.links[0].fixing_sha, "new");
        assert_eq!(r.links[0].fixed_files, vec!["src/A.java".to_owned()]);
    }

    #[test]
    fn commit_without_source_files_does_not_link() {
        let mut c = commit("a", 1, "fixes #3");
        c.files = vec!["docs/x.md".into()];
        let r = link_bugs(&[bug("3")], &[c], &conv(), &[".java".into()]).unwrap();
        assert!(r.links.is_empty());
    }

    #[test]
    fn bug_numbers() {
        assert_eq!(bug_number("BOOKKEEPER-700", "BOOKKEEPER"), Some(700));
        assert_eq!(bug_number("bookkeeper-700", "BOOKKEEPER"), Some(700));
        assert_eq!(bug_number("#12", "X"), Some(12));
        assert_eq!(bug_number("12", "X"), Some(12));
        assert_eq!(bug_number("JIRA-12", "X"), None);
    }
}
