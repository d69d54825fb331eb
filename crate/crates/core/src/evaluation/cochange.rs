use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::EvalError;
use crate::corpus::{preprocess_source_unit, Changeset, Document, PreprocessConfig, SourceTree};
use crate::locator::{class_name_of, cosine_distance};
use crate::topicmodel::TopicModel;

#[derive(Debug, Clone, PartialEq)]
pub struct CochangeConfig {
    /// Lower bound of the high bucket.
    pub high: f64,
    /// Lower bound of the middle bucket.
    pub low: f64,
    pub top_n: usize,
    pub extensions: Vec<String>,
}

impl Default for CochangeConfig {
    fn default() -> Self {
        Self {
            high: 0.20,
            low: 0.05,
            top_n: 100,
            extensions: vec![".java".to_owned()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BucketStats {
    pub pairs: usize,
    /// Mean cosine similarity; `None` for an empty bucket.
    pub mean_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CochangeReport {
    pub classes: usize,
    pub high: BucketStats,
    pub mid: BucketStats,
    pub low: BucketStats,
}

/// `|shared| / min(|a|, |b|)`.
pub fn co_change_rate(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let denom = a.len().min(b.len());
    if denom == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / denom as f64
}

/// Buckets pairs of the `top_n` most-changed snapshot classes by co-change
/// rate and reports the mean topic similarity of their class texts.
pub fn cochange_analysis(
    changesets: &[Changeset],
    model: &TopicModel,
    snapshot: &SourceTree,
    cfg: &CochangeConfig,
    pre: &PreprocessConfig,
) -> Result<CochangeReport, EvalError> {
    let is_source = |p: &str| cfg.extensions.is_empty() || cfg.extensions.iter().any(|e| p.ends_with(e.as_str()));
    let mut history: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (i, cs) in changesets.iter().enumerate() {
        for f in &cs.files {
            if is_source(&f.path) && snapshot.contains(&f.path) {
                history.entry(f.path.as_str()).or_default().insert(i);
            }
        }
    }
    let mut ranked: Vec<(&str, &BTreeSet<usize>)> = history.iter().map(|(p, h)| (*p, h)).collect();
    ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
    ranked.truncate(cfg.top_n);
    if ranked.len() < 2 {
        return Err(EvalError::TooFewClasses(ranked.len()));
    }

    let dists: Vec<Vec<f64>> = ranked
        .iter()
        .map(|(path, _)| {
            let text = snapshot.content(path).unwrap_or_default();
            let doc = preprocess_source_unit(path, class_name_of(path), &text, pre)
                .unwrap_or_else(|_| Document::new(*path));
            model.infer(&doc).into_inner()
        })
        .collect();

    let mut sums = [(0usize, 0.0f64); 3];
    for i in 0..ranked.len() {
        for j in i + 1..ranked.len() {
            let rate = co_change_rate(ranked[i].1, ranked[j].1);
            let bucket = if rate >= cfg.high {
                0
            } else if rate >= cfg.low {
                1
            } else {
                2
            };
            let sim = 1.0 - cosine_distance(&dists[i], &dists[j]).unwrap_or(1.0);
            sums[bucket].0 += 1;
            sums[bucket].1 += sim;
        }
    }
    let stats = |(n, s): (usize, f64)| BucketStats {
        pairs: n,
        mean_similarity: (n > 0).then(|| s / n as f64),
    };
    Ok(CochangeReport {
        classes: ranked.len(),
        high: stats(sums[0]),
        mid: stats(sums[1]),
        low: stats(sums[2]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FileChange, FileStatus};
    use crate::topicmodel::LdaConfig;

    fn touch(i: usize, paths: &[&str]) -> Changeset {
        Changeset {
            sha: i.to_string(),
            timestamp: i as i64,
            author: "a".into(),
            message: String::new(),
            files: paths
                .iter()
                .map(|p| FileChange {
                    path: (*p).into(),
                    old_path: None,
                    status: FileStatus::Modified,
                    hunks: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn rate_is_symmetric() {
        let a: BTreeSet<usize> = [1, 2, 3, 4].into();
        let b: BTreeSet<usize> = [3, 4].into();
        assert_eq!(co_change_rate(&a, &b), 1.0);
        assert_eq!(co_change_rate(&b, &a), 1.0);
        assert_eq!(co_change_rate(&a, &BTreeSet::new()), 0.0);
    }

    #[test]
    fn identical_classes_changed_together() {
        let mut model = TopicModel::new(LdaConfig::with_topics(3, 0.75)).unwrap();
        model
            .observe(&[Document::from_terms("d", ["queue", "flush", "buffer"])])
            .unwrap();
        let body = "class X { void flush() { buffer.queue(); } }";
        let tree = SourceTree::from_files([("a/X.java", body), ("b/X.java", body)]);
        let history: Vec<Changeset> = (0..4).map(|i| touch(i, &["a/X.java", "b/X.java"])).collect();
        let r = cochange_analysis(&history, &model, &tree, &CochangeConfig::default(), &PreprocessConfig::default())
            .unwrap();
        assert_eq!(r.high.pairs, 1);
        assert!((r.high.mean_similarity.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.low.mean_similarity, None);
    }

    #[test]
    fn too_few_classes() {
        let model = TopicModel::new(LdaConfig::with_topics(2, 0.75)).unwrap();
        let tree = SourceTree::from_files([("A.java", "class A {}")]);
        let r = cochange_analysis(
            &[touch(0, &["A.java"])],
            &model,
            &tree,
            &CochangeConfig::default(),
            &PreprocessConfig::default(),
        );
        assert!(matches!(r, Err(EvalError::TooFewClasses(1))));
    }
}
