//! Query side: infer, translate, combine and rank snapshot classes.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    code_token_ratio, preprocess_bug_report, preprocess_source_unit, segment_methods, BugReport, CorpusError,
    PreprocessConfig, SourceTree,
};
use crate::topicmodel::{TopicDistribution, TopicModel};
use crate::translation::{TranslationError, TranslationMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocateError {
    #[error("zero vector")]
    ZeroVector,
    #[error("snapshot index is empty")]
    EmptyIndex,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocatorConfig {
    /// Amplifying factor on the changeset-side distribution.
    pub gamma: f64,
    /// Rank with the changeset distribution only.
    #[serde(default)]
    pub baseline_mode: bool,
}

impl Default for LocatorConfig {
    fn default() -> Self {
        Self {
            gamma: 5.0,
            baseline_mode: false,
        }
    }
}

impl LocatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(format!("gamma must be >= 1, got {}", self.gamma));
        }
        Ok(())
    }
}

/// `norm(cs * lambda * gamma + co * (1 - lambda))`.
pub fn combine(
    dist_cs: &TopicDistribution,
    dist_co: &TopicDistribution,
    lambda_ratio: f64,
    gamma: f64,
) -> Result<TopicDistribution, LocateError> {
    if dist_cs.len() != dist_co.len() {
        return Err(LocateError::LengthMismatch(dist_cs.len(), dist_co.len()));
    }
    let lambda_ratio = lambda_ratio.clamp(0.0, 1.0);
    // at the endpoints one term vanishes and normalization returns the other
    // input unchanged; short-circuit so that holds bit for bit
    if lambda_ratio == 0.0 {
        return Ok(dist_co.clone());
    }
    if lambda_ratio == 1.0 {
        return Ok(dist_cs.clone());
    }
    let w_cs = lambda_ratio * gamma;
    let w_co = 1.0 - lambda_ratio;
    let mixed = dist_cs
        .probs()
        .iter()
        .zip(dist_co.probs())
        .map(|(c, o)| c * w_cs + o * w_co)
        .collect();
    TopicDistribution::from_weights(mixed).ok_or(LocateError::ZeroVector)
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, LocateError> {
    if a.len() != b.len() {
        return Err(LocateError::LengthMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(LocateError::ZeroVector);
    }
    Ok((1.0 - dot / (na * nb).sqrt()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedClass {
    pub path: String,
    pub methods: Vec<TopicDistribution>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotIndex {
    pub classes: Vec<IndexedClass>,
    pub class_names: BTreeSet<String>,
}

pub fn class_name_of(path: &str) -> &str {
    Path::new(path)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(path)
}

/// Per-file method distributions keyed by file content and model version.
#[derive(Debug, Clone, Default)]
pub struct IndexCache {
    entries: HashMap<String, (u64, u64, Vec<TopicDistribution>)>,
    hits: u64,
    misses: u64,
}

impl IndexCache {
    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }
}

fn content_hash(text: &str) -> u64 {
    let mut h = DefaultHasher::new();
    text.hash(&mut h);
    h.finish()
}

fn method_distributions(path: &str, text: &str, model: &TopicModel, pre: &PreprocessConfig) -> Vec<TopicDistribution> {
    let name = class_name_of(path);
    let mut out: Vec<TopicDistribution> = segment_methods(text)
        .iter()
        .enumerate()
        .filter_map(|(i, unit)| preprocess_source_unit(&format!("{path}#{i}"), name, unit, pre).ok())
        .map(|doc| model.infer(&doc))
        .collect();
    if out.is_empty() {
        // every unit was empty after preprocessing; fall back to the bare class name
        let doc = preprocess_source_unit(path, name, "", pre)
            .unwrap_or_else(|_| crate::corpus::Document::new(path));
        out.push(model.infer(&doc));
    }
    out
}

impl SnapshotIndex {
    /// Indexes every `(path, content)` pair with the current changeset model.
    pub fn build(
        files: &[(String, String)],
        model: &TopicModel,
        pre: &PreprocessConfig,
        mut cache: Option<&mut IndexCache>,
    ) -> Self {
        let version = model.update_count() ^ ((model.vocab_size() as u64) << 40);
        let mut classes = Vec::with_capacity(files.len());
        let mut class_names = BTreeSet::new();
        for (path, text) in files {
            class_names.insert(class_name_of(path).to_owned());
            let methods = match cache.as_deref_mut() {
                Some(c) => {
                    let h = content_hash(text);
                    match c.entries.get(path) {
                        Some((ch, v, m)) if *ch == h && *v == version => {
                            c.hits += 1;
                            m.clone()
                        }
                        _ => {
                            c.misses += 1;
                            let m = method_distributions(path, text, model, pre);
                            c.entries.insert(path.clone(), (h, version, m.clone()));
                            m
                        }
                    }
                }
                None => method_distributions(path, text, model, pre),
            };
            classes.push(IndexedClass {
                path: path.clone(),
                methods,
            });
        }
        Self { classes, class_names }
    }

    pub fn from_tree(
        tree: &SourceTree,
        extensions: &[String],
        model: &TopicModel,
        pre: &PreprocessConfig,
        cache: Option<&mut IndexCache>,
    ) -> Self {
        Self::build(&tree.source_files(extensions), model, pre, cache)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub path: String,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranking(pub Vec<RankedClass>);

impl Ranking {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RankedClass> {
        self.0.iter()
    }

    /// 1-based rank of `path`.
    pub fn rank_of(&self, path: &str) -> Option<usize> {
        self.0.iter().position(|r| r.path == path).map(|i| i + 1)
    }
}

/// Each class scores the minimum distance over its methods; ascending, ties
/// by path.
pub fn rank_classes(query: &TopicDistribution, index: &SnapshotIndex) -> Result<Ranking, LocateError> {
    if index.is_empty() {
        return Err(LocateError::EmptyIndex);
    }
    let mut out = Vec::with_capacity(index.classes.len());
    for class in &index.classes {
        let mut best = f64::INFINITY;
        for m in &class.methods {
            best = best.min(cosine_distance(query.probs(), m.probs())?);
        }
        out.push(RankedClass {
            path: class.path.clone(),
            distance: best,
        });
    }
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.path.cmp(&b.path)));
    Ok(Ranking(out))
}

/// Everything `locate` needs besides the index.
pub struct Models<'a> {
    pub changeset: &'a TopicModel,
    pub bug_report: &'a TopicModel,
    pub translation: Option<&'a TranslationMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub dist: TopicDistribution,
    /// Code-token ratio; `None` when the changeset distribution was used alone.
    pub lambda: Option<f64>,
    pub degenerate_translation: bool,
}

pub fn build_query(
    br: &BugReport,
    models: &Models<'_>,
    class_names: &BTreeSet<String>,
    cfg: &LocatorConfig,
    pre: &PreprocessConfig,
) -> Result<Query, LocateError> {
    let doc = preprocess_bug_report(br, pre)?;
    let dist_cs = models.changeset.infer(&doc);
    let t = match models.translation {
        Some(t) if !cfg.baseline_mode => t,
        _ => {
            return Ok(Query {
                dist: dist_cs,
                lambda: None,
                degenerate_translation: false,
            })
        }
    };
    let dist_br = models.bug_report.infer(&doc);
    let co = t.translate(&dist_br)?;
    let lambda = code_token_ratio(br, class_names);
    Ok(Query {
        dist: combine(&dist_cs, &co.dist, lambda, cfg.gamma)?,
        lambda: Some(lambda),
        degenerate_translation: co.degenerate,
    })
}

pub fn locate(
    br: &BugReport,
    models: &Models<'_>,
    index: &SnapshotIndex,
    cfg: &LocatorConfig,
    pre: &PreprocessConfig,
) -> Result<Ranking, LocateError> {
    if index.is_empty() {
        return Err(LocateError::EmptyIndex);
    }
    let q = build_query(br, models, &index.class_names, cfg, pre)?;
    rank_classes(&q.dist, index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> TopicDistribution {
        TopicDistribution::from_weights(v.to_vec()).unwrap()
    }

    #[test]
    fn combine_examples() {
        let cs = d(&[1.0, 0.0]);
        let co = d(&[0.0, 1.0]);
        let c = combine(&cs, &co, 0.2, 5.0).unwrap();
        assert!((c.probs()[0] - 5.0 / 9.0).abs() < 1e-12);
        assert!((c.probs()[1] - 4.0 / 9.0).abs() < 1e-12);
        let a = d(&[0.3, 0.7]);
        let b = d(&[0.9, 0.1]);
        assert_eq!(combine(&a, &b, 0.0, 5.0).unwrap(), b);
        assert_eq!(combine(&a, &b, 1.0, 5.0).unwrap(), a);
        assert_eq!(combine(&a, &b, 1.0, 1.0).unwrap(), combine(&a, &b, 1.0, 17.0).unwrap());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let x = cosine_distance(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((x - 0.29289).abs() < 1e-5);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(LocateError::ZeroVector));
    }

    #[test]
    fn min_over_methods() {
        let q = d(&[1.0, 0.0]);
        // distances are 1 - cos; pick vectors with known cosines
        let at = |dist: f64| {
            let c = 1.0 - dist;
            d(&[c, (1.0 - c * c).sqrt()])
        };
        let index = SnapshotIndex {
            classes: vec![
                IndexedClass {
                    path: "b/B.java".into(),
                    methods: vec![at(0.2)],
                },
                IndexedClass {
                    path: "a/A.java".into(),
                    methods: vec![at(0.4), at(0.1)],
                },
            ],
            class_names: BTreeSet::new(),
        };
        let r = rank_classes(&q, &index).unwrap();
        assert_eq!(r.0[0].path, "a/A.java");
        assert!((r.0[0].distance - 0.1).abs() < 1e-12);
        assert_eq!(r.rank_of("b/B.java"), Some(2));
    }

    #[test]
    fn ties_break_by_path() {
        let q = d(&[1.0, 1.0]);
        let same = vec![d(&[1.0, 0.0])];
        let index = SnapshotIndex {
            classes: vec![
                IndexedClass {
                    path: "z.java".into(),
                    methods: same.clone(),
                },
                IndexedClass {
                    path: "m.java".into(),
                    methods: same,
                },
            ],
            class_names: BTreeSet::new(),
        };
        let r = rank_classes(&q, &index).unwrap();
        assert_eq!(r.0[0].path, "m.java");
        assert_eq!(rank_classes(&q, &SnapshotIndex::default()), Err(LocateError::EmptyIndex));
    }

    #[test]
    fn class_names_from_paths() {
        assert_eq!(class_name_of("src/main/java/org/Foo.java"), "Foo");
        assert_eq!(class_name_of("Bar"), "Bar");
    }
}
