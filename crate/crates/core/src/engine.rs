//! Live state shared by replay and the command line: both topic models, the
//! pair store, the fitted translation matrix and the reconstructed tree.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::corpus::{
    preprocess_bug_report, preprocess_changeset, preprocess_natural_text, BugReport, Changeset, CorpusError,
    Document, PreprocessConfig, SourceTree,
};
use crate::locator::{build_query, rank_classes, IndexCache, LocateError, LocatorConfig, Models, Query, Ranking, SnapshotIndex};
use crate::topicmodel::{LdaConfig, ModelError, TopicModel};
use crate::translation::{PairKind, PairStore, ReadinessPolicy, TranslationError, TranslationMatrix, DEFAULT_RIDGE};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub changeset_model: LdaConfig,
    pub bug_report_model: LdaConfig,
    pub readiness: ReadinessPolicy,
    pub locator: LocatorConfig,
    pub ridge: f64,
    /// Source-file suffixes indexed for ranking.
    pub extensions: Vec<String>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            changeset_model: LdaConfig::changeset_default(),
            bug_report_model: LdaConfig::bug_report_default(),
            readiness: ReadinessPolicy::default(),
            locator: LocatorConfig::default(),
            ridge: DEFAULT_RIDGE,
            extensions: vec![".java".to_owned()],
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.changeset_model.validate()?;
        self.bug_report_model.validate()?;
        self.readiness.validate()?;
        self.locator.validate().map_err(EngineError::InvalidConfig)?;
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(EngineError::InvalidConfig("ridge must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    pub config: EngineConfig,
    pub preprocess: PreprocessConfig,
    pub changeset_model: TopicModel,
    pub bug_report_model: TopicModel,
    pub pairs: PairStore,
    pub translation: Option<TranslationMatrix>,
    pub tree: SourceTree,
    cache: IndexCache,
}

impl Engine {
    pub fn new(config: EngineConfig, preprocess: PreprocessConfig) -> Result<Self, EngineError> {
        config.validate()?;
        preprocess.validate()?;
        let changeset_model = TopicModel::new(config.changeset_model.clone())?;
        let bug_report_model = TopicModel::new(config.bug_report_model.clone())?;
        let pairs = PairStore::new(config.bug_report_model.k, config.changeset_model.k);
        Ok(Self {
            config,
            preprocess,
            changeset_model,
            bug_report_model,
            pairs,
            translation: None,
            tree: SourceTree::new(),
            cache: IndexCache::default(),
        })
    }

    /// Reassembles an engine from persisted parts.
    pub fn from_parts(
        config: EngineConfig,
        preprocess: PreprocessConfig,
        changeset_model: TopicModel,
        bug_report_model: TopicModel,
        pairs: PairStore,
        translation: Option<TranslationMatrix>,
        tree: SourceTree,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let dims_ok = pairs.k_br() == bug_report_model.num_topics()
            && pairs.k_cs() == changeset_model.num_topics()
            && translation
                .as_ref()
                .is_none_or(|t| t.k_br() == pairs.k_br() && t.k_cs() == pairs.k_cs());
        if !dims_ok {
            return Err(EngineError::InvalidConfig("topic counts of the stored parts disagree".into()));
        }
        Ok(Self {
            config,
            preprocess,
            changeset_model,
            bug_report_model,
            pairs,
            translation,
            tree,
            cache: IndexCache::default(),
        })
    }

    pub fn changeset_document(&self, cs: &Changeset) -> Result<Document, CorpusError> {
        preprocess_changeset(cs, &self.preprocess)
    }

    /// One online update of the changeset model plus the tree. Returns the
    /// document (if any terms survived) and the update's wall time.
    pub fn observe_changeset(&mut self, cs: &Changeset) -> Result<(Option<Document>, f64), EngineError> {
        self.tree.apply(cs);
        let doc = match self.changeset_document(cs) {
            Ok(doc) => doc,
            Err(CorpusError::EmptyDocument(_)) => {
                debug!(sha = %cs.sha, "changeset has no terms; model not updated");
                return Ok((None, 0.0));
            }
            Err(e) => return Err(e.into()),
        };
        let start = Instant::now();
        self.changeset_model.observe(std::slice::from_ref(&doc))?;
        Ok((Some(doc), start.elapsed().as_secs_f64()))
    }

    pub fn observe_bug_report(&mut self, br: &BugReport) -> Result<Option<Document>, EngineError> {
        match preprocess_bug_report(br, &self.preprocess) {
            Ok(doc) => {
                self.bug_report_model.observe(std::slice::from_ref(&doc))?;
                Ok(Some(doc))
            }
            Err(CorpusError::EmptyDocument(_)) => {
                warn!(bug = %br.id, "bug report has no terms; model not updated");
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Records a (bug report, fixing changeset) pair from the current models
    /// and refits T when the store is ready.
    pub fn record_fix(&mut self, bug_doc: &Document, changeset_doc: &Document) -> Result<(), EngineError> {
        let b = self.bug_report_model.infer(bug_doc);
        let a = self.changeset_model.infer(changeset_doc);
        self.pairs.record_pair(&b, &a, PairKind::RealFix)?;
        self.refit()
    }

    /// Cold-start pair: the commit message through the bug-report pipeline
    /// against the commit's own changeset.
    pub fn record_commit_log(&mut self, cs: &Changeset, changeset_doc: &Document) -> Result<(), EngineError> {
        let Ok(msg) = preprocess_natural_text(&cs.sha, &cs.message, &self.preprocess) else {
            return Ok(());
        };
        let b = self.bug_report_model.infer(&msg);
        let a = self.changeset_model.infer(changeset_doc);
        self.pairs.record_pair(&b, &a, PairKind::CommitLog)?;
        if self.translation.is_none() {
            self.refit()?;
        }
        Ok(())
    }

    pub fn refit(&mut self) -> Result<(), EngineError> {
        if let Some(w) = self.config.readiness.window {
            self.pairs.apply_window(w);
        }
        if !self.pairs.is_ready(&self.config.readiness) {
            return Ok(());
        }
        let fitted = match self.pairs.fit(&self.config.readiness, self.config.ridge) {
            Err(TranslationError::SingularSystem) if self.config.ridge < DEFAULT_RIDGE => {
                self.pairs.fit(&self.config.readiness, DEFAULT_RIDGE)
            }
            other => other,
        };
        match fitted {
            Ok(t) => self.translation = Some(t),
            Err(TranslationError::SingularSystem) => {
                warn!(pairs = self.pairs.len(), "translation fit is singular; keeping previous matrix");
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    pub fn index(&mut self) -> SnapshotIndex {
        SnapshotIndex::from_tree(
            &self.tree,
            &self.config.extensions,
            &self.changeset_model,
            &self.preprocess,
            Some(&mut self.cache),
        )
    }

    pub fn query(&self, br: &BugReport, index: &SnapshotIndex, baseline: bool) -> Result<Query, EngineError> {
        let models = Models {
            changeset: &self.changeset_model,
            bug_report: &self.bug_report_model,
            translation: self.translation.as_ref(),
        };
        let cfg = LocatorConfig {
            baseline_mode: baseline || self.config.locator.baseline_mode,
            ..self.config.locator
        };
        Ok(build_query(br, &models, &index.class_names, &cfg, &self.preprocess)?)
    }

    /// Ranks the current snapshot's classes for `br`.
    pub fn locate(&mut self, br: &BugReport, baseline: bool) -> Result<Ranking, EngineError> {
        let index = self.index();
        if index.is_empty() {
            return Err(LocateError::EmptyIndex.into());
        }
        let q = self.query(br, &index, baseline)?;
        Ok(rank_classes(&q.dist, &index)?)
    }
}
