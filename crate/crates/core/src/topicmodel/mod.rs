//! Online variational Bayes for LDA over a growable vocabulary.
//!
//! The topic-term variational parameter is stored as
//! `lambda[topic][term] = scale * acc[term][topic] + offset`, which turns the
//! global decay `lambda <- (1 - rho) * lambda + rho * eta` into two scalar
//! updates. A single-document update therefore costs time proportional to
//! the document, not to the vocabulary.

mod vocab;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::corpus::Document;

pub use vocab::Vocabulary;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid LDA configuration: {0}")]
    InvalidConfig(String),
    #[error("empty mini-batch")]
    EmptyBatch,
    #[error("term id {0} is outside the vocabulary")]
    UnknownTerm(usize),
    #[error("held-out set has no in-vocabulary tokens")]
    NoTokens,
    #[error("inconsistent model state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document-topic prior.
    pub alpha: f64,
    /// Symmetric topic-term prior.
    pub eta: f64,
    /// Forgetting rate for the step size `(tau0 + t)^-kappa`.
    pub kappa: f64,
    pub tau0: f64,
    pub seed: u64,
    pub e_step_iters: usize,
    pub e_step_tol: f64,
}

impl LdaConfig {
    /// Symmetric priors `1/k`, `tau0 = 1`, per-document E-step limits of
    /// 100 iterations or a mean change below 1e-3.
    pub fn with_topics(k: usize, kappa: f64) -> Self {
        let prior = 1.0 / k.max(1) as f64;
        Self {
            k,
            alpha: prior,
            eta: prior,
            kappa,
            tau0: 1.0,
            seed: 0,
            e_step_iters: 100,
            e_step_tol: 1e-3,
        }
    }

    pub fn changeset_default() -> Self {
        Self::with_topics(100, 0.75)
    }

    pub fn bug_report_default() -> Self {
        Self::with_topics(50, 1.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::InvalidConfig(m.to_owned()));
        if self.k < 2 {
            return fail("k must be at least 2");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail("eta must be positive");
        }
        if !(self.kappa > 0.5 && self.kappa <= 1.0) {
            return fail("kappa must lie in (0.5, 1]");
        }
        if !(self.tau0 >= 0.0 && self.tau0.is_finite()) {
            return fail("tau0 must be non-negative");
        }
        if self.e_step_iters == 0 {
            return fail("e_step_iters must be positive");
        }
        if !(self.e_step_tol > 0.0) {
            return fail("e_step_tol must be positive");
        }
        Ok(())
    }
}

/// A probability vector over topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDistribution(Vec<f64>);

impl TopicDistribution {
    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// L1-normalizes non-negative weights. `None` for an empty, all-zero,
    /// negative or non-finite input.
    pub fn from_weights(weights: Vec<f64>) -> Option<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        Some(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A document encoded against one model's vocabulary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodedDoc {
    pub ids: Vec<usize>,
    pub counts: Vec<f64>,
}

impl EncodedDoc {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub rho: f64,
    pub documents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    config: LdaConfig,
    vocab: Vocabulary,
    /// term-major accumulator, `acc[term * k + topic]`
    acc: Vec<f64>,
    acc_topic_sums: Vec<f64>,
    scale: f64,
    offset: f64,
    updates: u64,
}

const SCALE_FLOOR: f64 = 1e-150;

impl TopicModel {
    pub fn new(config: LdaConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let k = config.k;
        let offset = config.eta;
        Ok(Self {
            config,
            vocab: Vocabulary::default(),
            acc: Vec::new(),
            acc_topic_sums: vec![0.0; k],
            scale: 1.0,
            offset,
            updates: 0,
        })
    }

    /// Rebuilds a model from a row-major `k x V` lambda matrix.
    pub fn from_parts(
        config: LdaConfig,
        terms: Vec<String>,
        lambda_row_major: &[f64],
        updates: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let k = config.k;
        let vocab = Vocabulary::from_terms(terms)
            .ok_or_else(|| ModelError::InvalidState("duplicate vocabulary term".into()))?;
        let v = vocab.len();
        if lambda_row_major.len() != k * v {
            return Err(ModelError::InvalidState(format!(
                "lambda has {} entries, expected {}",
                lambda_row_major.len(),
                k * v
            )));
        }
        if lambda_row_major.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(ModelError::InvalidState("lambda entries must be positive".into()));
        }
        let mut acc = vec![0.0; k * v];
        let mut sums = vec![0.0; k];
        for topic in 0..k {
            for term in 0..v {
                let x = lambda_row_major[topic * v + term];
                acc[term * k + topic] = x;
                sums[topic] += x;
            }
        }
        Ok(Self {
            config,
            vocab,
            acc,
            acc_topic_sums: sums,
            scale: 1.0,
            offset: 0.0,
            updates,
        })
    }

    pub fn config(&self) -> &LdaConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_topics(&self) -> usize {
        self.config.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Number of mini-batches applied so far.
    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn step_size(&self, t: u64) -> f64 {
        let base = self.config.tau0 + t as f64;
        if base <= 0.0 {
            return 1.0;
        }
        base.powf(-self.config.kappa).min(1.0)
    }

    pub fn topic_term_weight(&self, topic: usize, term: usize) -> f64 {
        self.scale * self.acc[term * self.config.k + topic] + self.offset
    }

    fn topic_total(&self, topic: usize) -> f64 {
        self.scale * self.acc_topic_sums[topic] + self.offset * self.vocab.len() as f64
    }

    pub fn lambda_row_major(&self) -> Vec<f64> {
        let (k, v) = (self.config.k, self.vocab.len());
        let mut out = vec![0.0; k * v];
        for topic in 0..k {
            for term in 0..v {
                out[topic * v + term] = self.topic_term_weight(topic, term);
            }
        }
        out
    }

    /// Adds unseen terms; their lambda columns start at `eta` for every topic.
    /// Returns the number of new terms.
    pub fn expand_vocabulary<'a>(&mut self, terms: impl IntoIterator<Item = &'a str>) -> usize {
        let k = self.config.k;
        let fresh = (self.config.eta - self.offset) / self.scale;
        let mut added = 0;
        for term in terms {
            if self.vocab.insert(term) {
                self.acc.extend(std::iter::repeat_n(fresh, k));
                for s in &mut self.acc_topic_sums {
                    *s += fresh;
                }
                added += 1;
            }
        }
        added
    }

    /// Maps terms to ids, dropping out-of-vocabulary terms.
    pub fn encode(&self, doc: &Document) -> EncodedDoc {
        let mut enc = EncodedDoc::default();
        for (term, &count) in &doc.term_counts {
            if let Some(id) = self.vocab.id(term) {
                enc.ids.push(id);
                enc.counts.push(f64::from(count));
            }
        }
        enc
    }

    /// Expands the vocabulary with every term in `docs`, then applies them as
    /// one mini-batch.
    pub fn observe(&mut self, docs: &[Document]) -> Result<UpdateStats, ModelError> {
        if docs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        for d in docs {
            self.expand_vocabulary(d.term_counts.keys().map(String::as_str));
        }
        let batch: Vec<EncodedDoc> = docs.iter().map(|d| self.encode(d)).collect();
        self.update(&batch)
    }

    /// One online variational step on a mini-batch.
    pub fn update(&mut self, batch: &[EncodedDoc]) -> Result<UpdateStats, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let v = self.vocab.len();
        for doc in batch {
            if let Some(&bad) = doc.ids.iter().find(|&&id| id >= v) {
                return Err(ModelError::UnknownTerm(bad));
            }
        }
        let k = self.config.k;
        let rho = self.step_size(self.updates);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, self.updates));
        let init = Gamma::new(100.0, 0.01).expect("valid gamma parameters");

        let digamma_totals = self.digamma_topic_totals();
        let mut sstats: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for doc in batch {
            let start: Vec<f64> = (0..k).map(|_| init.sample(&mut rng)).collect();
            let post = self.e_step(doc, start, &digamma_totals);
            for (j, &id) in doc.ids.iter().enumerate() {
                let row = sstats.entry(id).or_insert_with(|| vec![0.0; k]);
                for (t, r) in row.iter_mut().enumerate() {
                    *r += post.responsibilities[j * k + t];
                }
            }
        }

        if rho >= 1.0 {
            // lambda = eta + sstats exactly
            self.acc.iter_mut().for_each(|x| *x = 0.0);
            self.scale = 1.0;
            self.offset = self.config.eta;
            for (&id, row) in &sstats {
                self.acc[id * k..(id + 1) * k].copy_from_slice(row);
            }
            self.recompute_topic_sums();
        } else {
            let new_scale = (1.0 - rho) * self.scale;
            if self.offset != self.config.eta {
                self.offset = (1.0 - rho) * self.offset + rho * self.config.eta;
            }
            for (&id, row) in &sstats {
                for (t, &s) in row.iter().enumerate() {
                    let inc = rho * s / new_scale;
                    self.acc[id * k + t] += inc;
                    self.acc_topic_sums[t] += inc;
                }
            }
            self.scale = new_scale;
            if self.scale < SCALE_FLOOR {
                let s = self.scale;
                self.acc.iter_mut().for_each(|x| *x *= s);
                self.scale = 1.0;
                self.recompute_topic_sums();
            }
        }
        self.updates += 1;
        Ok(UpdateStats {
            rho,
            documents: batch.len(),
        })
    }

    fn recompute_topic_sums(&mut self) {
        let k = self.config.k;
        let mut sums = vec![0.0; k];
        for col in self.acc.chunks_exact(k) {
            for (s, x) in sums.iter_mut().zip(col) {
                *s += x;
            }
        }
        self.acc_topic_sums = sums;
    }

    fn digamma_topic_totals(&self) -> Vec<f64> {
        (0..self.config.k).map(|t| digamma(self.topic_total(t))).collect()
    }

    /// Posterior topic proportions for `doc`; the model is not modified.
    /// Out-of-vocabulary terms are ignored.
    pub fn infer(&self, doc: &Document) -> TopicDistribution {
        self.infer_encoded(&self.encode(doc))
    }

    pub fn infer_encoded(&self, doc: &EncodedDoc) -> TopicDistribution {
        let k = self.config.k;
        let total = doc.total();
        if total <= 0.0 {
            return TopicDistribution::uniform(k);
        }
        let start = vec![self.config.alpha + total / k as f64; k];
        let post = self.e_step(doc, start, &self.digamma_topic_totals());
        TopicDistribution::from_weights(post.gamma).unwrap_or_else(|| TopicDistribution::uniform(k))
    }

    fn e_step(&self, doc: &EncodedDoc, mut gamma: Vec<f64>, digamma_totals: &[f64]) -> Posterior {
        let k = self.config.k;
        let n = doc.ids.len();
        let alpha = self.config.alpha;

        // exp(E[log beta]) restricted to the document's terms, `eb[j * k + t]`
        let mut eb = vec![0.0; n * k];
        for (j, &id) in doc.ids.iter().enumerate() {
            for t in 0..k {
                eb[j * k + t] = (digamma(self.topic_term_weight(t, id)) - digamma_totals[t]).exp();
            }
        }

        let mut e_theta = exp_dirichlet_expectation(&gamma);
        let mut phinorm = phi_norm(&e_theta, &eb, n, k);
        for _ in 0..self.config.e_step_iters {
            let last = gamma.clone();
            for t in 0..k {
                let mut s = 0.0;
                for j in 0..n {
                    s += doc.counts[j] * eb[j * k + t] / phinorm[j];
                }
                gamma[t] = alpha + e_theta[t] * s;
            }
            e_theta = exp_dirichlet_expectation(&gamma);
            phinorm = phi_norm(&e_theta, &eb, n, k);
            let change: f64 =
                gamma.iter().zip(&last).map(|(a, b)| (a - b).abs()).sum::<f64>() / k as f64;
            if change < self.config.e_step_tol {
                break;
            }
        }

        let mut responsibilities = vec![0.0; n * k];
        for j in 0..n {
            let w = doc.counts[j] / phinorm[j];
            for t in 0..k {
                responsibilities[j * k + t] = e_theta[t] * w * eb[j * k + t];
            }
        }
        Posterior {
            gamma,
            responsibilities,
        }
    }

    /// `exp(-sum log p(d) / N)` over held-out documents, with `p(d)` the
    /// predictive likelihood under the posterior-mean topic proportions and
    /// topic-term distributions. `N` counts in-vocabulary tokens only.
    pub fn perplexity(&self, heldout: &[Document]) -> Result<f64, ModelError> {
        let k = self.config.k;
        let totals: Vec<f64> = (0..k).map(|t| self.topic_total(t)).collect();
        let mut log_lik = 0.0;
        let mut tokens = 0.0;
        for doc in heldout {
            let enc = self.encode(doc);
            if enc.total() <= 0.0 {
                continue;
            }
            let theta = self.infer_encoded(&enc);
            for (&id, &c) in enc.ids.iter().zip(&enc.counts) {
                let p: f64 = (0..k)
                    .map(|t| theta.probs()[t] * self.topic_term_weight(t, id) / totals[t])
                    .sum();
                log_lik += c * p.ln();
            }
            tokens += enc.total();
        }
        if tokens <= 0.0 {
            return Err(ModelError::NoTokens);
        }
        Ok((-log_lik / tokens).exp())
    }
}

struct Posterior {
    gamma: Vec<f64>,
    /// `responsibilities[j * k + t]`: expected count of term j in topic t
    responsibilities: Vec<f64>,
}

fn exp_dirichlet_expectation(gamma: &[f64]) -> Vec<f64> {
    let total = digamma(gamma.iter().sum());
    gamma.iter().map(|&g| (digamma(g) - total).exp()).collect()
}

fn phi_norm(e_theta: &[f64], eb: &[f64], n: usize, k: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let mut s = 1e-100;
            for t in 0..k {
                s += e_theta[t] * eb[j * k + t];
            }
            s
        })
        .collect()
}

/// splitmix64 over (seed, step) so each update draws an independent stream.
fn mix_seed(seed: u64, step: u64) -> u64 {
    let mut z = seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
