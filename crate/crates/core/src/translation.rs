//! Least-squares map from bug-report topic space to changeset topic space,
//! learned from (bug report, fixing changeset) pairs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::topicmodel::TopicDistribution;

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslationError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("no training pairs")]
    NoPairs,
    #[error("invalid readiness policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    RealFix,
    /// Cold-start pair: a commit message against its own changeset.
    CommitLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadinessPolicy {
    pub omega: f64,
    pub use_commit_logs: bool,
    /// Keep only the most recent `window` pairs of each kind.
    #[serde(default)]
    pub window: Option<usize>,
}

impl Default for ReadinessPolicy {
    fn default() -> Self {
        Self {
            omega: 1.5,
            use_commit_logs: false,
            window: None,
        }
    }
}

impl ReadinessPolicy {
    pub fn validate(&self) -> Result<(), TranslationError> {
        if !(self.omega >= 1.0 && self.omega.is_finite()) {
            return Err(TranslationError::InvalidPolicy(format!("omega must be >= 1, got {}", self.omega)));
        }
        if self.window == Some(0) {
            return Err(TranslationError::InvalidPolicy("window must be positive".into()));
        }
        Ok(())
    }

    pub fn threshold(&self, k_br: usize, k_cs: usize) -> usize {
        (self.omega * k_br.max(k_cs) as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub kind: PairKind,
}

/// Training rows of B (bug-report side) and A (changeset side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStore {
    k_br: usize,
    k_cs: usize,
    rows: VecDeque<PairRow>,
}

impl PairStore {
    pub fn new(k_br: usize, k_cs: usize) -> Self {
        Self {
            k_br,
            k_cs,
            rows: VecDeque::new(),
        }
    }

    pub fn k_br(&self) -> usize {
        self.k_br
    }

    pub fn k_cs(&self) -> usize {
        self.k_cs
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, kind: PairKind) -> usize {
        self.rows.iter().filter(|r| r.kind == kind).count()
    }

    pub fn rows(&self) -> impl Iterator<Item = &PairRow> {
        self.rows.iter()
    }

    pub fn record_pair(
        &mut self,
        b: &TopicDistribution,
        a: &TopicDistribution,
        kind: PairKind,
    ) -> Result<(), TranslationError> {
        self.push_row(b.probs().to_vec(), a.probs().to_vec(), kind)
    }

    /// Appends a raw row; used when restoring a persisted store.
    pub fn push_row(&mut self, b: Vec<f64>, a: Vec<f64>, kind: PairKind) -> Result<(), TranslationError> {
        if b.len() != self.k_br {
            return Err(TranslationError::DimensionMismatch {
                expected: self.k_br,
                got: b.len(),
            });
        }
        if a.len() != self.k_cs {
            return Err(TranslationError::DimensionMismatch {
                expected: self.k_cs,
                got: a.len(),
            });
        }
        self.rows.push_back(PairRow { b, a, kind });
        Ok(())
    }

    /// Drops the oldest rows of each kind beyond `window`.
    pub fn apply_window(&mut self, window: usize) {
        for kind in [PairKind::RealFix, PairKind::CommitLog] {
            let mut excess = self.count(kind).saturating_sub(window);
            self.rows.retain(|r| {
                if r.kind == kind && excess > 0 {
                    excess -= 1;
                    false
                } else {
                    true
                }
            });
        }
    }

    /// Commit-log pairs only count while real pairs alone are short of the
    /// threshold.
    pub fn is_ready(&self, policy: &ReadinessPolicy) -> bool {
        let threshold = policy.threshold(self.k_br, self.k_cs);
        let real = self.count(PairKind::RealFix);
        if real >= threshold {
            return true;
        }
        policy.use_commit_logs && self.len() >= threshold
    }

    /// Rows used for fitting under `policy`.
    pub fn training_rows(&self, policy: &ReadinessPolicy) -> Vec<&PairRow> {
        let real_only = !policy.use_commit_logs
            || self.count(PairKind::RealFix) >= policy.threshold(self.k_br, self.k_cs);
        self.rows
            .iter()
            .filter(|r| !real_only || r.kind == PairKind::RealFix)
            .collect()
    }

    pub fn fit(&self, policy: &ReadinessPolicy, ridge: f64) -> Result<TranslationMatrix, TranslationError> {
        let rows = self.training_rows(policy);
        if rows.is_empty() {
            return Err(TranslationError::NoPairs);
        }
        let b: Vec<&[f64]> = rows.iter().map(|r| r.b.as_slice()).collect();
        let a: Vec<&[f64]> = rows.iter().map(|r| r.a.as_slice()).collect();
        let t = fit_least_squares(&b, &a, self.k_br, self.k_cs, ridge)?;
        Ok(TranslationMatrix {
            k_br: self.k_br,
            k_cs: self.k_cs,
            t,
            fitted_on: rows.len(),
        })
    }
}

/// Dense `k_br x k_cs` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationMatrix {
    k_br: usize,
    k_cs: usize,
    t: Vec<f64>,
    fitted_on: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translated {
    pub dist: TopicDistribution,
    /// The clamped product was all zero; `dist` is uniform.
    pub degenerate: bool,
}

impl TranslationMatrix {
    pub fn from_row_major(k_br: usize, k_cs: usize, t: Vec<f64>, fitted_on: usize) -> Result<Self, TranslationError> {
        if t.len() != k_br * k_cs {
            return Err(TranslationError::DimensionMismatch {
                expected: k_br * k_cs,
                got: t.len(),
            });
        }
        Ok(Self { k_br, k_cs, t, fitted_on })
    }

    pub fn k_br(&self) -> usize {
        self.k_br
    }

    pub fn k_cs(&self) -> usize {
        self.k_cs
    }

    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.k_cs + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.t
    }

    /// `b^T T`, negatives clamped to zero, L1-normalized.
    pub fn translate(&self, b: &TopicDistribution) -> Result<Translated, TranslationError> {
        if b.len() != self.k_br {
            return Err(TranslationError::DimensionMismatch {
                expected: self.k_br,
                got: b.len(),
            });
        }
        let mut out = vec![0.0; self.k_cs];
        for (i, &bi) in b.probs().iter().enumerate() {
            if bi == 0.0 {
                continue;
            }
            let row = &self.t[i * self.k_cs..(i + 1) * self.k_cs];
            for (o, &tij) in out.iter_mut().zip(row) {
                *o += bi * tij;
            }
        }
        for o in &mut out {
            if !(*o > 0.0) {
                *o = 0.0;
            }
        }
        Ok(match TopicDistribution::from_weights(out) {
            Some(dist) => Translated { dist, degenerate: false },
            None => {
                warn!("translated distribution is all non-positive; using uniform");
                Translated {
                    dist: TopicDistribution::uniform(self.k_cs),
                    degenerate: true,
                }
            }
        })
    }
}

/// Solves `(B^T B + ridge I) T = B^T A` by Cholesky factorization.
/// Returns `T` row-major, `n x m` where rows of `b` have length `n` and rows
/// of `a` length `m`.
pub fn fit_least_squares(
    b: &[&[f64]],
    a: &[&[f64]],
    n: usize,
    m: usize,
    ridge: f64,
) -> Result<Vec<f64>, TranslationError> {
    if b.len() != a.len() {
        return Err(TranslationError::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    if b.is_empty() {
        return Err(TranslationError::NoPairs);
    }
    for row in b {
        if row.len() != n {
            return Err(TranslationError::DimensionMismatch { expected: n, got: row.len() });
        }
    }
    for row in a {
        if row.len() != m {
            return Err(TranslationError::DimensionMismatch { expected: m, got: row.len() });
        }
    }

    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n * m];
    for (brow, arow) in b.iter().zip(a) {
        for i in 0..n {
            let bi = brow[i];
            if bi == 0.0 {
                continue;
            }
            for j in i..n {
                gram[i * n + j] += bi * brow[j];
            }
            for (r, &aj) in rhs[i * m..(i + 1) * m].iter_mut().zip(arow.iter()) {
                *r += bi * aj;
            }
        }
    }
    for i in 0..n {
        gram[i * n + i] += ridge;
        for j in 0..i {
            gram[i * n + j] = gram[j * n + i];
        }
    }

    let l = cholesky(&gram, n)?;
    // forward then backward substitution, one right-hand column block at a time
    let mut y = rhs;
    for i in 0..n {
        for k in 0..i {
            let lik = l[i * n + k];
            if lik != 0.0 {
                for c in 0..m {
                    y[i * m + c] -= lik * y[k * m + c];
                }
            }
        }
        let d = l[i * n + i];
        for c in 0..m {
            y[i * m + c] /= d;
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l[k * n + i];
            if lki != 0.0 {
                for c in 0..m {
                    y[i * m + c] -= lki * y[k * m + c];
                }
            }
        }
        let d = l[i * n + i];
        for c in 0..m {
            y[i * m + c] /= d;
        }
    }
    Ok(y)
}

fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>, TranslationError> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let tol = scale * n as f64 * f64::EPSILON;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > tol) {
            return Err(TranslationError::SingularSystem);
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// `||B T - A||^2` (squared Frobenius norm).
pub fn residual(b: &[&[f64]], a: &[&[f64]], t: &[f64], m: usize) -> f64 {
    let mut total = 0.0;
    for (brow, arow) in b.iter().zip(a) {
        for c in 0..m {
            let pred: f64 = brow.iter().enumerate().map(|(i, &bi)| bi * t[i * m + c]).sum();
            let e = pred - arow[c];
            total += e * e;
        }
    }
    total
}
