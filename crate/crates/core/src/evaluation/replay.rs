use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::metrics::{average_precision, first_hit, reciprocal_rank, top_at_k};
use super::EvalError;
use crate::corpus::{preprocess_bug_report, BugReport, Changeset, CorpusError, Document, PreprocessConfig};
use crate::engine::{Engine, EngineConfig, EngineError};
use crate::locator::{rank_classes, RankedClass};
use crate::topicmodel::TopicModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixLink {
    pub bug_id: String,
    pub fixing_sha: String,
    /// Goldset: class paths changed by the fix.
    pub fixed_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventPayload {
    Changeset(Changeset),
    BugReport(BugReport),
    FixLink(FixLink),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEvent {
    pub timestamp: i64,
    pub payload: EventPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Changeset and bug-report models combined through T.
    Ensemble,
    /// Changeset model only.
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub mode: Mode,
    /// Time a from-scratch rebuild of the changeset model at the end.
    pub measure_rebuild: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ensemble,
            measure_rebuild: false,
        }
    }
}

/// Orders the three streams into one history. A fix link takes its fixing
/// commit's timestamp and sorts after bug reports and before changesets of
/// the same second, so it is scored against the fix's parent. Changesets
/// keep their stream order within a timestamp, bug reports and links sort
/// by id.
pub fn build_events(
    changesets: Vec<Changeset>,
    bugs: Vec<BugReport>,
    links: Vec<FixLink>,
) -> Result<Vec<HistoryEvent>, EvalError> {
    let commit_time: BTreeMap<&str, i64> = changesets.iter().map(|c| (c.sha.as_str(), c.timestamp)).collect();
    let bug_ids: BTreeSet<&str> = bugs.iter().map(|b| b.id.as_str()).collect();
    let mut keyed: Vec<((i64, u8, usize, String), EventPayload)> = Vec::new();
    for link in links {
        if !bug_ids.contains(link.bug_id.as_str()) {
            return Err(EvalError::UnknownBug(link.bug_id));
        }
        if link.fixed_files.is_empty() {
            return Err(EvalError::EmptyGoldset(link.bug_id));
        }
        let Some(&ts) = commit_time.get(link.fixing_sha.as_str()) else {
            return Err(EvalError::UnknownCommit {
                bug: link.bug_id,
                sha: link.fixing_sha,
            });
        };
        keyed.push(((ts, 1, 0, link.bug_id.clone()), EventPayload::FixLink(link)));
    }
    for b in bugs {
        keyed.push(((b.timestamp_reported, 0, 0, b.id.clone()), EventPayload::BugReport(b)));
    }
    for (i, c) in changesets.into_iter().enumerate() {
        keyed.push(((c.timestamp, 2, i, String::new()), EventPayload::Changeset(c)));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(keyed
        .into_iter()
        .map(|((timestamp, ..), payload)| HistoryEvent { timestamp, payload })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BugEval {
    pub bug_id: String,
    pub fixing_sha: String,
    pub rr: f64,
    pub ap: f64,
    pub first_hit: Option<usize>,
    /// Code-token ratio used for the query, when T was applied.
    pub lambda: Option<f64>,
    pub query: Vec<f64>,
    pub ranking: Vec<RankedClass>,
}

impl BugEval {
    pub fn hit(&self, k: usize) -> bool {
        self.first_hit.is_some_and(|r| r <= k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TimingReport {
    pub build_time: f64,
    pub mean_update_time: f64,
    pub updates: usize,
    /// `build_time / mean_update_time`; 0 when undefined.
    pub speedup: f64,
}

pub fn timing_report(update_times: &[f64], build_time: f64) -> TimingReport {
    if update_times.is_empty() {
        warn!("no update timings recorded");
        return TimingReport {
            build_time,
            ..TimingReport::default()
        };
    }
    let mean = update_times.iter().sum::<f64>() / update_times.len() as f64;
    TimingReport {
        build_time,
        mean_update_time: mean,
        updates: update_times.len(),
        speedup: if mean > 0.0 { build_time / mean } else { 0.0 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub bugs: Vec<BugEval>,
    /// Links whose bug could not be scored (no terms, or nothing indexed).
    pub skipped: Vec<String>,
    pub timing: TimingReport,
}

impl EvalResult {
    pub fn mrr(&self) -> f64 {
        mean(self.bugs.iter().map(|b| b.rr))
    }

    pub fn map(&self) -> f64 {
        mean(self.bugs.iter().map(|b| b.ap))
    }

    pub fn top_at(&self, k: usize) -> f64 {
        let hits: Vec<Option<usize>> = self.bugs.iter().map(|b| b.first_hit).collect();
        top_at_k(&hits, k)
    }

    /// `bug_id,rr,ap,hit1,hit3,hit5` per bug, then an `ALL` row with MRR,
    /// MAP and Top@1/3/5.
    pub fn metrics_table(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |x: f64| format!("{x:.6}");
        let flag = |b: bool| if b { "1" } else { "0" }.to_owned();
        w.write_record(["bug_id", "rr", "ap", "hit1", "hit3", "hit5"]).expect("in-memory write");
        for b in &self.bugs {
            w.write_record([b.bug_id.clone(), fmt(b.rr), fmt(b.ap), flag(b.hit(1)), flag(b.hit(3)), flag(b.hit(5))])
                .expect("in-memory write");
        }
        w.write_record([
            "ALL".to_owned(),
            fmt(self.mrr()),
            fmt(self.map()),
            fmt(self.top_at(1)),
            fmt(self.top_at(3)),
            fmt(self.top_at(5)),
        ])
        .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 table")
    }

    pub fn timing_table(&self) -> String {
        format!(
            "measure,seconds\nbuild_time,{:.9}\nmean_update_time,{:.9}\n",
            self.timing.build_time, self.timing.mean_update_time
        )
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Replays `events` on a fresh engine.
pub fn replay(
    events: &[HistoryEvent],
    config: EngineConfig,
    preprocess: PreprocessConfig,
    cfg: &ReplayConfig,
) -> Result<EvalResult, EvalError> {
    let mut engine = Engine::new(config, preprocess)?;
    replay_with(&mut engine, events, cfg)
}

/// Replays `events` on top of an existing engine. Each fix link is scored
/// before its fixing changeset is applied; the (bug, changeset) pair enters
/// the translation store once that changeset has updated the model.
pub fn replay_with(engine: &mut Engine, events: &[HistoryEvent], cfg: &ReplayConfig) -> Result<EvalResult, EvalError> {
    let ensemble = cfg.mode == Mode::Ensemble;
    let mut last = i64::MIN;
    let mut bugs: BTreeMap<String, (BugReport, Option<Document>)> = BTreeMap::new();
    let mut pending: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    let mut update_times = Vec::new();
    let mut changeset_docs = Vec::new();

    for event in events {
        if event.timestamp < last {
            return Err(EvalError::CausalityViolation {
                last,
                found: event.timestamp,
            });
        }
        last = event.timestamp;
        match &event.payload {
            EventPayload::BugReport(br) => {
                let doc = if ensemble {
                    engine.observe_bug_report(br)?
                } else {
                    preprocess_bug_report(br, &engine.preprocess).ok()
                };
                bugs.insert(br.id.clone(), (br.clone(), doc));
            }
            EventPayload::FixLink(link) => {
                let Some((br, _)) = bugs.get(&link.bug_id) else {
                    return Err(EvalError::UnknownBug(link.bug_id.clone()));
                };
                match score(engine, br, link, cfg.mode)? {
                    Some(eval) => results.push(eval),
                    None => skipped.push(link.bug_id.clone()),
                }
                pending.entry(link.fixing_sha.clone()).or_default().push(link.bug_id.clone());
            }
            EventPayload::Changeset(cs) => {
                let (doc, secs) = engine.observe_changeset(cs)?;
                let Some(doc) = doc else {
                    pending.remove(&cs.sha);
                    continue;
                };
                update_times.push(secs);
                if cfg.measure_rebuild {
                    changeset_docs.push(doc.clone());
                }
                if !ensemble {
                    pending.remove(&cs.sha);
                    continue;
                }
                if engine.config.readiness.use_commit_logs && !engine.pairs.is_ready(&engine.config.readiness) {
                    engine.record_commit_log(cs, &doc)?;
                }
                for bug_id in pending.remove(&cs.sha).unwrap_or_default() {
                    let Some((br, bdoc)) = bugs.get(&bug_id) else { continue };
                    let bdoc = match bdoc {
                        Some(d) => d.clone(),
                        None => match preprocess_bug_report(br, &engine.preprocess) {
                            Ok(d) => d,
                            Err(_) => continue,
                        },
                    };
                    engine.record_fix(&bdoc, &doc)?;
                }
            }
        }
    }
    for sha in pending.keys() {
        warn!(%sha, "fixing changeset never appeared; pair not recorded");
    }

    let build_time = if cfg.measure_rebuild && !changeset_docs.is_empty() {
        let start = Instant::now();
        let mut fresh = TopicModel::new(engine.config.changeset_model.clone()).map_err(EngineError::from)?;
        for d in &changeset_docs {
            fresh.observe(std::slice::from_ref(d)).map_err(EngineError::from)?;
        }
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    info!(bugs = results.len(), skipped = skipped.len(), "replay finished");
    Ok(EvalResult {
        bugs: results,
        skipped,
        timing: timing_report(&update_times, build_time),
    })
}

fn score(engine: &mut Engine, br: &BugReport, link: &FixLink, mode: Mode) -> Result<Option<BugEval>, EvalError> {
    let index = engine.index();
    if index.is_empty() {
        warn!(bug = %link.bug_id, "snapshot has no source files; bug skipped");
        return Ok(None);
    }
    let query = match engine.query(br, &index, mode == Mode::Baseline) {
        Ok(q) => q,
        Err(EngineError::Corpus(CorpusError::EmptyDocument(_))) => {
            warn!(bug = %link.bug_id, "bug report has no terms; bug skipped");
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    let ranking = rank_classes(&query.dist, &index).map_err(EngineError::from)?;
    Ok(Some(BugEval {
        bug_id: link.bug_id.clone(),
        fixing_sha: link.fixing_sha.clone(),
        rr: reciprocal_rank(&ranking, &link.fixed_files),
        ap: average_precision(&ranking, &link.fixed_files),
        first_hit: first_hit(&ranking, &link.fixed_files),
        lambda: query.lambda,
        query: query.dist.into_inner(),
        ranking: ranking.0,
    }))
}
