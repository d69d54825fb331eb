//! The command implementations behind the binary, kept in the library so
//! they can be driven from tests.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use tracing::{info, warn};

use changeloc_core::corpus::{BugReport, Changeset, FileStatus};
use changeloc_core::engine::Engine;
use changeloc_core::evaluation::{
    build_events, cochange_analysis, replay_with, CochangeConfig, CochangeReport, EvalResult, EventPayload,
    HistoryEvent, Mode, ReplayConfig,
};
use changeloc_core::locator::RankedClass;
use changeloc_core::synthetic::{generate, SyntheticConfig};
use changeloc_core::translation::PairKind;

use crate::config::ProjectConfig;
use crate::git;
use crate::linking::{link_bugs, CommitInfo};
use crate::state::{Cursor, ModelState, StateError};
use crate::streams::{self, ChangesetRecord};

fn parse_all(records: &[ChangesetRecord]) -> Result<Vec<Changeset>> {
    records.iter().map(ChangesetRecord::parse).collect()
}

fn changed_paths(cs: &Changeset) -> Vec<String> {
    cs.files
        .iter()
        .filter(|f| f.status != FileStatus::Deleted)
        .map(|f| f.path.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub new_changesets: usize,
    pub total_changesets: usize,
    pub links: Option<usize>,
    pub unlinked: Vec<String>,
}

/// Appends commits newer than the stream's last timestamp, then relinks bugs
/// when link conventions are configured.
pub fn ingest(cfg: &ProjectConfig) -> Result<IngestSummary> {
    let Some(repo) = &cfg.repo_path else {
        bail!("ingest needs repo_path in the configuration");
    };
    let mut records = streams::read_changesets_or_empty(&cfg.changesets_path)?;
    let since = records.iter().map(|r| r.timestamp).max();
    let known: std::collections::BTreeSet<String> = records.iter().map(|r| r.sha.clone()).collect();
    let fresh: Vec<ChangesetRecord> = git::extract_changesets(repo, since)?
        .into_iter()
        .filter(|r| !known.contains(&r.sha))
        .collect();
    streams::write_changesets(&cfg.changesets_path, &fresh, true)?;
    info!(new = fresh.len(), "changesets appended");
    let new_changesets = fresh.len();
    records.extend(fresh);

    let (links, unlinked) = match &cfg.link_conventions {
        Some(conv) => {
            let bugs = streams::read_bugs(&cfg.bugs_path)?;
            let commits = records
                .iter()
                .map(|r| {
                    Ok(CommitInfo {
                        sha: r.sha.clone(),
                        timestamp: r.timestamp,
                        message: r.message.clone(),
                        files: changed_paths(&r.parse()?),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let linked = link_bugs(&bugs, &commits, conv, &cfg.extensions).context("building link patterns")?;
            streams::write_links(&cfg.links_file(), &linked.links)?;
            (Some(linked.links.len()), linked.unlinked)
        }
        None => (None, Vec::new()),
    };
    Ok(IngestSummary {
        new_changesets,
        total_changesets: records.len(),
        links,
        unlinked,
    })
}

fn event_id(e: &HistoryEvent) -> String {
    match &e.payload {
        EventPayload::Changeset(c) => c.sha.clone(),
        EventPayload::BugReport(b) => format!("bug:{}", b.id),
        EventPayload::FixLink(l) => format!("fix:{}", l.bug_id),
    }
}

fn cursor_after(events: &[HistoryEvent]) -> Cursor {
    let Some(last) = events.last() else {
        return Cursor::default();
    };
    Cursor {
        timestamp: Some(last.timestamp),
        ids: events
            .iter()
            .filter(|e| e.timestamp == last.timestamp)
            .map(event_id)
            .collect(),
    }
}

fn load_events(cfg: &ProjectConfig) -> Result<Vec<HistoryEvent>> {
    let changesets = parse_all(&streams::read_changesets(&cfg.changesets_path)?)?;
    let bugs = streams::read_bugs(&cfg.bugs_path)?;
    let links_file = cfg.links_file();
    let links = streams::read_links(&links_file)
        .with_context(|| format!("no links at {}; run ingest or set links_path", links_file.display()))?;
    Ok(build_events(changesets, bugs, links)?)
}

pub fn metrics_file(cfg: &ProjectConfig, mode: Mode) -> std::path::PathBuf {
    cfg.output_dir.join(format!("metrics_{}.csv", mode_name(mode)))
}

pub fn timing_file(cfg: &ProjectConfig, mode: Mode) -> std::path::PathBuf {
    cfg.output_dir.join(format!("timing_{}.csv", mode_name(mode)))
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Ensemble => "ensemble",
        Mode::Baseline => "baseline",
    }
}

/// Replays the whole history from fresh models, writes the metric and timing
/// tables, and (in ensemble mode) saves the final state.
pub fn replay(cfg: &ProjectConfig, mode: Mode, measure_rebuild: bool) -> Result<EvalResult> {
    let events = load_events(cfg)?;
    let settings = cfg.preprocess.clone();
    let mut engine = Engine::new(cfg.engine_config(), settings.to_config())?;
    let result = replay_with(&mut engine, &events, &ReplayConfig { mode, measure_rebuild })?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(metrics_file(cfg, mode), result.metrics_table())?;
    std::fs::write(timing_file(cfg, mode), result.timing_table())?;

    if mode == Mode::Ensemble {
        let path = cfg.state_file();
        let mut cursor = match ModelState::load(&path) {
            Ok(old) => old.cursor,
            Err(StateError::Io { .. }) => Cursor::default(),
            Err(e) => {
                warn!(error = %e, "existing state unreadable; replacing it");
                Cursor::default()
            }
        };
        cursor
            .advance(cursor_after(&events))
            .context("the streams are older than the saved state; remove it to start over")?;
        let state = ModelState {
            engine,
            preprocess: settings,
            cursor,
            timing: result.timing,
        };
        state.save(&path)?;
    }
    Ok(result)
}

/// Reads a bug report from a text file: the first line is the summary, the
/// rest the description.
pub fn read_bug_text(path: &Path) -> Result<BugReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (summary, description) = text.split_once('\n').unwrap_or((&text, ""));
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "query".into());
    Ok(BugReport {
        id,
        timestamp_reported: 0,
        summary: summary.trim().to_owned(),
        description: description.trim().to_owned(),
    })
}

pub fn locate(cfg: &ProjectConfig, bug: &BugReport, top: usize, baseline: bool) -> Result<Vec<RankedClass>> {
    let mut state = ModelState::load(&cfg.state_file()).context("loading state; run replay first")?;
    let ranking = state.engine.locate(bug, baseline)?;
    Ok(ranking.0.into_iter().take(top).collect())
}

pub fn cochange(cfg: &ProjectConfig) -> Result<CochangeReport> {
    let state = ModelState::load(&cfg.state_file()).context("loading state; run replay first")?;
    let changesets = parse_all(&streams::read_changesets(&cfg.changesets_path)?)?;
    let cc = CochangeConfig {
        extensions: cfg.extensions.clone(),
        ..CochangeConfig::default()
    };
    Ok(cochange_analysis(
        &changesets,
        &state.engine.changeset_model,
        &state.engine.tree,
        &cc,
        &state.engine.preprocess,
    )?)
}

pub fn cochange_table(r: &CochangeReport) -> String {
    let mut out = String::from("bucket,pairs,mean_similarity\n");
    for (name, b) in [("high", &r.high), ("mid", &r.mid), ("low", &r.low)] {
        let sim = b.mean_similarity.map(|s| format!("{s:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{name},{},{sim}", b.pairs);
    }
    out
}

pub fn stats(cfg: &ProjectConfig) -> Result<String> {
    let state = ModelState::load(&cfg.state_file()).context("loading state; run replay first")?;
    let e = &state.engine;
    let mut out = String::new();
    for (name, m) in [("changeset model", &e.changeset_model), ("bug-report model", &e.bug_report_model)] {
        let _ = writeln!(
            out,
            "{name}: k={} vocabulary={} updates={}",
            m.num_topics(),
            m.vocab_size(),
            m.update_count()
        );
    }
    let _ = writeln!(
        out,
        "pairs: {} real, {} commit-log, ready at {}",
        e.pairs.count(PairKind::RealFix),
        e.pairs.count(PairKind::CommitLog),
        e.config.readiness.threshold(e.pairs.k_br(), e.pairs.k_cs())
    );
    match &e.translation {
        Some(t) => {
            let _ = writeln!(out, "translation: {}x{} fitted on {} pairs", t.k_br(), t.k_cs(), t.fitted_on());
        }
        None => out.push_str("translation: not fitted\n"),
    }
    let _ = writeln!(out, "snapshot: {} files", e.tree.len());
    match state.cursor.timestamp {
        Some(ts) => {
            let _ = writeln!(out, "cursor: {ts} ({} events)", state.cursor.ids.len());
        }
        None => out.push_str("cursor: empty\n"),
    }
    let t = &state.timing;
    let _ = writeln!(
        out,
        "timing: {} updates, mean {:.6}s, rebuild {:.6}s",
        t.updates, t.mean_update_time, t.build_time
    );
    Ok(out)
}

/// Writes a synthetic project (streams, links and a config) into `dir`.
pub fn synth(dir: &Path, synthetic: &SyntheticConfig, topics: (usize, usize)) -> Result<()> {
    let h = generate(synthetic);
    let records: Vec<ChangesetRecord> = h
        .changesets
        .iter()
        .zip(&h.raw_diffs)
        .map(|(c, diff)| ChangesetRecord {
            sha: c.sha.clone(),
            timestamp: c.timestamp,
            author: c.author.clone(),
            message: c.message.clone(),
            diff: diff.clone(),
        })
        .collect();
    streams::write_changesets(&dir.join("changesets.jsonl"), &records, false)?;
    streams::write_bugs(&dir.join("bugs.jsonl"), &h.bugs)?;
    streams::write_links(&dir.join("links.csv"), &h.links)?;
    let config = format!(
        "changesets_path = \"changesets.jsonl\"\n\
         bugs_path = \"bugs.jsonl\"\n\
         links_path = \"links.csv\"\n\
         output_dir = \"out\"\n\
         seed = {}\n\n\
         [changeset_model]\n{}\n\
         [bug_report_model]\n{}",
        synthetic.seed,
        lda_toml(topics.0, 0.75),
        lda_toml(topics.1, 1.0),
    );
    std::fs::write(dir.join("project.toml"), config)?;
    Ok(())
}

fn lda_toml(k: usize, kappa: f64) -> String {
    let lda = changeloc_core::topicmodel::LdaConfig::with_topics(k, kappa);
    toml::to_string(&lda).expect("LdaConfig serializes")
}
