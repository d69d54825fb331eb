//! Binary snapshot of the engine between commands.
//!
//! Layout: `CHGLOC\0\x01` magic, format version (u32 LE), SHA-256 of the
//! body, then the body as a run of sections `tag[4] | len u64 LE | payload`.
//! Integers and floats are little-endian; strings are length-prefixed UTF-8.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use changeloc_core::corpus::SourceTree;
use changeloc_core::engine::{Engine, EngineConfig};
use changeloc_core::evaluation::TimingReport;
use changeloc_core::topicmodel::{LdaConfig, TopicModel};
use changeloc_core::translation::{PairKind, PairStore, TranslationMatrix};

use crate::config::PreprocessSettings;

pub const MAGIC: &[u8; 8] = b"CHGLOC\0\x01";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 32;

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("state file has format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt state file: {0}")]
    CorruptSnapshot(String),
    #[error("cursor would move backwards: {0}")]
    CursorRegression(String),
}

type Result<T> = std::result::Result<T, StateError>;

fn corrupt(msg: impl Into<String>) -> StateError {
    StateError::CorruptSnapshot(msg.into())
}

/// Position in the event history: the newest timestamp processed and the ids
/// of the events at that timestamp.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cursor {
    pub timestamp: Option<i64>,
    pub ids: Vec<String>,
}

impl Cursor {
    /// Moves to `next`, refusing to go back in time.
    pub fn advance(&mut self, next: Cursor) -> Result<()> {
        if let (Some(now), Some(then)) = (self.timestamp, next.timestamp) {
            if then < now {
                return Err(StateError::CursorRegression(format!("{then} < {now}")));
            }
        }
        if self.timestamp.is_some() && next.timestamp.is_none() {
            return Err(StateError::CursorRegression("cleared".into()));
        }
        *self = next;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredConfig {
    engine: EngineConfig,
    preprocess: PreprocessSettings,
}

#[derive(Debug, Clone)]
pub struct ModelState {
    pub engine: Engine,
    pub preprocess: PreprocessSettings,
    pub cursor: Cursor,
    pub timing: TimingReport,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn i64(&mut self, x: i64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, xs: &[f64]) {
        self.len(xs.len());
        for &x in xs {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(corrupt(format!("{} section truncated", self.what)));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    /// A length, bounded by what could possibly remain.
    fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| corrupt("length overflow"))?;
        if n.saturating_mul(elem_size.max(1)) > self.buf.len() {
            return Err(corrupt(format!("{} section truncated", self.what)));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn finish(&self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(corrupt(format!("trailing bytes in {} section", self.what)))
        }
    }
}

fn encode_model(m: &TopicModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.str(&serde_json::to_string(m.config()).expect("config serializes"));
    w.u64(m.update_count());
    w.len(m.vocab_size());
    for term in m.vocabulary().iter() {
        w.str(term);
    }
    w.f64s(&m.lambda_row_major());
    w.0
}

fn decode_model(buf: &[u8], what: &'static str) -> Result<TopicModel> {
    let mut r = Reader { buf, what };
    let config: LdaConfig = serde_json::from_str(&r.str()?).map_err(|e| corrupt(e.to_string()))?;
    let updates = r.u64()?;
    let v = r.len(8)?;
    let terms = (0..v).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let lambda = r.f64s()?;
    r.finish()?;
    TopicModel::from_parts(config, terms, &lambda, updates).map_err(|e| corrupt(format!("{what}: {e}")))
}

fn encode_pairs(p: &PairStore) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.len(p.k_br());
    w.len(p.k_cs());
    w.len(p.len());
    for row in p.rows() {
        w.u8(match row.kind {
            PairKind::RealFix => 0,
            PairKind::CommitLog => 1,
        });
        w.f64s(&row.b);
        w.f64s(&row.a);
    }
    w.0
}

fn decode_pairs(buf: &[u8]) -> Result<PairStore> {
    let mut r = Reader { buf, what: "PAIR" };
    let k_br = r.u64()? as usize;
    let k_cs = r.u64()? as usize;
    let n = r.len(1)?;
    let mut store = PairStore::new(k_br, k_cs);
    for _ in 0..n {
        let kind = match r.u8()? {
            0 => PairKind::RealFix,
            1 => PairKind::CommitLog,
            other => return Err(corrupt(format!("pair kind {other}"))),
        };
        let b = r.f64s()?;
        let a = r.f64s()?;
        store.push_row(b, a, kind).map_err(|e| corrupt(e.to_string()))?;
    }
    r.finish()?;
    Ok(store)
}

fn encode_translation(t: &TranslationMatrix) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.len(t.k_br());
    w.len(t.k_cs());
    w.len(t.fitted_on());
    w.f64s(t.as_row_major());
    w.0
}

fn decode_translation(buf: &[u8]) -> Result<TranslationMatrix> {
    let mut r = Reader { buf, what: "TMAT" };
    let k_br = r.u64()? as usize;
    let k_cs = r.u64()? as usize;
    let fitted_on = r.u64()? as usize;
    let t = r.f64s()?;
    r.finish()?;
    TranslationMatrix::from_row_major(k_br, k_cs, t, fitted_on).map_err(|e| corrupt(e.to_string()))
}

fn encode_cursor(c: &Cursor) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    match c.timestamp {
        Some(ts) => {
            w.u8(1);
            w.i64(ts);
        }
        None => w.u8(0),
    }
    w.len(c.ids.len());
    for id in &c.ids {
        w.str(id);
    }
    w.0
}

fn decode_cursor(buf: &[u8]) -> Result<Cursor> {
    let mut r = Reader { buf, what: "CURS" };
    let timestamp = match r.u8()? {
        0 => None,
        1 => Some(r.i64()?),
        other => return Err(corrupt(format!("cursor flag {other}"))),
    };
    let n = r.len(8)?;
    let ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(Cursor { timestamp, ids })
}

fn encode_tree(t: &SourceTree) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.len(t.len());
    for (path, lines) in t.entries() {
        w.str(path);
        w.len(lines.len());
        for l in lines {
            w.str(l);
        }
    }
    w.0
}

fn decode_tree(buf: &[u8]) -> Result<SourceTree> {
    let mut r = Reader { buf, what: "TREE" };
    let n = r.len(16)?;
    let mut files = Vec::with_capacity(n);
    for _ in 0..n {
        let path = r.str()?;
        let m = r.len(8)?;
        let lines = (0..m).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        files.push((path, lines));
    }
    r.finish()?;
    Ok(SourceTree::from_lines(files))
}

fn encode_timing(t: &TimingReport) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.f64(t.build_time);
    w.f64(t.mean_update_time);
    w.len(t.updates);
    w.f64(t.speedup);
    w.0
}

fn decode_timing(buf: &[u8]) -> Result<TimingReport> {
    let mut r = Reader { buf, what: "TIME" };
    let t = TimingReport {
        build_time: r.f64()?,
        mean_update_time: r.f64()?,
        updates: r.u64()? as usize,
        speedup: r.f64()?,
    };
    r.finish()?;
    Ok(t)
}

impl ModelState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let conf = StoredConfig {
            engine: self.engine.config.clone(),
            preprocess: self.preprocess.clone(),
        };
        let mut sections: Vec<(&[u8; 4], Vec<u8>)> = vec![
            (b"CONF", serde_json::to_vec(&conf).expect("config serializes")),
            (b"CSMD", encode_model(&self.engine.changeset_model)),
            (b"BRMD", encode_model(&self.engine.bug_report_model)),
            (b"PAIR", encode_pairs(&self.engine.pairs)),
        ];
        if let Some(t) = &self.engine.translation {
            sections.push((b"TMAT", encode_translation(t)));
        }
        sections.push((b"CURS", encode_cursor(&self.cursor)));
        sections.push((b"TREE", encode_tree(&self.engine.tree)));
        sections.push((b"TIME", encode_timing(&self.timing)));

        let mut body = Writer(Vec::new());
        for (tag, payload) in sections {
            body.0.extend_from_slice(tag);
            body.len(payload.len());
            body.0.extend_from_slice(&payload);
        }
        let mut out = Vec::with_capacity(HEADER_LEN + body.0.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&body.0));
        out.extend_from_slice(&body.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing magic header"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(StateError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("header truncated"));
        }
        let body = &bytes[HEADER_LEN..];
        if Sha256::digest(body).as_slice() != &bytes[12..HEADER_LEN] {
            return Err(corrupt("checksum mismatch"));
        }

        let mut r = Reader { buf: body, what: "body" };
        let mut sections: Vec<([u8; 4], &[u8])> = Vec::new();
        while !r.buf.is_empty() {
            let tag = r.array::<4>()?;
            let n = r.len(1)?;
            sections.push((tag, r.take(n)?));
        }
        let get = |tag: &[u8; 4]| sections.iter().find(|(t, _)| t == tag).map(|(_, p)| *p);
        let need = |tag: &'static [u8; 4]| {
            get(tag).ok_or_else(|| corrupt(format!("missing {} section", String::from_utf8_lossy(tag))))
        };

        let conf: StoredConfig = serde_json::from_slice(need(b"CONF")?).map_err(|e| corrupt(e.to_string()))?;
        let changeset_model = decode_model(need(b"CSMD")?, "CSMD")?;
        let bug_report_model = decode_model(need(b"BRMD")?, "BRMD")?;
        let pairs = decode_pairs(need(b"PAIR")?)?;
        let translation = get(b"TMAT").map(decode_translation).transpose()?;
        let cursor = decode_cursor(need(b"CURS")?)?;
        let tree = decode_tree(need(b"TREE")?)?;
        let timing = decode_timing(need(b"TIME")?)?;
        let engine = Engine::from_parts(
            conf.engine,
            conf.preprocess.to_config(),
            changeset_model,
            bug_report_model,
            pairs,
            translation,
            tree,
        )
        .map_err(|e| corrupt(e.to_string()))?;
        Ok(Self {
            engine,
            preprocess: conf.preprocess,
            cursor,
            timing,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| StateError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        // write then rename, so a crash never leaves a half-written state
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| StateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use changeloc_core::engine::EngineConfig;
    use changeloc_core::evaluation::{build_events, replay_with, ReplayConfig};
    use changeloc_core::synthetic::{generate, SyntheticConfig};
    use changeloc_core::translation::ReadinessPolicy;

    fn trained() -> ModelState {
        let h = generate(&SyntheticConfig {
            changesets: 120,
            code_bugs: 12,
            nl_bugs: 4,
            ..SyntheticConfig::default()
        });
        let cfg = EngineConfig {
            changeset_model: LdaConfig::with_topics(4, 0.75),
            bug_report_model: LdaConfig::with_topics(3, 1.0),
            readiness: ReadinessPolicy {
                omega: 1.0,
                ..ReadinessPolicy::default()
            },
            ..EngineConfig::default()
        };
        let settings = PreprocessSettings::default();
        let mut engine = Engine::new(cfg, settings.to_config()).unwrap();
        let events = build_events(h.changesets, h.bugs, h.links).unwrap();
        let result = replay_with(&mut engine, &events, &ReplayConfig::default()).unwrap();
        assert!(engine.translation.is_some());
        ModelState {
            engine,
            preprocess: settings,
            cursor: Cursor {
                timestamp: events.last().map(|e| e.timestamp),
                ids: vec!["x".into()],
            },
            timing: result.timing,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let s = trained();
        let first = s.to_bytes();
        let loaded = ModelState::from_bytes(&first).unwrap();
        assert_eq!(loaded.to_bytes(), first);
        assert_eq!(loaded.engine.pairs, s.engine.pairs);
        assert_eq!(loaded.engine.translation, s.engine.translation);
        assert_eq!(loaded.engine.tree, s.engine.tree);
        assert_eq!(loaded.cursor, s.cursor);
        let a = s.engine.changeset_model.lambda_row_major();
        let b = loaded.engine.changeset_model.lambda_row_major();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(
            loaded.engine.changeset_model.vocabulary().iter().collect::<Vec<_>>(),
            s.engine.changeset_model.vocabulary().iter().collect::<Vec<_>>()
        );
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = trained().to_bytes();
        for cut in [5, 20, HEADER_LEN + 3, bytes.len() - 1] {
            let err = ModelState::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, StateError::CorruptSnapshot(_)), "{cut}: {err}");
        }
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = trained().to_bytes();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert!(matches!(ModelState::from_bytes(&bytes), Err(StateError::CorruptSnapshot(_))));
    }

    #[test]
    fn older_version_reported() {
        let mut bytes = trained().to_bytes();
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        match ModelState::from_bytes(&bytes) {
            Err(StateError::VersionMismatch { found, expected }) => {
                assert_eq!((found, expected), (0, FORMAT_VERSION));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cursor_is_monotone() {
        let mut c = Cursor::default();
        c.advance(Cursor { timestamp: Some(10), ids: vec![] }).unwrap();
        c.advance(Cursor { timestamp: Some(10), ids: vec!["a".into()] }).unwrap();
        assert!(c.advance(Cursor { timestamp: Some(9), ids: vec![] }).is_err());
        assert!(c.advance(Cursor::default()).is_err());
        assert_eq!(c.timestamp, Some(10));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/state.bin");
        let s = trained();
        s.save(&path).unwrap();
        let loaded = ModelState::load(&path).unwrap();
        assert_eq!(loaded.to_bytes(), s.to_bytes());
    }
}
