use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use changeloc_core::corpus::{PreprocessConfig, WordList};
use changeloc_core::engine::EngineConfig;
use changeloc_core::locator::LocatorConfig;
use changeloc_core::topicmodel::LdaConfig;
use changeloc_core::translation::{ReadinessPolicy, DEFAULT_RIDGE};

use crate::linking::LinkConventions;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSettings {
    pub filename_repeat: u32,
    pub keep_unsplit: bool,
    pub context_lines: usize,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        let d = PreprocessConfig::default();
        Self {
            filename_repeat: d.filename_repeat,
            keep_unsplit: d.keep_unsplit,
            context_lines: d.context_lines,
        }
    }
}

impl PreprocessSettings {
    pub fn to_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            filename_repeat: self.filename_repeat,
            keep_unsplit: self.keep_unsplit,
            context_lines: self.context_lines,
            code_keywords: WordList::java_keywords(),
            stopwords: WordList::english_stopwords(),
        }
    }
}

fn default_changeset_model() -> LdaConfig {
    LdaConfig::changeset_default()
}

fn default_bug_report_model() -> LdaConfig {
    LdaConfig::bug_report_default()
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

fn default_extensions() -> Vec<String> {
    vec![".java".to_owned()]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One project's settings, read from a TOML file. Relative paths resolve
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default)]
    pub repo_path: Option<PathBuf>,
    pub changesets_path: PathBuf,
    pub bugs_path: PathBuf,
    #[serde(default)]
    pub links_path: Option<PathBuf>,
    #[serde(default)]
    pub link_conventions: Option<LinkConventions>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Seeds both topic models (the bug-report model gets `seed + 1`).
    pub seed: u64,
    #[serde(default = "default_changeset_model")]
    pub changeset_model: LdaConfig,
    #[serde(default = "default_bug_report_model")]
    pub bug_report_model: LdaConfig,
    #[serde(default)]
    pub readiness: ReadinessPolicy,
    #[serde(default)]
    pub locator: LocatorConfig,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_extensions")]
    pub extensions: Vec<String>,
    #[serde(default)]
    pub preprocess: PreprocessSettings,
}

impl ProjectConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, toml::de::Error> {
        let mut cfg: ProjectConfig = toml::from_str(text)?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.repo_path.as_mut() {
            fix(p);
        }
        fix(&mut self.changesets_path);
        fix(&mut self.bugs_path);
        if let Some(p) = self.links_path.as_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.links_path.is_none() && self.link_conventions.is_none() {
            return Err(ConfigError::Invalid("one of links_path or link_conventions is required".into()));
        }
        if self.preprocess.filename_repeat == 0 {
            return Err(ConfigError::Invalid("preprocess.filename_repeat must be at least 1".into()));
        }
        self.engine_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            changeset_model: LdaConfig {
                seed: self.seed,
                ..self.changeset_model.clone()
            },
            bug_report_model: LdaConfig {
                seed: self.seed.wrapping_add(1),
                ..self.bug_report_model.clone()
            },
            readiness: self.readiness,
            locator: self.locator,
            ridge: self.ridge,
            extensions: self.extensions.clone(),
        }
    }

    /// Where replay and ingest put the links file when none is configured.
    pub fn links_file(&self) -> PathBuf {
        self.links_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("links.csv"))
    }

    pub fn state_file(&self) -> PathBuf {
        self.output_dir.join("state.bin")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
changesets_path = "data/changesets.jsonl"
bugs_path = "data/bugs.jsonl"
links_path = "data/links.csv"
seed = 9
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ProjectConfig::parse(MINIMAL, Path::new("/proj")).unwrap();
        assert_eq!(cfg.changesets_path, PathBuf::from("/proj/data/changesets.jsonl"));
        assert_eq!(cfg.changeset_model.k, 100);
        assert_eq!(cfg.bug_report_model.k, 50);
        assert_eq!(cfg.readiness.omega, 1.5);
        assert_eq!(cfg.locator.gamma, 5.0);
        let e = cfg.engine_config();
        assert_eq!(e.changeset_model.seed, 9);
        assert_eq!(e.bug_report_model.seed, 10);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\nmystery = 1\n");
        assert!(ProjectConfig::parse(&text, Path::new("/")).is_err());
        let nested = format!("{MINIMAL}\n[locator]\ngamma = 5.0\nbogus = true\n");
        assert!(ProjectConfig::parse(&nested, Path::new("/")).is_err());
    }

    #[test]
    fn needs_links_source() {
        let text = "changesets_path = \"c\"\nbugs_path = \"b\"\nseed = 1\n";
        let cfg = ProjectConfig::parse(text, Path::new("/")).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
repo_path = "../repo"
changesets_path = "data/changesets.jsonl"
bugs_path = "data/bugs.jsonl"
output_dir = "out"
seed = 42
extensions = [".java"]
ridge = 1e-6

[link_conventions]
keywords = ["fixes", "closes", "resolves"]
project = "MYPROJ"

[readiness]
omega = 1.5
use_commit_logs = false

[locator]
gamma = 5.0
baseline_mode = false

[preprocess]
filename_repeat = 10
keep_unsplit = true
context_lines = 3

[changeset_model]
k = 20
alpha = 0.05
eta = 0.05
kappa = 0.75
tau0 = 1.0
seed = 0
e_step_iters = 100
e_step_tol = 1e-3
"#;
        let cfg = ProjectConfig::parse(text, Path::new("/p")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.repo_path, Some(PathBuf::from("/p/../repo")));
        assert_eq!(cfg.changeset_model.k, 20);
        assert_eq!(cfg.engine_config().changeset_model.seed, 42);
        assert_eq!(cfg.links_file(), PathBuf::from("/p/out/links.csv"));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let text = format!("{MINIMAL}\n[locator]\ngamma = 0.5\n");
        let cfg = ProjectConfig::parse(&text, Path::new("/")).unwrap();
        assert!(cfg.validate().is_err());
    }
}
