//! Run configuration: one TOML file covering every component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::backend::{LearnedBackendConfig, SyntheticCorpusSpec};
use crate::env::EnvConfig;
use crate::episode::Mode;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: Split,
    /// `train` evaluates teacher-forced (frames aligned with ground truth),
    /// `eval` free-running.
    pub mode: Mode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            mode: Mode::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides every per-section seed.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: SyntheticCorpusSpec,
    pub backend: LearnedBackendConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            corpus: SyntheticCorpusSpec::default(),
            backend: LearnedBackendConfig::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.corpus.seed = seed;
        self.backend.seed = seed;
        self.agent.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.env.validate()?;
        self.agent.validate()
    }
}
