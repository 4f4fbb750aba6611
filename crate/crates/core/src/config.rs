//! Run configuration: one TOML file with a section per component.
//!
//! ```toml
//! seed = 7
//! threads = 1
//!
//! [scenario]
//! n_humans = 5
//! robot_visible = false
//!
//! [train]
//! il_episodes = 1000
//! rl_episodes = 2000
//!
//! [model]
//! use_local_map = true
//!
//! [eval]
//! n_cases = 100
//!
//! [paths]
//! output_dir = "runs/lm-sarl"
//! ```
//!
//! Every key is optional and unknown keys are rejected. Relative paths in
//! `[paths]` resolve against `output_dir`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::sim::{ScenarioConfig, Setting};
use crate::value_net::SarlConfig;
use crate::vlearning::TrainConfig;

/// Variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CROWDNAV_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Falls back to `$CROWDNAV_OUTPUT_DIR`, then `runs`.
    pub output_dir: Option<PathBuf>,
    pub demonstrations: PathBuf,
    pub il_checkpoint: PathBuf,
    pub il_log: PathBuf,
    pub rl_checkpoint: PathBuf,
    /// Resumable trainer state; the replay memory goes next to it.
    pub training_checkpoint: PathBuf,
    pub training_log: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            output_dir: None,
            demonstrations: "demonstrations.jsonl".into(),
            il_checkpoint: "il.ckpt".into(),
            il_log: "il_log.jsonl".into(),
            rl_checkpoint: "rl.ckpt".into(),
            training_checkpoint: "training.ckpt".into(),
            training_log: "training_log.jsonl".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Extra radius for the ORCA robot. Unset means 0.1 m with a visible
    /// robot and plain ORCA otherwise.
    pub orca_margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for demonstration collection and evaluation. Results
    /// are identical for any value; 1 avoids a thread pool entirely.
    pub threads: usize,
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub model: SarlConfig,
    pub eval: EvalConfig,
    pub baseline: BaselineConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 1,
            scenario: ScenarioConfig::default(),
            train: TrainConfig::default(),
            model: SarlConfig::sarl(),
            eval: EvalConfig::default(),
            baseline: BaselineConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.train.validate()?;
        self.model.validate()?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.eval.n_cases == 0 {
            return Err(Error::Config("eval.n_cases must be at least 1".into()));
        }
        if let Some(m) = self.baseline.orca_margin {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("baseline.orca_margin must be non-negative, got {m}")));
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths
            .output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// `path` if absolute, else under the output directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.output_dir().join(path)
        }
    }

    pub fn setting(&self) -> Setting {
        self.scenario.setting()
    }

    pub fn orca_margin(&self) -> f64 {
        self.baseline.orca_margin.unwrap_or(match self.setting() {
            Setting::Visible => 0.1,
            Setting::Invisible => 0.0,
        })
    }
}
