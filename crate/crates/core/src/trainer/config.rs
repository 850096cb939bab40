//! Run configuration: one TOML document holding every tunable default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::agent::AgentConfig;
use crate::env::EnvConfig;
use crate::replay::PerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Prioritized replay prefilled with demonstrations.
    #[default]
    Proposed,
    /// Plain DDPG: uniform replay, no demonstrations.
    BaselineDdpg,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "baseline-ddpg" | "baseline" => Ok(Mode::BaselineDdpg),
            other => Err(format!("unknown mode `{other}` (expected proposed or baseline-ddpg)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Proposed => "proposed",
            Mode::BaselineDdpg => "baseline-ddpg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// World file path or built-in world name.
    pub world: String,
    pub mode: Mode,
    pub seed: u64,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_missions: usize,
    /// Base seed for evaluation placements; the same missions are reused at every evaluation.
    pub eval_seed: u64,
    pub metrics_window: usize,
    /// Demonstration file for proposed mode.
    pub demo_file: Option<PathBuf>,
    pub min_demos: usize,
    /// Live transitions collected before the first gradient step.
    pub learning_starts: usize,
    /// Stop once an evaluation reaches this success rate.
    pub stop_at_success: Option<f64>,
    /// Write a checkpoint at every evaluation (the final one is always written).
    pub checkpoint_every_eval: bool,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub replay: PerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: "env1_cluttered".into(),
            mode: Mode::Proposed,
            seed: 0,
            total_steps: 100_000,
            eval_interval: 2500,
            eval_missions: 20,
            eval_seed: 1_000_003,
            metrics_window: 4000,
            demo_file: None,
            min_demos: 1000,
            learning_starts: 64,
            stop_at_success: None,
            checkpoint_every_eval: true,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            replay: PerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainerError> {
        toml::from_str(text).map_err(|e| TrainerError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config always encodes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TrainerError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The configuration actually run: baseline mode forces uniform replay
    /// and drops demonstrations.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        if c.mode == Mode::BaselineDdpg {
            c.replay.alpha = 0.0;
            c.replay.eps_demo = 0.0;
            c.demo_file = None;
        }
        c
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        self.validate_params()?;
        if self.mode == Mode::Proposed && self.demo_file.is_none() {
            return Err(TrainerError::Config("proposed mode needs a demo_file".into()));
        }
        Ok(())
    }

    /// Checks every numeric setting; does not require a demo source.
    pub fn validate_params(&self) -> Result<(), TrainerError> {
        self.env.validate()?;
        self.agent.validate()?;
        self.replay.validate()?;
        if self.eval_interval == 0 || self.eval_missions == 0 || self.metrics_window == 0 {
            return Err(TrainerError::Config("eval_interval, eval_missions and metrics_window must be positive".into()));
        }
        if let Some(s) = self.stop_at_success {
            if !(0.0..=1.0).contains(&s) {
                return Err(TrainerError::Config("stop_at_success must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_keeps_every_field() {
        let mut c = RunConfig { demo_file: Some("demos.jsonl".into()), stop_at_success: Some(0.9), ..RunConfig::default() };
        c.agent.network.hidden = 128;
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = RunConfig::from_toml("seed = 7\n[agent]\nbatch_size = 32\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.agent.batch_size, 32);
        assert_eq!(c.agent.gamma, 0.99);
        assert_eq!(c.metrics_window, 4000);
        assert!(RunConfig::from_toml("no_such_key = 1").is_err());
    }

    #[test]
    fn baseline_forces_uniform_replay() {
        let c = RunConfig { mode: Mode::BaselineDdpg, demo_file: Some("x".into()), ..RunConfig::default() }.effective();
        assert_eq!((c.replay.alpha, c.replay.eps_demo, c.demo_file.clone()), (0.0, 0.0, None));
        assert!(c.validate().is_ok());
        assert!(RunConfig::default().validate().is_err());
    }
}
