use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::contraction::ContractionConfig;
use super::sweep::SweepSpec;
use crate::agents::{CemConfig, TrainConfig};
use crate::envs::{TaskConfig, WrapperConfig};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// DQN over a uniform action grid.
    #[default]
    Dqn,
    /// Continuous-action Q-learning with CEM.
    CemQl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub episodes: usize,
    /// Checkpoint to load when none is given on the command line.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            episodes: 20,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub episodes: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { episodes: 20 }
    }
}

/// Everything a run needs, read from one TOML file. Every section is
/// optional and falls back to its defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub agent: AgentKind,
    pub n_action_bins: Option<usize>,
    pub task: TaskConfig,
    pub wrapper: WrapperConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub cem: CemConfig,
    pub evaluate: EvaluateConfig,
    pub sweep: SweepSpec,
    pub contraction: ContractionConfig,
    pub bench: BenchConfig,
}

impl Config {
    pub const DEFAULT_BINS: usize = 5;

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn bins(&self) -> usize {
        self.n_action_bins.unwrap_or(Self::DEFAULT_BINS)
    }

    /// Hash of the settings a sweep holds fixed across cells. Stored beside
    /// sweep output so a resume against a different base is refused.
    pub fn base_fingerprint(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Base<'a> {
            agent: AgentKind,
            task: &'a TaskConfig,
            wrapper: &'a WrapperConfig,
            train: &'a TrainConfig,
            cem: &'a CemConfig,
            latency_set_ms: &'a [f64],
        }
        let base = Base {
            agent: self.agent,
            task: &self.task,
            wrapper: &self.wrapper,
            train: &self.train,
            cem: &self.cem,
            latency_set_ms: &self.sweep.latency_set_ms,
        };
        let text = toml::to_string(&base).map_err(|e| Error::Config(e.to_string()))?;
        Ok(hex(&Sha256::digest(text.as_bytes())))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ExecutionMode, LatencySchedule};

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = Config::from_toml(
            r#"
            agent = "cem_ql"
            n_action_bins = 7

            [task]
            name = "pointmass"
            goal_radius = 0.05

            [wrapper]
            execution_mode = "blocking"
            latency_schedule = { kind = "per_episode", set = [0.0, 0.025, 0.05] }

            [features]
            use_vtg = true
            n_stack_states = 2

            [train]
            episodes = 10
            hidden = [16]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.agent, AgentKind::CemQl);
        assert_eq!(cfg.bins(), 7);
        match cfg.task {
            TaskConfig::Pointmass(p) => assert_eq!(p.goal_radius, 0.05),
            other => panic!("wrong task {other:?}"),
        }
        assert_eq!(cfg.wrapper.execution_mode, ExecutionMode::Blocking);
        assert_eq!(
            cfg.wrapper.latency_schedule,
            LatencySchedule::PerEpisode {
                set: vec![0.0, 0.025, 0.05]
            }
        );
        assert!(cfg.features.use_vtg);
        assert_eq!(cfg.train.hidden, vec![16]);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            Config::from_toml("epsiodes = 3"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::default();
        assert_eq!(Config::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn fingerprint_tracks_base_settings() {
        let a = Config::default();
        let mut b = a.clone();
        b.sweep.seeds = vec![9];
        assert_eq!(a.base_fingerprint().unwrap(), b.base_fingerprint().unwrap());
        b.train.episodes += 1;
        assert_ne!(a.base_fingerprint().unwrap(), b.base_fingerprint().unwrap());
    }
}
