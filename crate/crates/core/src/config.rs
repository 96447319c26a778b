//! Scenario files: every parameter of an experiment in one TOML document.
//!
//! Sections are optional and default to the built-in scenario; unknown keys
//! anywhere are errors. `docs/scenario.md` lists every key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentPopulation, FundamentalOu, MarketMakerParams, MomentumParams, NoiseParams, ValueParams};
use crate::audit::ProofMode;
use crate::baselines::StrategyKind;
use crate::env::{EpisodeConfig, ShieldMode};
use crate::kernel::{mix_seed, SimTime};
use crate::market::MarketConfig;
use crate::ppo::PpoConfig;
use crate::shield::ConstraintSet;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub venues: usize,
    /// Decision and accounting interval.
    pub interval_secs: u64,
    pub session_minutes: u64,
    /// One-way message latency between any two agents.
    pub latency_ms: u64,
    pub fundamental_step_secs: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            venues: 2,
            interval_secs: 60,
            session_minutes: 390,
            latency_ms: 50,
            fundamental_step_secs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    pub q0: u64,
    /// Number of decision steps; `horizon * interval_secs` must equal the session.
    pub horizon: u32,
    /// Per-venue planner weights; equal split when omitted.
    pub liquidity_weights: Option<Vec<f64>>,
    pub volume_prior: u64,
    pub time_penalty: f64,
    pub violation_coef: f64,
    pub terminal_coef: f64,
    pub self_trade_penalty: f64,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        let e = EpisodeConfig::default();
        EpisodeSection {
            q0: e.q0,
            horizon: e.horizon,
            liquidity_weights: None,
            volume_prior: e.volume_prior,
            time_penalty: e.time_penalty,
            violation_coef: e.violation_coef,
            terminal_coef: e.terminal_coef,
            self_trade_penalty: e.self_trade_penalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switch {
    On,
    Off,
}

/// Shield handling override. `check` executes raw actions and only reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSetting {
    /// Each strategy uses its own mode (projection for the shielded ones).
    Auto,
    Project,
    Check,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShieldSection {
    pub alpha: f64,
    pub beta: f64,
    pub self_trade_guard: Switch,
    pub mode: ModeSetting,
}

impl Default for ShieldSection {
    fn default() -> Self {
        ShieldSection { alpha: 0.10, beta: 0.005, self_trade_guard: Switch::On, mode: ModeSetting::Auto }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofSetting {
    Open,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub master_seed: u64,
    pub days: usize,
    pub strategies: Vec<String>,
    /// Worker threads; 0 uses one per core.
    pub parallel: usize,
    pub out_dir: PathBuf,
    /// Learned-policy checkpoint for RL_SAFE; `out_dir/policy_safe.ckpt` when absent.
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint for RL_UNCONSTRAINED.
    pub checkpoint_unconstrained: Option<PathBuf>,
    pub proof: ProofSetting,
    /// Step at which the shield_toggle stress test stops projecting.
    pub toggle_step: u32,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            master_seed: 42,
            days: 100,
            strategies: StrategyKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            parallel: 0,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            checkpoint_unconstrained: None,
            proof: ProofSetting::Open,
            toggle_step: 195,
        }
    }
}

/// The file form of a scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub simulation: SimulationSection,
    pub fundamental: FundamentalOu<f64>,
    pub population: AgentPopulation,
    pub market_maker: MarketMakerParams,
    pub noise: NoiseParams,
    pub momentum: MomentumParams,
    pub value: ValueParams,
    pub episode: EpisodeSection,
    pub shield: ShieldSection,
    pub ppo: PpoConfig,
    pub run: RunSection,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks cross-field consistency and builds the runtime objects.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let s = &self.simulation;
        if s.venues == 0 || s.venues > u16::MAX as usize {
            return Err(invalid("simulation.venues must be between 1 and 65535"));
        }
        if s.interval_secs == 0 || s.fundamental_step_secs == 0 || s.session_minutes == 0 {
            return Err(invalid("simulation intervals must be positive"));
        }
        let f = &self.fundamental;
        if !(f.kappa >= 0.0 && f.sigma >= 0.0 && f.mu > 0.0 && f.x0 > 0.0) {
            return Err(invalid("fundamental: kappa and sigma must be non-negative, mu and x0 positive"));
        }
        if self.noise.min_size == 0 || self.noise.min_size > self.noise.max_size {
            return Err(invalid("noise: need 1 <= min_size <= max_size"));
        }
        let market = MarketConfig {
            venues: s.venues,
            interval: SimTime::from_secs(s.interval_secs),
            session: SimTime::from_minutes(s.session_minutes),
            latency_ns: s.latency_ms * 1_000_000,
            fundamental_step: SimTime::from_secs(s.fundamental_step_secs),
            fundamental: self.fundamental,
            population: self.population,
            market_maker: self.market_maker,
            noise: self.noise,
            momentum: self.momentum,
            value: self.value,
        };
        let e = &self.episode;
        let mut episode = EpisodeConfig::new(e.q0, e.horizon, market.interval, s.venues);
        if let Some(w) = &e.liquidity_weights {
            episode.liquidity_weights = w.clone();
        }
        episode.volume_prior = e.volume_prior;
        episode.time_penalty = e.time_penalty;
        episode.violation_coef = e.violation_coef;
        episode.terminal_coef = e.terminal_coef;
        episode.self_trade_penalty = e.self_trade_penalty;
        episode.validate(&market).map_err(|err| invalid(format!("episode: {err}")))?;

        let constraints =
            ConstraintSet::new(self.shield.alpha, self.shield.beta, self.shield.self_trade_guard == Switch::On)
                .map_err(|err| invalid(format!("shield: {err}")))?;
        let mode_override = match self.shield.mode {
            ModeSetting::Auto => None,
            ModeSetting::Project => Some(ShieldMode::Project),
            ModeSetting::Check => Some(ShieldMode::CheckOnly),
            ModeSetting::Off => Some(ShieldMode::Off),
        };
        self.ppo.validate().map_err(|err| invalid(format!("ppo: {err}")))?;
        let strategies = self
            .run
            .strategies
            .iter()
            .map(|n| n.parse::<StrategyKind>().map_err(|err| invalid(format!("run.strategies: {err}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if self.run.toggle_step >= e.horizon {
            return Err(invalid("run.toggle_step must be inside the horizon"));
        }
        Ok(Scenario {
            market,
            episode,
            constraints,
            mode_override,
            ppo: self.ppo.clone(),
            strategies,
            master_seed: self.run.master_seed,
            days: self.run.days,
            parallel: self.run.parallel,
            out_dir: self.run.out_dir.clone(),
            checkpoint: self.run.checkpoint.clone(),
            checkpoint_unconstrained: self.run.checkpoint_unconstrained.clone(),
            proof: match self.run.proof {
                ProofSetting::Open => ProofMode::Open,
                ProofSetting::Mock => ProofMode::Mock,
            },
            toggle_step: self.run.toggle_step,
        })
    }
}

/// A validated scenario ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub market: MarketConfig,
    pub episode: EpisodeConfig,
    pub constraints: ConstraintSet,
    pub mode_override: Option<ShieldMode>,
    pub ppo: PpoConfig,
    pub strategies: Vec<StrategyKind>,
    pub master_seed: u64,
    pub days: usize,
    pub parallel: usize,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_unconstrained: Option<PathBuf>,
    pub proof: ProofMode,
    pub toggle_step: u32,
}

/// Stream tags separating evaluation days from training episodes.
const EVAL_STREAM: u64 = 0x4556_414c << 32;
const TRAIN_STREAM: u64 = 0x5452_4149 << 32;

impl Default for Scenario {
    fn default() -> Self {
        ScenarioConfig::default().build().expect("default scenario is valid")
    }
}

impl Scenario {
    /// Seed of evaluation day `d`; every strategy runs on the same list.
    pub fn day_seed(&self, d: usize) -> u64 {
        mix_seed(self.master_seed, EVAL_STREAM | d as u64)
    }

    pub fn day_seeds(&self, days: usize) -> Vec<u64> {
        (0..days).map(|d| self.day_seed(d)).collect()
    }

    /// Master seed of a training run for the given shield mode.
    pub fn train_seed(&self, mode: ShieldMode) -> u64 {
        let tag = match mode {
            ShieldMode::Project => 0,
            ShieldMode::CheckOnly => 1,
            ShieldMode::Off => 2,
        };
        mix_seed(self.master_seed, TRAIN_STREAM | tag)
    }

    pub fn mode_for(&self, kind: StrategyKind) -> ShieldMode {
        self.mode_override.unwrap_or(kind.shield_mode())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default_scenario() {
        let s = ScenarioConfig::from_toml("").unwrap().build().unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(s.market, MarketConfig::default());
        assert_eq!(s.episode, EpisodeConfig::default());
        assert_eq!(s.constraints, ConstraintSet::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(ScenarioConfig::from_toml("[shield]\nalpah = 0.2\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(ScenarioConfig::from_toml("[nosuch]\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(ScenarioConfig::from_toml("[noise]\np_markt = 0.1\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ScenarioConfig::default();
        c.shield.alpha = 0.3;
        c.shield.mode = ModeSetting::Check;
        c.run.strategies = vec!["TWAP".into()];
        let back = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn cross_field_errors() {
        let bad = |t: &str| matches!(ScenarioConfig::from_toml(t).unwrap().build(), Err(ConfigError::Invalid(_)));
        assert!(bad("[episode]\nhorizon = 100\n"));
        assert!(bad("[shield]\nalpha = 0.0\n"));
        assert!(bad("[episode]\nliquidity_weights = [0.7, 0.7]\n"));
        assert!(bad("[run]\nstrategies = [\"MOON\"]\n"));
        assert!(bad("[ppo]\ngamma = 1.5\n"));
    }

    #[test]
    fn overrides_apply() {
        let s = ScenarioConfig::from_toml("[simulation]\nlatency_ms = 500\n[shield]\nalpha = 0.05\nmode = \"check\"\n")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(s.market.latency_ns, 500_000_000);
        assert_eq!(s.constraints.alpha_ppm(), 50_000);
        assert_eq!(s.mode_for(StrategyKind::Twap), ShieldMode::CheckOnly);
    }

    #[test]
    fn day_seeds_distinct_from_training() {
        let s = Scenario::default();
        let days = s.day_seeds(100);
        let mut sorted = days.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert!(!days.contains(&s.train_seed(ShieldMode::Project)));
    }
}
