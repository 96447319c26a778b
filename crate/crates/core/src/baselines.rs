//! Rule-based execution strategies and the common policy interface.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::agents::u_profile_mass;
use crate::env::{
    controls_to_action, split_by_weights, DecisionContext, ExecAction, ExecState, ShieldMode, VenueAction,
};
use crate::kernel::RngStream;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("volume profile has {got} steps, expected {want}")]
    ProfileMismatch { got: usize, want: usize },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("volume profile weights must be non-negative and sum to 1")]
    BadProfile,
}

/// Anything that turns an observation into an order each step.
pub trait ExecutionPolicy {
    fn act(&mut self, ctx: &DecisionContext<'_>, state: &ExecState) -> ExecAction;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Twap,
    Vwap,
    Greedy,
    RlSafe,
    RlUnconstrained,
    Random,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Twap,
        StrategyKind::Vwap,
        StrategyKind::Greedy,
        StrategyKind::RlSafe,
        StrategyKind::RlUnconstrained,
        StrategyKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Twap => "TWAP",
            StrategyKind::Vwap => "VWAP",
            StrategyKind::Greedy => "GREEDY",
            StrategyKind::RlSafe => "RL_SAFE",
            StrategyKind::RlUnconstrained => "RL_UNCONSTRAINED",
            StrategyKind::Random => "RANDOM",
        }
    }

    /// Shield handling used when this strategy is evaluated.
    pub fn shield_mode(self) -> ShieldMode {
        match self {
            StrategyKind::Twap | StrategyKind::Vwap | StrategyKind::RlSafe | StrategyKind::Random => {
                ShieldMode::Project
            }
            StrategyKind::RlUnconstrained => ShieldMode::CheckOnly,
            StrategyKind::Greedy => ShieldMode::Off,
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, StrategyKind::RlSafe | StrategyKind::RlUnconstrained)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = BaselineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "RL" && *k == StrategyKind::RlSafe))
            .ok_or_else(|| BaselineError::UnknownStrategy(s.to_string()))
    }
}

/// Per-step expected market volume weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeProfile {
    weights: Vec<f64>,
}

impl VolumeProfile {
    pub fn new(weights: Vec<f64>) -> Result<Self, BaselineError> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(BaselineError::BadProfile);
        }
        Ok(VolumeProfile { weights })
    }

    pub fn uniform(horizon: u32) -> Self {
        VolumeProfile { weights: vec![1.0 / horizon as f64; horizon as usize] }
    }

    /// Mass of the background U-shaped intensity over each step.
    pub fn u_shaped(horizon: u32, curvature: f64) -> Self {
        let h = horizon as f64;
        let weights =
            (0..horizon).map(|t| u_profile_mass(t as f64 / h, (t + 1) as f64 / h, curvature)).collect::<Vec<_>>();
        let sum: f64 = weights.iter().sum();
        VolumeProfile { weights: weights.into_iter().map(|w| w / sum).collect() }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integer schedule summing exactly to `q0`: each step gets
    /// `floor(q0 * w)`, and the shortfall is handed out one share per step
    /// from the start of the day.
    pub fn schedule(&self, q0: u64) -> Vec<u64> {
        let mut out: Vec<u64> = self.weights.iter().map(|w| (q0 as f64 * w).floor() as u64).collect();
        let assigned: u64 = out.iter().sum();
        if assigned > q0 {
            // Only reachable through float rounding on weights summing to 1.
            let mut over = assigned - q0;
            for x in out.iter_mut().rev() {
                let cut = over.min(*x);
                *x -= cut;
                over -= cut;
            }
        }
        let mut left = q0 - out.iter().sum::<u64>();
        let n = out.len();
        let mut t = 0;
        while left > 0 {
            out[t % n] += 1;
            left -= 1;
            t += 1;
        }
        out
    }
}

/// Schedule follower: trades this step's scheduled amount plus any
/// shortfall against the cumulative schedule, split by liquidity weights,
/// priced at the best bid.
#[derive(Debug, Clone)]
pub struct ScheduleFollower {
    cumulative: Vec<u64>,
}

impl ScheduleFollower {
    pub fn from_schedule(per_step: &[u64]) -> Self {
        let mut acc = 0;
        ScheduleFollower {
            cumulative: per_step
                .iter()
                .map(|&x| {
                    acc += x;
                    acc
                })
                .collect(),
        }
    }

    pub fn twap(q0: u64, horizon: u32) -> Self {
        let h = horizon as u64;
        let per: Vec<u64> = (0..h).map(|t| q0 / h + u64::from(t < q0 % h)).collect();
        Self::from_schedule(&per)
    }

    pub fn vwap(q0: u64, profile: &VolumeProfile, horizon: u32) -> Result<Self, BaselineError> {
        if profile.len() != horizon as usize {
            return Err(BaselineError::ProfileMismatch { got: profile.len(), want: horizon as usize });
        }
        Ok(Self::from_schedule(&profile.schedule(q0)))
    }

    pub fn cumulative(&self) -> &[u64] {
        &self.cumulative
    }

    pub fn target_total(&self, ctx: &DecisionContext<'_>) -> u64 {
        let due = self.cumulative.get(ctx.step as usize).copied().unwrap_or(ctx.q0);
        let done = ctx.q0 - ctx.remaining;
        due.saturating_sub(done).min(ctx.remaining)
    }
}

impl ExecutionPolicy for ScheduleFollower {
    fn act(&mut self, ctx: &DecisionContext<'_>, _state: &ExecState) -> ExecAction {
        let split = split_by_weights(self.target_total(ctx), ctx.liquidity_weights);
        let venues = split
            .iter()
            .zip(ctx.snapshots)
            .map(|(&volume, s)| VenueAction { volume, price: s.best_bid.unwrap_or(ctx.p0).max(1) })
            .collect();
        ExecAction { venues }
    }
}

/// Sells everything remaining every step, split by visible bid depth, at a
/// deep limit below the best bid.
#[derive(Debug, Clone, Copy)]
pub struct Greedy {
    pub depth_ticks: i64,
}

impl Default for Greedy {
    fn default() -> Self {
        Greedy { depth_ticks: 20 }
    }
}

impl ExecutionPolicy for Greedy {
    fn act(&mut self, ctx: &DecisionContext<'_>, _state: &ExecState) -> ExecAction {
        let depth: Vec<f64> = ctx.snapshots.iter().map(|s| s.bid_depth.iter().sum::<u64>() as f64).collect();
        let total: f64 = depth.iter().sum();
        let weights: Vec<f64> =
            if total > 0.0 { depth.iter().map(|d| d / total).collect() } else { ctx.liquidity_weights.to_vec() };
        let split = split_by_weights(ctx.remaining, &weights);
        let venues = split
            .iter()
            .zip(ctx.snapshots)
            .map(|(&volume, s)| VenueAction { volume, price: (s.best_bid.unwrap_or(ctx.p0) - self.depth_ticks).max(1) })
            .collect();
        ExecAction { venues }
    }
}

/// Uniform random controls in the same space the learned policy uses.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: RngStream,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { rng: RngStream::new(seed) }
    }
}

impl ExecutionPolicy for RandomPolicy {
    fn act(&mut self, ctx: &DecisionContext<'_>, _state: &ExecState) -> ExecAction {
        let m = ctx.snapshots.len();
        let mut mult = Vec::with_capacity(m);
        let mut off = Vec::with_capacity(m);
        for _ in 0..m {
            mult.push(2.0 * self.rng.uniform());
            off.push(40.0 * self.rng.uniform() - 20.0);
        }
        controls_to_action(ctx, &mult, &off)
    }
}

/// Runs `policy` until the episode ends.
pub fn run_episode(
    env: &mut crate::env::ExecutionEnv,
    policy: &mut dyn ExecutionPolicy,
) -> Result<(), crate::env::EnvError> {
    let mut state = env.observe();
    while !env.done() {
        let action = policy.act(&env.context(), &state);
        state = env.step(&action)?.state;
    }
    Ok(())
}
