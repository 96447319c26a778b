//! Execution environment: one trading day of liquidating a parent sell order
//! across the venues of a [`MarketSim`], with every action routed through the
//! shield and recorded in an audit transcript.
//!
//! Step `k` covers the interval `[k*dt, (k+1)*dt)`. The agent's market view
//! is the book as it stood at `k*dt`, delivered one latency later, when the
//! decision is made. Orders reach the venue one further latency later and
//! any remainder is cancelled by the venue at the end of the interval, so the
//! unexecuted quantity is always known at the next decision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{EpisodeHeader, FillSummary, Transcript, TranscriptRecord};
use crate::book::{BookSnapshot, Fill, Side};
use crate::kernel::SimTime;
use crate::market::{MarketConfig, MarketSim};
use crate::scalar::round_half_even;
use crate::shield::{
    self, ComplianceMonitor, ConstraintSet, HaltDirective, LiveOrder, ShieldInputs, ViolationKind, ViolationReport,
};
use crate::stats::DailyResult;

/// Dollars per tick.
pub const TICK_VALUE: f64 = 0.01;

/// Number of features per venue in [`ExecState`].
pub const VENUE_FEATURES: usize = 9;

pub fn feature_len(venues: usize) -> usize {
    2 + VENUE_FEATURES * venues
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("parent order quantity must be positive")]
    ZeroQuantity,
    #[error("need at least one venue")]
    NoVenues,
    #[error("horizon * interval ({got} s) differs from the session length ({want} s)")]
    SessionMismatch { got: u64, want: u64 },
    #[error("liquidity weights must be non-negative, one per venue, and sum to 1")]
    BadWeights,
    #[error("action has {got} venues, expected {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("executed volume {volume} exceeds remaining {remaining}")]
    OversellAttempt { volume: u64, remaining: u64 },
    #[error("episode already finished")]
    EpisodeDone,
    #[error("episode still running")]
    EpisodeActive,
}

/// How the shield treats actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShieldMode {
    /// Execute the projected action.
    Project,
    /// Execute the raw action; reports are still produced.
    CheckOnly,
    /// Execute the raw action; no self-trade termination either (stress reference).
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    /// Parent order size in shares (sell).
    pub q0: u64,
    pub horizon: u32,
    pub interval: SimTime,
    /// One weight per venue, summing to 1.
    pub liquidity_weights: Vec<f64>,
    /// Volume estimate used for the first interval, per venue.
    pub volume_prior: u64,
    pub time_penalty: f64,
    pub violation_coef: f64,
    pub terminal_coef: f64,
    /// Charged when a self-trade is detected while projection is disabled.
    pub self_trade_penalty: f64,
}

impl EpisodeConfig {
    pub fn new(q0: u64, horizon: u32, interval: SimTime, venues: usize) -> Self {
        EpisodeConfig {
            q0,
            horizon,
            interval,
            liquidity_weights: vec![1.0 / venues.max(1) as f64; venues],
            volume_prior: 1_500,
            time_penalty: 0.001,
            violation_coef: 0.005,
            terminal_coef: 0.001,
            self_trade_penalty: 100.0,
        }
    }

    pub fn venues(&self) -> usize {
        self.liquidity_weights.len()
    }

    pub fn validate(&self, market: &MarketConfig) -> Result<(), EnvError> {
        if self.horizon == 0 {
            return Err(EnvError::ZeroHorizon);
        }
        if self.q0 == 0 {
            return Err(EnvError::ZeroQuantity);
        }
        if self.liquidity_weights.is_empty() {
            return Err(EnvError::NoVenues);
        }
        let total = self.interval.nanos() * self.horizon as u64;
        if total != market.session.nanos() || self.interval != market.interval {
            return Err(EnvError::SessionMismatch {
                got: total / SimTime::NANOS_PER_SEC,
                want: market.session.nanos() / SimTime::NANOS_PER_SEC,
            });
        }
        let sum: f64 = self.liquidity_weights.iter().sum();
        if self.liquidity_weights.len() != market.venues
            || self.liquidity_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(EnvError::BadWeights);
        }
        Ok(())
    }
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig::new(100_000, 390, SimTime::from_secs(60), 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VenueAction {
    pub volume: u64,
    pub price: i64,
}

/// One limit sell per venue.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecAction {
    pub venues: Vec<VenueAction>,
}

impl ExecAction {
    pub fn idle(venues: usize) -> Self {
        ExecAction { venues: vec![VenueAction { volume: 0, price: 1 }; venues] }
    }

    pub fn total_volume(&self) -> u64 {
        self.venues.iter().map(|a| a.volume).sum()
    }

    /// Trims volumes, last venue first, so the total is at most `remaining`;
    /// prices are clamped to at least one tick.
    pub fn clamp_to(&mut self, remaining: u64) {
        let mut excess = self.total_volume().saturating_sub(remaining);
        for a in self.venues.iter_mut().rev() {
            let cut = excess.min(a.volume);
            a.volume -= cut;
            excess -= cut;
        }
        for a in &mut self.venues {
            a.price = a.price.max(1);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub is_term: f64,
    pub violation_term: f64,
    pub terminal_term: f64,
    pub time_term: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.is_term + self.violation_term + self.terminal_term + self.time_term
    }

    fn add(&mut self, o: &RewardBreakdown) {
        self.is_term += o.is_term;
        self.violation_term += o.violation_term;
        self.terminal_term += o.terminal_term;
        self.time_term += o.time_term;
    }
}

/// Observation vector; see [`ExecutionEnv::observe`] for the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecState {
    pub features: Vec<f64>,
}

impl ExecState {
    pub fn remaining_frac(&self) -> f64 {
        self.features[0]
    }
    pub fn time_frac(&self) -> f64 {
        self.features[1]
    }
}

/// Everything a rule-based strategy may look at when deciding.
#[derive(Debug, Clone)]
pub struct DecisionContext<'a> {
    pub step: u32,
    pub horizon: u32,
    pub q0: u64,
    pub remaining: u64,
    pub p0: i64,
    pub snapshots: &'a [BookSnapshot],
    pub v_hat: &'a [u64],
    /// Static even-split schedule for this step, per venue.
    pub schedule: &'a [u64],
    /// Remaining quantity spread evenly over the remaining steps, per venue.
    pub adaptive_target: &'a [u64],
    pub liquidity_weights: &'a [f64],
}

/// Splits `q0` evenly over `horizon` steps and each step over venues by
/// `weights`. Remainders go to the earliest steps (and the first venues), so
/// all entries sum exactly to `q0`.
pub fn planner_schedule(q0: u64, horizon: u32, weights: &[f64]) -> Result<Vec<Vec<u64>>, EnvError> {
    if horizon == 0 {
        return Err(EnvError::ZeroHorizon);
    }
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(EnvError::BadWeights);
    }
    let h = horizon as u64;
    Ok((0..h)
        .map(|t| {
            let total = q0 / h + u64::from(t < q0 % h);
            split_by_weights(total, weights)
        })
        .collect())
}

/// Integer split of `total` proportional to `weights` (largest-remainder,
/// ties to the lower venue index).
pub fn split_by_weights(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if sum <= 0.0 {
        let mut out = vec![0; weights.len()];
        out[0] = total;
        return out;
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let mut left = total - out.iter().sum::<u64>().min(total);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// `1e4 * (avg_price - p0) / p0`; `None` when nothing was filled.
pub fn implementation_shortfall_bps(fills: &[Fill], p0: i64) -> Option<f64> {
    let qty: u64 = fills.iter().map(|f| f.qty).sum();
    if qty == 0 || p0 <= 0 {
        return None;
    }
    let notional: i128 = fills.iter().map(|f| f.qty as i128 * f.price as i128).sum();
    let avg = notional as f64 / qty as f64;
    Some(1e4 * (avg - p0 as f64) / p0 as f64)
}

/// Outcome of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: ExecState,
    pub reward: RewardBreakdown,
    pub fills: Vec<Fill>,
    pub done: bool,
    /// Reports from checking the raw action (drive the penalty term).
    pub raw_reports: Vec<ViolationReport>,
    /// Reports from checking the action that was actually sent.
    pub executed_reports: Vec<ViolationReport>,
    pub executed: ExecAction,
    pub halted: Option<HaltDirective>,
}

/// Deliberately corrupts the executed action at one step, to exercise the
/// monitor and kill switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultInjection {
    pub step: u32,
    pub venue: usize,
    pub extra_volume: u64,
}

pub struct ExecutionEnv {
    market_cfg: MarketConfig,
    cfg: EpisodeConfig,
    constraints: ConstraintSet,
    mode: ShieldMode,
    seed: u64,
    episode_id: u64,
    schedule: Vec<Vec<u64>>,
    sim: MarketSim,
    step: u32,
    remaining: u64,
    p0: i64,
    snapshots: Vec<BookSnapshot>,
    prev_mids: Vec<Option<f64>>,
    mid_returns: Vec<f64>,
    v_hat: Vec<u64>,
    adaptive: Vec<u64>,
    external_live: Vec<LiveOrder>,
    fault: Option<FaultInjection>,
    monitor: ComplianceMonitor,
    transcript: Transcript,
    fills: Vec<Fill>,
    reward: RewardBreakdown,
    executed_violations: u64,
    raw_violations: u64,
    violating_steps: u64,
    max_participation: f64,
    halted: Option<HaltDirective>,
    done: bool,
    shield_disabled_from: Option<u32>,
}

impl ExecutionEnv {
    pub fn new(
        market_cfg: &MarketConfig,
        cfg: &EpisodeConfig,
        constraints: ConstraintSet,
        mode: ShieldMode,
        seed: u64,
    ) -> Result<Self, EnvError> {
        cfg.validate(market_cfg)?;
        let schedule = planner_schedule(cfg.q0, cfg.horizon, &cfg.liquidity_weights)?;
        let m = market_cfg.venues;
        let header = EpisodeHeader::new(seed, seed, &constraints, m as u16, cfg.horizon);
        let mut env = ExecutionEnv {
            market_cfg: market_cfg.clone(),
            cfg: cfg.clone(),
            constraints,
            mode,
            seed,
            episode_id: seed,
            schedule,
            sim: MarketSim::new(market_cfg, seed),
            step: 0,
            remaining: cfg.q0,
            p0: 0,
            snapshots: Vec::new(),
            prev_mids: vec![None; m],
            mid_returns: vec![0.0; m],
            v_hat: vec![cfg.volume_prior; m],
            adaptive: vec![0; m],
            external_live: Vec::new(),
            fault: None,
            monitor: ComplianceMonitor::new(),
            transcript: Transcript::new(header),
            fills: Vec::new(),
            reward: RewardBreakdown::default(),
            executed_violations: 0,
            raw_violations: 0,
            violating_steps: 0,
            max_participation: 0.0,
            halted: None,
            done: false,
            shield_disabled_from: None,
        };
        env.begin();
        Ok(env)
    }

    /// Restarts the day with a new seed (same configuration).
    pub fn reset(&mut self, seed: u64) -> ExecState {
        let fresh = ExecutionEnv::new(&self.market_cfg, &self.cfg, self.constraints, self.mode, seed)
            .expect("configuration was validated at construction");
        let external = std::mem::take(&mut self.external_live);
        let fault = self.fault;
        let toggle = self.shield_disabled_from;
        *self = fresh;
        self.external_live = external;
        self.fault = fault;
        self.shield_disabled_from = toggle;
        self.observe()
    }

    fn begin(&mut self) {
        self.sim.run_until(SimTime::ZERO);
        self.take_snapshots(0);
        let mid = self.snapshots.iter().find_map(|s| s.mid()).unwrap_or(self.market_cfg.fundamental.x0);
        self.p0 = round_half_even(mid);
        self.sim.run_until(self.decision_time(0));
        self.update_adaptive();
    }

    fn decision_time(&self, step: u32) -> SimTime {
        let max_lat = (0..self.market_cfg.venues).map(|i| self.sim.exec_latency_ns(i)).max().unwrap_or(0);
        SimTime(self.cfg.interval.nanos() * step as u64 + max_lat)
    }

    fn take_snapshots(&mut self, step: u32) {
        let last = step.checked_sub(1).map(|s| s as usize);
        self.snapshots = (0..self.market_cfg.venues).map(|i| self.sim.snapshot(i, last)).collect();
        for (i, s) in self.snapshots.iter().enumerate() {
            let mid = s.mid();
            self.mid_returns[i] = match (self.prev_mids[i], mid) {
                (Some(a), Some(b)) if a > 0.0 => (b - a) / a,
                _ => 0.0,
            };
            if mid.is_some() {
                self.prev_mids[i] = mid;
            }
            if step > 0 {
                self.v_hat[i] = s.last_interval_volume;
            }
        }
    }

    fn update_adaptive(&mut self) {
        let left = (self.cfg.horizon - self.step.min(self.cfg.horizon)).max(1) as u64;
        let total = self.remaining.div_ceil(left);
        self.adaptive = split_by_weights(total, &self.cfg.liquidity_weights);
    }

    /// Adds a live order of the same beneficial owner (another desk), seen by
    /// the self-trade rule.
    pub fn add_external_live_order(&mut self, order: LiveOrder) {
        self.external_live.push(order);
    }

    pub fn set_fault(&mut self, fault: Option<FaultInjection>) {
        self.fault = fault;
    }

    /// Switches execution to the raw action from step `t` on, while checks
    /// keep logging.
    pub fn disable_shield_from(&mut self, t: Option<u32>) {
        self.shield_disabled_from = t;
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }
    pub fn market_config(&self) -> &MarketConfig {
        &self.market_cfg
    }
    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }
    pub fn mode(&self) -> ShieldMode {
        self.mode
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn step_index(&self) -> u32 {
        self.step
    }
    pub fn remaining(&self) -> u64 {
        self.remaining
    }
    pub fn p0(&self) -> i64 {
        self.p0
    }
    pub fn done(&self) -> bool {
        self.done
    }
    pub fn halted(&self) -> Option<&HaltDirective> {
        self.halted.as_ref()
    }
    pub fn fills(&self) -> &[Fill] {
        &self.fills
    }
    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
    pub fn market(&self) -> &MarketSim {
        &self.sim
    }
    /// Runs the background market to the close once the episode is over, so
    /// days that end early still cover the whole session.
    pub fn run_to_close(&mut self) -> Result<(), EnvError> {
        if !self.done {
            return Err(EnvError::EpisodeActive);
        }
        self.sim.cancel_all_exec();
        self.sim.run_until(self.market_cfg.session);
        Ok(())
    }
    pub fn total_reward(&self) -> RewardBreakdown {
        self.reward
    }
    pub fn schedule(&self) -> &[Vec<u64>] {
        &self.schedule
    }
    pub fn v_hat(&self) -> &[u64] {
        &self.v_hat
    }
    pub fn snapshots(&self) -> &[BookSnapshot] {
        &self.snapshots
    }
    pub fn adaptive_target(&self) -> &[u64] {
        &self.adaptive
    }

    pub fn context(&self) -> DecisionContext<'_> {
        let step = self.step.min(self.cfg.horizon - 1) as usize;
        DecisionContext {
            step: self.step,
            horizon: self.cfg.horizon,
            q0: self.cfg.q0,
            remaining: self.remaining,
            p0: self.p0,
            snapshots: &self.snapshots,
            v_hat: &self.v_hat,
            schedule: &self.schedule[step],
            adaptive_target: &self.adaptive,
            liquidity_weights: &self.cfg.liquidity_weights,
        }
    }

    /// Feature layout: `[remaining_frac, time_frac]`, then per venue
    /// `[bid/p0 - 1 (%), ask/p0 - 1 (%), spread/10, bid depth/1000,
    /// ask depth/1000, last-interval volume / prior, mid return (bps/10),
    /// target / even split, level-1 imbalance]`. Missing quotes read as 0.
    pub fn observe(&self) -> ExecState {
        let m = self.market_cfg.venues;
        let mut f = Vec::with_capacity(feature_len(m));
        f.push(self.remaining as f64 / self.cfg.q0 as f64);
        f.push(self.step as f64 / self.cfg.horizon as f64);
        let p0 = self.p0.max(1) as f64;
        let even = (self.cfg.q0 as f64 / self.cfg.horizon as f64).max(1.0);
        let prior = self.cfg.volume_prior.max(1) as f64;
        for (i, s) in self.snapshots.iter().enumerate() {
            let rel = |p: Option<i64>| p.map(|p| (p as f64 / p0 - 1.0) * 100.0).unwrap_or(0.0);
            f.push(rel(s.best_bid));
            f.push(rel(s.best_ask));
            f.push(s.spread().map(|x| x as f64 / 10.0).unwrap_or(0.0));
            f.push(s.bid_depth.iter().sum::<u64>() as f64 / 1000.0);
            f.push(s.ask_depth.iter().sum::<u64>() as f64 / 1000.0);
            f.push(self.v_hat[i] as f64 / prior);
            f.push(self.mid_returns[i] * 1e3);
            f.push(self.adaptive[i] as f64 / even);
            let (b1, a1) = (s.bid_depth[0] as f64, s.ask_depth[0] as f64);
            f.push(if b1 + a1 > 0.0 { (b1 - a1) / (b1 + a1) } else { 0.0 });
        }
        debug_assert!(f.iter().all(|x| x.is_finite()));
        ExecState { features: f }
    }

    fn live_orders(&self) -> Vec<LiveOrder> {
        let mut live = self.external_live.clone();
        live.extend(self.sim.exec_resting().into_iter().map(|(venue, _, side, price, qty)| LiveOrder {
            venue,
            side,
            price,
            qty,
        }));
        live
    }

    pub fn step(&mut self, raw: &ExecAction) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let m = self.market_cfg.venues;
        if raw.venues.len() != m {
            return Err(EnvError::ShapeMismatch { got: raw.venues.len(), want: m });
        }
        let mut raw = raw.clone();
        raw.clamp_to(self.remaining);

        let best_bids: Vec<Option<i64>> = self.snapshots.iter().map(|s| s.best_bid).collect();
        let live = self.live_orders();
        let inputs = ShieldInputs { step: self.step, v_hat: &self.v_hat, best_bids: &best_bids, live: &live };
        let (projected, raw_reports) = shield::project(&raw, &self.constraints, &inputs);
        let projecting = self.mode == ShieldMode::Project && self.shield_disabled_from.is_none_or(|t| self.step < t);
        let mut executed = if projecting { projected } else { raw.clone() };
        if let Some(f) = self.fault.filter(|f| f.step == self.step && f.venue < m) {
            executed.venues[f.venue].volume += f.extra_volume;
        }
        let executed_reports = shield::check(&executed, &self.constraints, &inputs);

        let mut reward = RewardBreakdown::default();
        let magnitude: u64 = raw_reports.iter().map(|r| r.magnitude).sum();
        reward.violation_term = -self.cfg.violation_coef * magnitude as f64;
        reward.time_term = -self.cfg.time_penalty * self.remaining as f64 / self.cfg.q0 as f64;
        self.raw_violations += raw_reports.len() as u64;

        let halt = if projecting { self.monitor.inspect(&executed, &self.constraints, &inputs) } else { None };
        let self_trade_unprojected = !projecting
            && self.mode == ShieldMode::CheckOnly
            && raw_reports.iter().any(|r| r.kind == ViolationKind::SelfTrade);

        let now_step = self.step;
        let mut step_fills = Vec::new();
        if halt.is_none() {
            let sent = executed.total_volume();
            if sent > self.remaining {
                return Err(EnvError::OversellAttempt { volume: sent, remaining: self.remaining });
            }
            self.executed_violations += executed_reports.len() as u64;
            self.violating_steps += u64::from(!executed_reports.is_empty());
            let expire = SimTime(self.cfg.interval.nanos() * (now_step as u64 + 1));
            for (i, a) in executed.venues.iter().enumerate() {
                if a.volume > 0 {
                    self.sim.submit_exec(i, Side::Sell, Some(a.price.max(1)), a.volume, Some(expire));
                }
            }
            self.sim.run_until(expire);
            step_fills = self.sim.take_exec_fills();
        } else {
            self.sim.cancel_all_exec();
        }

        let exec_trader = self.sim.exec_trader();
        let mut per_venue = vec![FillSummary::default(); m];
        for f in &step_fills {
            debug_assert_eq!(f.side_of(exec_trader), Some(Side::Sell));
            let s = &mut per_venue[f.venue as usize];
            s.qty += f.qty;
            s.notional += f.qty as i64 * f.price;
        }
        let filled: u64 = per_venue.iter().map(|s| s.qty).sum();
        self.remaining -= filled;
        let ticks: i64 = per_venue.iter().map(|s| s.notional - s.qty as i64 * self.p0).sum();
        reward.is_term = ticks as f64 * TICK_VALUE;
        for (i, s) in per_venue.iter().enumerate() {
            let vol = self.sim.venue(i).interval_volume(now_step as usize);
            if s.qty > 0 && vol > 0 {
                self.max_participation = self.max_participation.max(s.qty as f64 / vol as f64);
            }
        }

        let executed_self_cross: Vec<bool> = (0..m)
            .map(|i| executed_reports.iter().any(|r| r.venue as usize == i && r.kind == ViolationKind::SelfTrade))
            .collect();
        for i in 0..m {
            let rec = TranscriptRecord {
                step: now_step,
                venue: i as u16,
                raw_volume: raw.venues[i].volume,
                raw_price: raw.venues[i].price,
                exec_volume: if halt.is_some() { 0 } else { executed.venues[i].volume },
                exec_price: executed.venues[i].price,
                v_hat: self.v_hat[i],
                best_bid: best_bids[i],
                fill: per_venue[i],
                self_cross: executed_self_cross[i] && halt.is_none(),
                violations: raw_reports.iter().filter(|r| r.venue as usize == i).copied().collect(),
            };
            self.transcript.append(rec).expect("records are appended in step order");
        }

        self.step += 1;
        self.fills.extend_from_slice(&step_fills);
        let mut done = self.step >= self.cfg.horizon || self.remaining == 0;
        if let Some(h) = &halt {
            self.halted = Some(h.clone());
            done = true;
        }
        if self_trade_unprojected {
            reward.terminal_term -= self.cfg.self_trade_penalty;
            done = true;
        }
        if done {
            reward.terminal_term -= self.cfg.terminal_coef * self.remaining as f64;
            self.done = true;
        } else {
            self.take_snapshots(self.step);
            self.sim.run_until(self.decision_time(self.step));
            self.update_adaptive();
        }
        self.reward.add(&reward);
        Ok(StepOutcome {
            state: self.observe(),
            reward,
            fills: step_fills,
            done,
            raw_reports,
            executed_reports,
            executed,
            halted: halt,
        })
    }

    pub fn shares_filled(&self) -> u64 {
        self.cfg.q0 - self.remaining
    }

    pub fn is_bps(&self) -> Option<f64> {
        implementation_shortfall_bps(&self.fills, self.p0)
    }

    /// Per-day record. `violations` counts constraint breaches in the
    /// actions that were actually sent to the venues.
    pub fn daily_result(&self, strategy: &str) -> DailyResult {
        DailyResult {
            seed: self.seed,
            strategy: strategy.to_string(),
            is_bps: self.is_bps().unwrap_or(0.0),
            completed_pct: 100.0 * self.shares_filled() as f64 / self.cfg.q0 as f64,
            max_participation_pct: 100.0 * self.max_participation,
            violations: self.executed_violations,
            shares_filled: self.shares_filled(),
        }
    }

    /// Breaches found in raw actions (what the shield would have changed).
    pub fn raw_violations(&self) -> u64 {
        self.raw_violations
    }

    /// Fraction of decision steps taken whose submitted order breached a
    /// constraint on some venue.
    pub fn violating_step_rate(&self) -> f64 {
        if self.step == 0 {
            0.0
        } else {
            self.violating_steps as f64 / self.step as f64
        }
    }

    pub fn episode_id(&self) -> u64 {
        self.episode_id
    }
}

/// Maps per-venue controls to an order: volume `m_i` times the adaptive
/// target (rounded half to even), price `d_i` ticks from the best bid
/// (from the arrival price when the venue has no bid). The total is trimmed
/// to the remaining quantity.
pub fn controls_to_action(ctx: &DecisionContext<'_>, multipliers: &[f64], offsets: &[f64]) -> ExecAction {
    let venues = ctx
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let target = ctx.adaptive_target.get(i).copied().unwrap_or(0) as f64;
            let volume = round_half_even(multipliers[i].max(0.0) * target).max(0) as u64;
            let reference = s.best_bid.unwrap_or(ctx.p0);
            VenueAction { volume, price: (reference + round_half_even(offsets[i])).max(1) }
        })
        .collect();
    let mut a = ExecAction { venues };
    a.clamp_to(ctx.remaining);
    a
}
