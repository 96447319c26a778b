//! Background trader ecology: the fundamental value process and the decision
//! rules of market makers, noise, momentum and value traders.
//!
//! The functions here are pure decision rules; wiring them to the kernel
//! happens in [`crate::market`]. Every rule consumes a fixed number of random
//! draws per call regardless of market state, so two runs that share a seed
//! keep their background random streams aligned even when the execution
//! agent trades differently.

use serde::{Deserialize, Serialize};

use crate::book::Side;
use crate::kernel::{RngStream, SimTime};
use crate::scalar::{round_half_even, Real};

/// Ornstein-Uhlenbeck fundamental value, in ticks. Shared by all venues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FundamentalOu<T = f64> {
    /// Mean-reversion rate, 1/s.
    pub kappa: T,
    /// Long-run mean, ticks.
    pub mu: T,
    /// Volatility, ticks/sqrt(s).
    pub sigma: T,
    /// Initial value, ticks.
    pub x0: T,
}

impl Default for FundamentalOu<f64> {
    fn default() -> Self {
        FundamentalOu { kappa: 1.67e-4, mu: 10_000.0, sigma: 0.5, x0: 10_000.0 }
    }
}

/// One Euler step: `x + kappa (mu - x) dt + sigma sqrt(dt) eps`.
pub fn ou_step<T: Real>(x: T, dt: T, params: &FundamentalOu<T>, rng: &mut RngStream) -> T {
    debug_assert!(dt > T::zero());
    let eps = T::lit(rng.standard_normal());
    x + params.kappa * (params.mu - x) * dt + params.sigma * dt.sqrt() * eps
}

/// Closed-form mean and variance of the exact OU process at time `t`.
pub fn ou_moments<T: Real>(params: &FundamentalOu<T>, t: T) -> (T, T) {
    let two = T::lit(2.0);
    let decay = (-params.kappa * t).libm_exp();
    let mean = params.mu + (params.x0 - params.mu) * decay;
    let var = if params.kappa == T::zero() {
        params.sigma * params.sigma * t
    } else {
        params.sigma * params.sigma / (two * params.kappa) * (T::one() - (-two * params.kappa * t).libm_exp())
    };
    (mean, var)
}

/// Pre-generated fundamental path on a fixed grid. Values are carried as
/// reals; quotes use the value rounded to the nearest tick.
#[derive(Debug, Clone)]
pub struct FundamentalPath {
    step_ns: u64,
    values: Vec<f64>,
}

impl FundamentalPath {
    pub fn generate(params: &FundamentalOu<f64>, horizon: SimTime, step: SimTime, rng: &mut RngStream) -> Self {
        let step_ns = step.nanos().max(1);
        let n = (horizon.nanos() / step_ns) as usize + 1;
        let dt = step_ns as f64 / SimTime::NANOS_PER_SEC as f64;
        let mut values = Vec::with_capacity(n);
        let mut x = params.x0;
        values.push(x);
        for _ in 1..n {
            x = ou_step(x, dt, params, rng);
            values.push(x);
        }
        FundamentalPath { step_ns, values }
    }

    /// Value at the last grid point at or before `t`.
    pub fn value_at(&self, t: SimTime) -> f64 {
        let i = ((t.nanos() / self.step_ns) as usize).min(self.values.len() - 1);
        self.values[i]
    }

    pub fn tick_at(&self, t: SimTime) -> i64 {
        round_half_even(self.value_at(t))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentPopulation {
    pub n_market_makers: u32,
    pub n_noise: u32,
    pub n_momentum: u32,
    pub n_value: u32,
}

impl Default for AgentPopulation {
    fn default() -> Self {
        AgentPopulation { n_market_makers: 2, n_noise: 1000, n_momentum: 10, n_value: 100 }
    }
}

impl AgentPopulation {
    /// Thin-market variant: market makers and noise traders halved.
    pub fn halved_liquidity(self) -> Self {
        AgentPopulation { n_market_makers: (self.n_market_makers / 2).max(1), n_noise: self.n_noise / 2, ..self }
    }
}

/// An order decided by a background rule; the caller assigns ids and venue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderIntent {
    pub side: Side,
    /// `None` for a market order.
    pub price: Option<i64>,
    pub qty: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketMakerParams {
    pub half_spread_ticks: i64,
    /// Quote shift per share of inventory, ticks.
    pub skew_ticks_per_share: f64,
    pub levels: u32,
    pub level_size: u64,
    pub requote_ms: u64,
}

impl Default for MarketMakerParams {
    fn default() -> Self {
        MarketMakerParams {
            half_spread_ticks: 1,
            skew_ticks_per_share: 5e-4,
            levels: 5,
            level_size: 300,
            requote_ms: 1_000,
        }
    }
}

/// Quote ladder around the inventory-skewed fundamental. Level 0 bid sits at
/// `fundamental - half_spread - skew * inventory`, ask at
/// `fundamental + half_spread - skew * inventory`; deeper levels step one tick away.
pub fn market_maker_act(fundamental: f64, inventory: i64, params: &MarketMakerParams) -> Vec<OrderIntent> {
    let center = round_half_even(fundamental - params.skew_ticks_per_share * inventory as f64);
    let mut out = Vec::with_capacity(2 * params.levels as usize);
    for k in 0..params.levels as i64 {
        let bid = center - params.half_spread_ticks - k;
        if bid >= 1 {
            out.push(OrderIntent { side: Side::Buy, price: Some(bid), qty: params.level_size });
        }
        out.push(OrderIntent {
            side: Side::Sell,
            price: Some(center + params.half_spread_ticks + k),
            qty: params.level_size,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Probability an order is a market order.
    pub p_market: f64,
    /// Limit orders are placed within this many ticks of the same-side touch.
    pub limit_range_ticks: i64,
    pub min_size: u64,
    pub max_size: u64,
    /// Expected shares submitted per day by the whole noise population.
    pub daily_volume: f64,
    /// Curvature of the intraday U-profile; 0 is flat.
    pub u_curvature: f64,
    /// Resting noise limit orders are cancelled after this long.
    pub order_lifetime_secs: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            p_market: 0.5,
            limit_range_ticks: 4,
            min_size: 1,
            max_size: 100,
            daily_volume: 2.0e6,
            u_curvature: 1.5,
            order_lifetime_secs: 300,
        }
    }
}

impl NoiseParams {
    pub fn mean_size(&self) -> f64 {
        (self.min_size + self.max_size) as f64 / 2.0
    }
}

/// Intraday intensity shape on `[0, 1]`, normalised to integrate to one:
/// `(1 + c (2u - 1)^2) / (1 + c / 3)`.
pub fn u_profile(frac: f64, curvature: f64) -> f64 {
    let x = 2.0 * frac.clamp(0.0, 1.0) - 1.0;
    (1.0 + curvature * x * x) / (1.0 + curvature / 3.0)
}

/// Integral of [`u_profile`] over `[a, b]`.
pub fn u_profile_mass(a: f64, b: f64, curvature: f64) -> f64 {
    let prim = |u: f64| {
        let x = 2.0 * u - 1.0;
        (u + curvature * x * x * x / 6.0) / (1.0 + curvature / 3.0)
    };
    prim(b.clamp(0.0, 1.0)) - prim(a.clamp(0.0, 1.0))
}

/// Order arrival rate of a single noise trader at session fraction `frac`, per second.
pub fn noise_rate(frac: f64, params: &NoiseParams, n_agents: u32, session_secs: f64) -> f64 {
    if n_agents == 0 {
        return 0.0;
    }
    let total_orders = params.daily_volume / params.mean_size();
    total_orders / session_secs / n_agents as f64 * u_profile(frac, params.u_curvature)
}

/// Next arrival of a non-homogeneous Poisson process by thinning. Draws are
/// taken in pairs; returns `None` once past `session_end`.
pub fn noise_next_wakeup(
    now: SimTime,
    session_end: SimTime,
    params: &NoiseParams,
    n_agents: u32,
    rng: &mut RngStream,
) -> Option<SimTime> {
    let session_secs = session_end.as_secs_f64();
    let peak = noise_rate(0.0, params, n_agents, session_secs).max(noise_rate(0.5, params, n_agents, session_secs));
    if peak <= 0.0 {
        return None;
    }
    let mut t = now.as_secs_f64();
    loop {
        t += rng.exponential(peak);
        let accept = rng.uniform();
        if t >= session_secs {
            return None;
        }
        if accept * peak <= noise_rate(t / session_secs, params, n_agents, session_secs) {
            let ns = (t * SimTime::NANOS_PER_SEC as f64) as u64;
            return Some(SimTime(ns.max(now.nanos() + 1)));
        }
    }
}

/// Best bid / ask as seen by an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Touch {
    pub bid: Option<i64>,
    pub ask: Option<i64>,
}

impl Touch {
    pub fn mid(&self) -> Option<f64> {
        match (self.bid, self.ask) {
            (Some(b), Some(a)) => Some((a + b) as f64 / 2.0),
            _ => None,
        }
    }
}

/// A random small order. Side is a fair coin; market with probability
/// `p_market`, otherwise a limit within `limit_range_ticks` of the same-side
/// touch (the opposite touch if the same side is empty).
pub fn noise_act(touch: Touch, params: &NoiseParams, rng: &mut RngStream) -> Option<OrderIntent> {
    let side = if rng.bernoulli(0.5) { Side::Buy } else { Side::Sell };
    let is_market = rng.bernoulli(params.p_market);
    let offset = rng.int_inclusive(-params.limit_range_ticks, params.limit_range_ticks);
    let qty = rng.int_inclusive(params.min_size as i64, params.max_size as i64) as u64;
    if is_market {
        return Some(OrderIntent { side, price: None, qty });
    }
    let price = match side {
        Side::Buy => touch.bid.or(touch.ask.map(|a| a - 1))? + offset,
        Side::Sell => touch.ask.or(touch.bid.map(|b| b + 1))? - offset,
    };
    (price >= 1).then_some(OrderIntent { side, price: Some(price), qty })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentumParams {
    pub short_window_secs: u32,
    pub long_window_secs: u32,
    pub threshold_ticks: f64,
    pub max_size: u64,
    pub mean_wake_secs: f64,
}

impl Default for MomentumParams {
    fn default() -> Self {
        MomentumParams {
            short_window_secs: 60,
            long_window_secs: 600,
            threshold_ticks: 1.0,
            max_size: 100,
            mean_wake_secs: 30.0,
        }
    }
}

fn tail_mean(xs: &[f64], n: usize) -> f64 {
    let n = n.clamp(1, xs.len());
    xs[xs.len() - n..].iter().sum::<f64>() / n as f64
}

/// Moving-average crossover on a midprice history sampled once per second.
/// With fewer samples than the long window, the whole history is the long
/// window and the short window is at most half of it.
pub fn momentum_act(history: &[f64], params: &MomentumParams, rng: &mut RngStream) -> Option<OrderIntent> {
    let qty = rng.int_inclusive(1, params.max_size.max(1) as i64) as u64;
    if history.len() < 2 {
        return None;
    }
    let long_n = (params.long_window_secs as usize).min(history.len());
    let short_n = (params.short_window_secs as usize).min((long_n / 2).max(1));
    let signal = tail_mean(history, short_n) - tail_mean(history, long_n);
    if signal > params.threshold_ticks {
        Some(OrderIntent { side: Side::Buy, price: None, qty })
    } else if signal < -params.threshold_ticks {
        Some(OrderIntent { side: Side::Sell, price: None, qty })
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueParams {
    pub band_ticks: f64,
    /// Std dev of each agent's noisy view of the fundamental, ticks.
    pub observation_noise_ticks: f64,
    pub max_size: u64,
    pub mean_wake_secs: f64,
}

impl Default for ValueParams {
    fn default() -> Self {
        ValueParams { band_ticks: 10.0, observation_noise_ticks: 5.0, max_size: 100, mean_wake_secs: 60.0 }
    }
}

/// Noisy fundamental estimate for a value trader.
pub fn value_estimate(fundamental: f64, params: &ValueParams, rng: &mut RngStream) -> f64 {
    rng.normal(fundamental, params.observation_noise_ticks)
}

/// Buys below `estimate - band`, sells above `estimate + band`.
pub fn value_act(estimate: f64, mid: Option<f64>, params: &ValueParams, rng: &mut RngStream) -> Option<OrderIntent> {
    let qty = rng.int_inclusive(1, params.max_size.max(1) as i64) as u64;
    let mid = mid?;
    if mid < estimate - params.band_ticks {
        Some(OrderIntent { side: Side::Buy, price: None, qty })
    } else if mid > estimate + params.band_ticks {
        Some(OrderIntent { side: Side::Sell, price: None, qty })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_fixed_point_and_drift() {
        let mut rng = RngStream::new(1);
        let p = FundamentalOu { kappa: 0.1, mu: 10_000.0, sigma: 0.0, x0: 10_000.0 };
        assert_eq!(ou_step(10_000.0, 1.0, &p, &mut rng), 10_000.0);
        assert_eq!(ou_step(9_000.0, 1.0, &p, &mut rng), 9_100.0);
        let p32 = FundamentalOu { kappa: 0.1f32, mu: 10_000.0, sigma: 0.0, x0: 10_000.0 };
        assert_eq!(ou_step(9_000.0f32, 1.0, &p32, &mut rng), 9_100.0);
    }

    #[test]
    fn fundamental_path_grid() {
        let mut rng = RngStream::new(2);
        let p = FundamentalOu::default();
        let path = FundamentalPath::generate(&p, SimTime::from_secs(10), SimTime::from_secs(1), &mut rng);
        assert_eq!(path.values().len(), 11);
        assert_eq!(path.value_at(SimTime::ZERO), 10_000.0);
        assert_eq!(path.value_at(SimTime::from_millis(1_999)), path.values()[1]);
        assert_eq!(path.value_at(SimTime::from_secs(100)), path.values()[10]);
    }

    #[test]
    fn market_maker_symmetry_and_skew() {
        let p = MarketMakerParams {
            half_spread_ticks: 1,
            skew_ticks_per_share: 0.01,
            levels: 1,
            level_size: 50,
            requote_ms: 1000,
        };
        let q = market_maker_act(10_000.0, 0, &p);
        assert_eq!(q[0], OrderIntent { side: Side::Buy, price: Some(9_999), qty: 50 });
        assert_eq!(q[1], OrderIntent { side: Side::Sell, price: Some(10_001), qty: 50 });
        let long = market_maker_act(10_000.0, 500, &p);
        assert_eq!(long[0].price, Some(9_994));
        assert_eq!(long[1].price, Some(9_996));
    }

    #[test]
    fn market_maker_ladder() {
        let q = market_maker_act(10_000.0, 0, &MarketMakerParams::default());
        assert_eq!(q.len(), 10);
        let bids: Vec<_> = q.iter().filter(|o| o.side == Side::Buy).map(|o| o.price.unwrap()).collect();
        assert_eq!(bids, vec![9_999, 9_998, 9_997, 9_996, 9_995]);
    }

    #[test]
    fn u_profile_integrates_to_one() {
        for &c in &[0.0, 1.0, 1.5, 4.0] {
            let n = 10_000;
            let riemann: f64 = (0..n).map(|i| u_profile((i as f64 + 0.5) / n as f64, c)).sum::<f64>() / n as f64;
            assert!((riemann - 1.0).abs() < 1e-6);
            assert!((u_profile_mass(0.0, 1.0, c) - 1.0).abs() < 1e-12);
            assert!((u_profile_mass(0.0, 0.3, c) + u_profile_mass(0.3, 1.0, c) - 1.0).abs() < 1e-12);
        }
        assert!(u_profile(0.0, 1.5) > u_profile(0.5, 1.5));
    }

    #[test]
    fn noise_is_reproducible() {
        let t = Touch { bid: Some(9_999), ask: Some(10_001) };
        let p = NoiseParams::default();
        let a: Vec<_> = {
            let mut r = RngStream::new(9);
            (0..50).map(|_| noise_act(t, &p, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = RngStream::new(9);
            (0..50).map(|_| noise_act(t, &p, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn noise_side_is_fair() {
        let t = Touch { bid: Some(9_999), ask: Some(10_001) };
        let p = NoiseParams::default();
        let mut r = RngStream::new(11);
        let n = 100_000;
        let buys = (0..n).filter_map(|_| noise_act(t, &p, &mut r)).filter(|o| o.side == Side::Buy).count();
        // every draw yields an order with a two-sided touch
        let se = (0.25 / n as f64).sqrt();
        assert!(((buys as f64 / n as f64) - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn noise_limits_stay_near_touch() {
        let t = Touch { bid: Some(9_999), ask: Some(10_001) };
        let p = NoiseParams { p_market: 0.0, ..NoiseParams::default() };
        let mut r = RngStream::new(12);
        for _ in 0..1_000 {
            let o = noise_act(t, &p, &mut r).unwrap();
            let px = o.price.unwrap();
            match o.side {
                Side::Buy => assert!((px - 9_999).abs() <= p.limit_range_ticks),
                Side::Sell => assert!((px - 10_001).abs() <= p.limit_range_ticks),
            }
        }
        assert_eq!(noise_act(Touch::default(), &p, &mut r), None);
    }

    #[test]
    fn momentum_rules() {
        let p = MomentumParams::default();
        let mut r = RngStream::new(5);
        assert_eq!(momentum_act(&[10_000.0; 700], &p, &mut r), None);
        assert_eq!(momentum_act(&[10_000.0], &p, &mut r), None);
        let rising: Vec<f64> = (0..700).map(|i| 10_000.0 + i as f64 * 0.1).collect();
        assert_eq!(momentum_act(&rising, &p, &mut r).unwrap().side, Side::Buy);
        let falling: Vec<f64> = rising.iter().rev().copied().collect();
        assert_eq!(momentum_act(&falling, &p, &mut r).unwrap().side, Side::Sell);
        let short_rise: Vec<f64> = (0..20).map(|i| 10_000.0 + i as f64).collect();
        assert_eq!(momentum_act(&short_rise, &p, &mut r).unwrap().side, Side::Buy);
    }

    #[test]
    fn value_rules() {
        let p = ValueParams::default();
        let mut r = RngStream::new(6);
        assert_eq!(value_act(10_000.0, Some(10_000.0), &p, &mut r), None);
        assert_eq!(value_act(10_000.0, Some(10_050.0), &p, &mut r).unwrap().side, Side::Sell);
        assert_eq!(value_act(10_000.0, Some(9_950.0), &p, &mut r).unwrap().side, Side::Buy);
        assert_eq!(value_act(10_000.0, None, &p, &mut r), None);
        let o = value_act(10_000.0, Some(9_000.0), &p, &mut r).unwrap();
        assert!(o.qty >= 1 && o.qty <= p.max_size);
    }
}
