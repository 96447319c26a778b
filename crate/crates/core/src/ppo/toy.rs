//! Deterministic single-venue execution toy with a constant book, used to
//! smoke-test learning without the market simulator.

use super::{Environment, PpoError};
use crate::env::{feature_len, TICK_VALUE};
use crate::scalar::round_half_even;

#[derive(Debug, Clone)]
pub struct ToyExecEnv {
    pub q0: u64,
    pub horizon: u32,
    pub p0: i64,
    pub bid: i64,
    pub ask: i64,
    /// Fill fraction of a passive order decays as `exp(-ticks above bid / decay)`.
    pub passive_decay: f64,
    remaining: u64,
    t: u32,
    filled_qty: u64,
    filled_notional: i64,
}

impl Default for ToyExecEnv {
    fn default() -> Self {
        ToyExecEnv {
            q0: 1_000,
            horizon: 10,
            p0: 10_000,
            bid: 9_990,
            ask: 10_010,
            passive_decay: 5.0,
            remaining: 1_000,
            t: 0,
            filled_qty: 0,
            filled_notional: 0,
        }
    }
}

impl ToyExecEnv {
    fn target(&self) -> u64 {
        let left = (self.horizon - self.t).max(1) as u64;
        self.remaining.div_ceil(left)
    }

    fn obs(&self) -> Vec<f64> {
        let p0 = self.p0 as f64;
        let even = self.q0 as f64 / self.horizon as f64;
        vec![
            self.remaining as f64 / self.q0 as f64,
            self.t as f64 / self.horizon as f64,
            (self.bid as f64 / p0 - 1.0) * 100.0,
            (self.ask as f64 / p0 - 1.0) * 100.0,
            (self.ask - self.bid) as f64 / 10.0,
            1.0,
            1.0,
            1.0,
            0.0,
            self.target() as f64 / even,
            0.0,
        ]
    }
}

impl Environment for ToyExecEnv {
    fn venues(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        feature_len(1)
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.remaining = self.q0;
        self.t = 0;
        self.filled_qty = 0;
        self.filled_notional = 0;
        self.obs()
    }

    fn step_controls(&mut self, multipliers: &[f64], offsets: &[f64]) -> Result<(Vec<f64>, f64, bool), PpoError> {
        if multipliers.len() != 1 || offsets.len() != 1 {
            return Err(PpoError::ShapeMismatch { expected: 1, got: multipliers.len() });
        }
        let v = (round_half_even(multipliers[0].max(0.0) * self.target() as f64).max(0) as u64).min(self.remaining);
        let price = (self.bid + round_half_even(offsets[0])).max(1);
        let (qty, fill_price) = if price <= self.bid {
            (v, self.bid)
        } else {
            let frac = (-((price - self.bid) as f64) / self.passive_decay).exp();
            ((v as f64 * frac).floor() as u64, price)
        };
        self.remaining -= qty;
        self.filled_qty += qty;
        self.filled_notional += qty as i64 * fill_price;
        let mut reward = qty as f64 * (fill_price - self.p0) as f64 * TICK_VALUE;
        reward -= 0.001 * self.remaining as f64 / self.q0 as f64;
        self.t += 1;
        let done = self.t >= self.horizon || self.remaining == 0;
        if done {
            reward -= 0.001 * self.remaining as f64;
        }
        Ok((self.obs(), reward, done))
    }

    fn episode_is_bps(&self) -> Option<f64> {
        (self.filled_qty > 0)
            .then(|| 1e4 * (self.filled_notional as f64 / self.filled_qty as f64 - self.p0 as f64) / self.p0 as f64)
    }

    fn episode_violations(&self) -> u64 {
        0
    }
}
