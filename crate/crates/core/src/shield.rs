//! Runtime constraint shield.
//!
//! Sits between a strategy and the venues. [`check`] reports what a raw
//! action would violate; [`project`] returns the closest compliant action
//! (volume capped, price raised to the collar, self-crossing orders
//! blocked). Constraint parameters are held as integer parts-per-million so
//! the shield and the audit circuit evaluate bit-identical bounds.

use thiserror::Error;

use crate::book::Side;
use crate::env::{ExecAction, VenueAction};

pub const PPM: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShieldError {
    #[error("participation cap must be in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("price collar must be in [0, 1), got {0}")]
    InvalidBeta(f64),
}

/// Participation cap, price collar and self-trade rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConstraintSet {
    alpha_ppm: u32,
    beta_ppm: u32,
    pub self_trade_guard: bool,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet { alpha_ppm: 100_000, beta_ppm: 5_000, self_trade_guard: true }
    }
}

impl ConstraintSet {
    /// Sweep values for the participation cap.
    pub const ALPHA_SWEEP: [f64; 5] = [0.05, 0.10, 0.20, 0.30, 0.50];

    pub fn new(alpha: f64, beta: f64, self_trade_guard: bool) -> Result<Self, ShieldError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ShieldError::InvalidAlpha(alpha));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(ShieldError::InvalidBeta(beta));
        }
        let alpha_ppm = (alpha * PPM as f64).round() as u32;
        if alpha_ppm == 0 {
            return Err(ShieldError::InvalidAlpha(alpha));
        }
        Ok(ConstraintSet { alpha_ppm, beta_ppm: (beta * PPM as f64).round() as u32, self_trade_guard })
    }

    pub fn from_ppm(alpha_ppm: u32, beta_ppm: u32, self_trade_guard: bool) -> Result<Self, ShieldError> {
        if alpha_ppm == 0 || alpha_ppm as u64 > PPM {
            return Err(ShieldError::InvalidAlpha(alpha_ppm as f64 / PPM as f64));
        }
        if beta_ppm as u64 >= PPM {
            return Err(ShieldError::InvalidBeta(beta_ppm as f64 / PPM as f64));
        }
        Ok(ConstraintSet { alpha_ppm, beta_ppm, self_trade_guard })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_ppm as f64 / PPM as f64
    }
    pub fn beta(&self) -> f64 {
        self.beta_ppm as f64 / PPM as f64
    }
    pub fn alpha_ppm(&self) -> u32 {
        self.alpha_ppm
    }
    pub fn beta_ppm(&self) -> u32 {
        self.beta_ppm
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self, ShieldError> {
        Self::new(alpha, self.beta(), self.self_trade_guard)
    }

    /// `floor(alpha * v_hat)`.
    pub fn volume_cap(&self, v_hat: u64) -> u64 {
        (self.alpha_ppm as u128 * v_hat as u128 / PPM as u128) as u64
    }

    /// `ceil(best_bid * (1 - beta))`.
    pub fn price_floor(&self, best_bid: i64) -> i64 {
        let num = best_bid as i128 * (PPM - self.beta_ppm as u64) as i128;
        let d = PPM as i128;
        (num + d - 1).div_euclid(d) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    Volume,
    Price,
    SelfTrade,
}

impl ViolationKind {
    pub fn code(self) -> u8 {
        match self {
            ViolationKind::Volume => 1,
            ViolationKind::Price => 2,
            ViolationKind::SelfTrade => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(ViolationKind::Volume),
            2 => Some(ViolationKind::Price),
            3 => Some(ViolationKind::SelfTrade),
            _ => None,
        }
    }
}

/// One adjusted (or would-be adjusted) component of an action.
///
/// Magnitudes: volume excess in shares; price shortfall in ticks times the
/// order's shares; blocked shares for a self-cross. A sell with no
/// reference bid is reported as a price violation with `limit == 0` and the
/// order's shares as magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViolationReport {
    pub step: u32,
    pub venue: u16,
    pub kind: ViolationKind,
    pub raw: i64,
    pub limit: i64,
    pub magnitude: u64,
}

/// Live order of the same firm, tracked for the self-trade rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiveOrder {
    pub venue: usize,
    pub side: Side,
    pub price: i64,
    pub qty: u64,
}

/// Public inputs the shield evaluates against at one decision step.
#[derive(Debug, Clone, Copy)]
pub struct ShieldInputs<'a> {
    pub step: u32,
    /// Volume estimate per venue (previous interval's traded volume).
    pub v_hat: &'a [u64],
    pub best_bids: &'a [Option<i64>],
    pub live: &'a [LiveOrder],
}

fn highest_crossing_buy(live: &[LiveOrder], sell_price: i64) -> Option<i64> {
    live.iter().filter(|o| o.side == Side::Buy && o.qty > 0 && o.price >= sell_price).map(|o| o.price).max()
}

fn project_venue(
    i: usize,
    raw: VenueAction,
    c: &ConstraintSet,
    inputs: &ShieldInputs<'_>,
    reports: &mut Vec<ViolationReport>,
) -> VenueAction {
    let mut report = |kind, raw_v: i64, limit: i64, magnitude: u64| {
        if magnitude > 0 {
            reports.push(ViolationReport { step: inputs.step, venue: i as u16, kind, raw: raw_v, limit, magnitude });
        }
    };
    if raw.volume == 0 {
        return raw;
    }
    let cap = c.volume_cap(inputs.v_hat.get(i).copied().unwrap_or(0));
    let mut volume = raw.volume;
    if volume > cap {
        report(ViolationKind::Volume, raw.volume as i64, cap as i64, raw.volume - cap);
        volume = cap;
    }
    let mut price = raw.price;
    match inputs.best_bids.get(i).copied().flatten() {
        None => {
            report(ViolationKind::Price, raw.price, 0, raw.volume);
            volume = 0;
        }
        Some(bid) => {
            let floor = c.price_floor(bid);
            if price < floor {
                let short = (floor - price) as u64;
                report(ViolationKind::Price, raw.price, floor, short.saturating_mul(raw.volume));
                price = floor;
            }
        }
    }
    if c.self_trade_guard && volume > 0 {
        if let Some(buy) = highest_crossing_buy(inputs.live, price) {
            report(ViolationKind::SelfTrade, price, buy, volume);
            volume = 0;
        }
    }
    VenueAction { volume, price }
}

/// Projects `raw` onto the constraint set. One report per adjusted component.
pub fn project(raw: &ExecAction, c: &ConstraintSet, inputs: &ShieldInputs<'_>) -> (ExecAction, Vec<ViolationReport>) {
    let mut reports = Vec::new();
    let venues = raw.venues.iter().enumerate().map(|(i, &a)| project_venue(i, a, c, inputs, &mut reports)).collect();
    (ExecAction { venues }, reports)
}

/// Reports what [`project`] would adjust, without modifying anything.
pub fn check(raw: &ExecAction, c: &ConstraintSet, inputs: &ShieldInputs<'_>) -> Vec<ViolationReport> {
    project(raw, c, inputs).1
}

/// Directive issued when a violation slips past projection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltDirective {
    pub step: u32,
    pub reason: String,
    pub cancel_all_live: bool,
}

pub fn kill_switch(step: u32, reason: impl Into<String>) -> HaltDirective {
    HaltDirective { step, reason: reason.into(), cancel_all_live: true }
}

/// Re-checks executed actions; the first violation latches a halt.
#[derive(Debug, Clone, Default)]
pub struct ComplianceMonitor {
    halted: Option<HaltDirective>,
}

impl ComplianceMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn halted(&self) -> Option<&HaltDirective> {
        self.halted.as_ref()
    }

    /// Returns a halt directive if `executed` violates any constraint or the
    /// monitor is already halted.
    pub fn inspect(
        &mut self,
        executed: &ExecAction,
        c: &ConstraintSet,
        inputs: &ShieldInputs<'_>,
    ) -> Option<HaltDirective> {
        if let Some(h) = &self.halted {
            return Some(h.clone());
        }
        let reports = check(executed, c, inputs);
        let first = reports.first()?;
        let h = kill_switch(
            inputs.step,
            format!(
                "post-shield {:?} breach on venue {} (raw {}, limit {})",
                first.kind, first.venue, first.raw, first.limit
            ),
        );
        self.halted = Some(h.clone());
        Some(h)
    }
}
