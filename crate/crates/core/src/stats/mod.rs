//! Evaluation statistics: per-day records, tail risk, confidence intervals,
//! paired t-tests and the summary table.

pub mod special;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
pub use special::{inc_beta, ln_gamma, normal_cdf, student_t_cdf, student_t_quantile, student_t_two_sided_p};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no samples")]
    EmptySamples,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("differences have zero variance")]
    ZeroVariance,
    #[error("strategy {strategy} is missing seed {seed}")]
    UnpairedSeeds { strategy: String, seed: u64 },
    #[error("malformed results csv at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// One strategy on one seeded day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyResult {
    pub seed: u64,
    pub strategy: String,
    pub is_bps: f64,
    pub completed_pct: f64,
    pub max_participation_pct: f64,
    pub violations: u64,
    pub shares_filled: u64,
}

pub const DAILY_CSV_HEADER: &str = "seed,strategy,is_bps,completed_pct,max_participation_pct,violations,shares_filled";

impl DailyResult {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.seed,
            self.strategy,
            self.is_bps,
            self.completed_pct,
            self.max_participation_pct,
            self.violations,
            self.shares_filled
        )
    }
}

pub fn write_daily_csv<W: Write>(mut w: W, rows: &[DailyResult]) -> io::Result<()> {
    writeln!(w, "{DAILY_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn read_daily_csv(text: &str) -> Result<Vec<DailyResult>, StatsError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| StatsError::Csv { line: i + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err("expected 7 fields"));
        }
        out.push(DailyResult {
            seed: f[0].parse().map_err(|_| err("seed"))?,
            strategy: f[1].to_string(),
            is_bps: f[2].parse().map_err(|_| err("is_bps"))?,
            completed_pct: f[3].parse().map_err(|_| err("completed_pct"))?,
            max_participation_pct: f[4].parse().map_err(|_| err("max_participation_pct"))?,
            violations: f[5].parse().map_err(|_| err("violations"))?,
            shares_filled: f[6].parse().map_err(|_| err("shares_filled"))?,
        });
    }
    Ok(out)
}

pub fn mean<T: Real>(xs: &[T]) -> Result<T, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    Ok(xs.iter().copied().sum::<T>() / T::lit(xs.len() as f64))
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev<T: Real>(xs: &[T]) -> Result<T, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFewSamples(xs.len()));
    }
    let m = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Ok((ss / T::lit((xs.len() - 1) as f64)).sqrt())
}

/// Mean of the worst `ceil((1 - level) * n)` samples, worst meaning most
/// negative.
pub fn cvar<T: Real>(xs: &[T], level: T) -> Result<T, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    // Round the tail size before taking the ceiling so 0.05 * 20 stays 1.
    let raw = ((T::one() - level) * T::lit(v.len() as f64)).as_f64();
    let k = ((raw * 1e9).round() / 1e9).ceil().max(1.0) as usize;
    mean(&v[..k.min(v.len())])
}

/// Mean and t-based 95% half-width.
pub fn ci95<T: Real>(xs: &[T]) -> Result<(T, T), StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFewSamples(xs.len()));
    }
    let n = T::lit(xs.len() as f64);
    let m = mean(xs)?;
    let s = std_dev(xs)?;
    let tc = student_t_quantile(T::lit(0.975), n - T::one());
    Ok((m, tc * s / n.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedT<T> {
    pub t: T,
    pub p_two_sided: T,
    pub mean_diff: T,
    pub ci95_half_width: T,
    pub df: usize,
}

/// Paired t-test on `a - b`.
pub fn paired_t<T: Real>(a: &[T], b: &[T]) -> Result<PairedT<T>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewSamples(a.len()));
    }
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let n = d.len();
    let md = mean(&d)?;
    let sd = std_dev(&d)?;
    let df = T::lit((n - 1) as f64);
    let tc = student_t_quantile(T::lit(0.975), df);
    if sd == T::zero() {
        if md == T::zero() {
            return Ok(PairedT {
                t: T::zero(),
                p_two_sided: T::one(),
                mean_diff: md,
                ci95_half_width: T::zero(),
                df: n - 1,
            });
        }
        return Err(StatsError::ZeroVariance);
    }
    let se = sd / T::lit(n as f64).sqrt();
    let t = md / se;
    Ok(PairedT { t, p_two_sided: student_t_two_sided_p(t, df), mean_diff: md, ci95_half_width: tc * se, df: n - 1 })
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub strategy: String,
    pub days: usize,
    pub mean_is_bps: f64,
    pub ci95: f64,
    pub std_is_bps: f64,
    pub cvar95: f64,
    pub mean_completed_pct: f64,
    pub max_participation_pct: f64,
    pub violations_per_day: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub t: f64,
    pub p: f64,
    pub mean_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub rows: Vec<StrategyRow>,
    pub pairs: Vec<PairwiseTest>,
}

/// Builds the summary table. Strategies keep first-appearance order; every
/// strategy must cover the same seeds. With one day the interval, standard
/// deviation and pairwise tests are NaN.
pub fn table1_report(results: &[DailyResult]) -> Result<AggregateReport, StatsError> {
    let mut order: Vec<String> = Vec::new();
    let mut by: BTreeMap<String, BTreeMap<u64, &DailyResult>> = BTreeMap::new();
    for r in results {
        if !by.contains_key(&r.strategy) {
            order.push(r.strategy.clone());
        }
        by.entry(r.strategy.clone()).or_default().insert(r.seed, r);
    }
    let seeds: BTreeSet<u64> = results.iter().map(|r| r.seed).collect();
    for s in &order {
        if let Some(&seed) = seeds.iter().find(|seed| !by[s].contains_key(seed)) {
            return Err(StatsError::UnpairedSeeds { strategy: s.clone(), seed });
        }
    }
    let series = |s: &str, f: fn(&DailyResult) -> f64| -> Vec<f64> { by[s].values().map(|r| f(r)).collect() };
    let mut rows = Vec::new();
    for s in &order {
        let is = series(s, |r| r.is_bps);
        // A single day has a mean but no dispersion.
        let (m, hw, sd) = if is.len() < 2 {
            (mean(&is)?, f64::NAN, f64::NAN)
        } else {
            let c = ci95(&is)?;
            (c.0, c.1, std_dev(&is)?)
        };
        rows.push(StrategyRow {
            strategy: s.clone(),
            days: is.len(),
            mean_is_bps: m,
            ci95: hw,
            std_is_bps: sd,
            cvar95: cvar(&is, 0.95)?,
            mean_completed_pct: mean(&series(s, |r| r.completed_pct))?,
            max_participation_pct: series(s, |r| r.max_participation_pct).into_iter().fold(0.0, f64::max),
            violations_per_day: mean(&series(s, |r| r.violations as f64))?,
        });
    }
    let mut pairs = Vec::new();
    for (i, a) in order.iter().enumerate() {
        for b in &order[i + 1..] {
            let (t, p, md) = match paired_t(&series(a, |r| r.is_bps), &series(b, |r| r.is_bps)) {
                Ok(pt) => (pt.t, pt.p_two_sided, pt.mean_diff),
                Err(StatsError::ZeroVariance | StatsError::TooFewSamples(_)) => (f64::NAN, f64::NAN, 0.0),
                Err(e) => return Err(e),
            };
            pairs.push(PairwiseTest { a: a.clone(), b: b.clone(), t, p, mean_diff: md });
        }
    }
    Ok(AggregateReport { rows, pairs })
}

impl AggregateReport {
    pub const CSV_HEADER: &'static str =
        "strategy,days,mean_is_bps,ci95,std_is_bps,cvar95_bps,completed_pct,max_participation_pct,violations_per_day";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.strategy,
                r.days,
                r.mean_is_bps,
                r.ci95,
                r.std_is_bps,
                r.cvar95,
                r.mean_completed_pct,
                r.max_participation_pct,
                r.violations_per_day
            );
        }
        s
    }

    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("a,b,t,p,mean_diff_bps\n");
        for p in &self.pairs {
            let _ = writeln!(s, "{},{},{},{},{}", p.a, p.b, p.t, p.p, p.mean_diff);
        }
        s
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<18} {:>18} {:>12} {:>14} {:>12} {:>12}\n",
            "Strategy", "IS (bps)", "% Completed", "Violations/day", "Max Vol%", "CVaR95"
        );
        for r in &self.rows {
            let is = format!("{:.2} ± {:.2}", r.mean_is_bps, r.ci95);
            let _ = writeln!(
                s,
                "{:<18} {:>18} {:>12.1} {:>14.2} {:>12.1} {:>12.2}",
                r.strategy, is, r.mean_completed_pct, r.violations_per_day, r.max_participation_pct, r.cvar95
            );
        }
        if !self.pairs.is_empty() {
            s.push_str("\nPaired t-tests on IS (a - b):\n");
            for p in &self.pairs {
                let _ =
                    writeln!(s, "  {} vs {}: diff {:.3} bps, t = {:.3}, p = {:.4}", p.a, p.b, p.mean_diff, p.t, p.p);
            }
        }
        s
    }

    pub fn row(&self, strategy: &str) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }
}
