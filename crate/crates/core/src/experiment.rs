//! Experiment orchestration: paired evaluation days, training, the
//! participation-cap sweep and the stress scenarios.
//!
//! Days run in parallel; every output list is ordered by day index and then
//! by strategy, so results do not depend on the worker count.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::audit::{prove, record_compliant, verify, AuditArtifact, AuditError, Transcript, Verdict};
use crate::baselines::{
    run_episode, BaselineError, ExecutionPolicy, Greedy, RandomPolicy, ScheduleFollower, StrategyKind, VolumeProfile,
};
use crate::config::{ConfigError, Scenario};
use crate::env::{EnvError, ExecutionEnv};
use crate::kernel::mix_seed;
use crate::ppo::{checkpoint, learning_curve_csv, train, LearnedPolicy, PolicyParams, PpoError, TrainOutput};
use crate::stats::{ci95, mean, paired_t, table1_report, write_daily_csv, AggregateReport, DailyResult, StatsError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("no trained policy for {0}; run `train` first or set a checkpoint path")]
    MissingCheckpoint(StrategyKind),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("sweep needs at least one participation cap")]
    NoAlphas,
    #[error("unknown stress variant {0:?}")]
    UnknownStress(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Runs `f` over `items` on `parallel` workers (0 = one per core),
/// returning results in input order.
fn par_map<T, R, F>(parallel: usize, items: Vec<T>, f: F) -> Result<Vec<R>, ExperimentError>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R, ExperimentError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

/// Trained parameters for the two learned strategies.
#[derive(Debug, Clone, Default)]
pub struct Policies {
    pub safe: Option<PolicyParams<f64>>,
    pub unconstrained: Option<PolicyParams<f64>>,
}

pub const SAFE_CHECKPOINT: &str = "policy_safe.ckpt";
pub const UNCONSTRAINED_CHECKPOINT: &str = "policy_unconstrained.ckpt";

impl Policies {
    /// Loads whichever checkpoints exist: the configured paths, else the
    /// default file names in the output directory.
    pub fn load(scn: &Scenario) -> Result<Self, ExperimentError> {
        let read =
            |configured: &Option<PathBuf>, default: &str| -> Result<Option<PolicyParams<f64>>, ExperimentError> {
                let path = configured.clone().unwrap_or_else(|| scn.out_dir.join(default));
                if configured.is_none() && !path.exists() {
                    return Ok(None);
                }
                Ok(Some(checkpoint::load(&path)?))
            };
        Ok(Policies {
            safe: read(&scn.checkpoint, SAFE_CHECKPOINT)?,
            unconstrained: read(&scn.checkpoint_unconstrained, UNCONSTRAINED_CHECKPOINT)?,
        })
    }

    pub fn get(&self, kind: StrategyKind) -> Result<&PolicyParams<f64>, ExperimentError> {
        let p = match kind {
            StrategyKind::RlSafe => self.safe.as_ref(),
            StrategyKind::RlUnconstrained => self.unconstrained.as_ref(),
            _ => None,
        };
        p.ok_or(ExperimentError::MissingCheckpoint(kind))
    }

    /// Fails unless every learned strategy in `kinds` has parameters.
    pub fn require(&self, kinds: &[StrategyKind]) -> Result<(), ExperimentError> {
        for &k in kinds.iter().filter(|k| k.is_learned()) {
            self.get(k)?;
        }
        Ok(())
    }
}

/// Trains the learned strategy of `kind` under its training shield mode.
pub fn train_policy(scn: &Scenario, kind: StrategyKind) -> Result<TrainOutput<f64>, ExperimentError> {
    let mode = scn.mode_for(kind);
    let mut env = ExecutionEnv::new(&scn.market, &scn.episode, scn.constraints, mode, scn.train_seed(mode))?;
    Ok(train::<f64, _>(&mut env, &scn.ppo, scn.train_seed(mode))?)
}

/// Trains both learned strategies and writes checkpoints and learning
/// curves into `dir`.
pub fn train_and_save(scn: &Scenario, kinds: &[StrategyKind], dir: &Path) -> Result<Policies, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let jobs: Vec<StrategyKind> = kinds.iter().copied().filter(|k| k.is_learned()).collect();
    let trained = par_map(scn.parallel, jobs.clone(), |k| train_policy(scn, k))?;
    let mut out = Policies::default();
    for (k, t) in jobs.into_iter().zip(trained) {
        let (ckpt, curve) = match k {
            StrategyKind::RlSafe => (SAFE_CHECKPOINT, "learning_curve_safe.csv"),
            _ => (UNCONSTRAINED_CHECKPOINT, "learning_curve_unconstrained.csv"),
        };
        checkpoint::save(&t.last, &dir.join(ckpt))?;
        let path = dir.join(curve);
        fs::write(&path, learning_curve_csv(&t.curve)).map_err(io_err(&path))?;
        match k {
            StrategyKind::RlSafe => out.safe = Some(t.last),
            _ => out.unconstrained = Some(t.last),
        }
    }
    Ok(out)
}

/// Builds the policy object for one day.
pub fn make_policy(
    scn: &Scenario,
    kind: StrategyKind,
    seed: u64,
    policies: &Policies,
) -> Result<Box<dyn ExecutionPolicy>, ExperimentError> {
    let e = &scn.episode;
    Ok(match kind {
        StrategyKind::Twap => Box::new(ScheduleFollower::twap(e.q0, e.horizon)),
        StrategyKind::Vwap => {
            let profile = VolumeProfile::u_shaped(e.horizon, scn.market.noise.u_curvature);
            Box::new(ScheduleFollower::vwap(e.q0, &profile, e.horizon)?)
        }
        StrategyKind::Greedy => Box::new(Greedy::default()),
        StrategyKind::Random => Box::new(RandomPolicy::new(mix_seed(seed, 0x5241_4e44))),
        StrategyKind::RlSafe | StrategyKind::RlUnconstrained => {
            Box::new(LearnedPolicy::deterministic(policies.get(kind)?.clone()))
        }
    })
}

/// Everything recorded about one strategy on one day.
#[derive(Debug, Clone)]
pub struct DayRun {
    pub kind: StrategyKind,
    pub result: DailyResult,
    pub transcript: Transcript,
    pub violating_step_rate: f64,
    pub raw_violations: u64,
    pub remaining: u64,
    pub halted: bool,
    pub background_digest: [u8; 32],
}

/// Runs one strategy for one day; `shield_off_from` stops projection from
/// that step on.
pub fn run_day(
    scn: &Scenario,
    kind: StrategyKind,
    seed: u64,
    policies: &Policies,
    shield_off_from: Option<u32>,
) -> Result<DayRun, ExperimentError> {
    let mut env = ExecutionEnv::new(&scn.market, &scn.episode, scn.constraints, scn.mode_for(kind), seed)?;
    env.disable_shield_from(shield_off_from);
    let mut policy = make_policy(scn, kind, seed, policies)?;
    run_episode(&mut env, policy.as_mut())?;
    env.run_to_close()?;
    Ok(DayRun {
        kind,
        result: env.daily_result(kind.name()),
        transcript: env.transcript().clone(),
        violating_step_rate: env.violating_step_rate(),
        raw_violations: env.raw_violations(),
        remaining: env.remaining(),
        halted: env.halted().is_some(),
        background_digest: env.market().background_digest(),
    })
}

/// Runs every `(day, strategy)` pair, ordered by day then strategy.
pub fn run_days(
    scn: &Scenario,
    strategies: &[StrategyKind],
    seeds: &[u64],
    policies: &Policies,
    shield_off_from: Option<u32>,
) -> Result<Vec<DayRun>, ExperimentError> {
    policies.require(strategies)?;
    let jobs: Vec<(u64, StrategyKind)> = seeds.iter().flat_map(|&s| strategies.iter().map(move |&k| (s, k))).collect();
    par_map(scn.parallel, jobs, |(s, k)| run_day(scn, k, s, policies, shield_off_from))
}

/// Audit material for one learned-policy episode.
#[derive(Debug, Clone)]
pub struct EpisodeAudit {
    pub kind: StrategyKind,
    pub seed: u64,
    pub transcript: Transcript,
    pub artifact: AuditArtifact,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub runs: Vec<DayRun>,
    pub results: Vec<DailyResult>,
    pub report: AggregateReport,
    pub audits: Vec<EpisodeAudit>,
}

/// Paired evaluation over the scenario's first `days` evaluation seeds.
pub fn run_eval(
    scn: &Scenario,
    strategies: &[StrategyKind],
    days: usize,
    policies: &Policies,
) -> Result<EvalOutput, ExperimentError> {
    let seeds = scn.day_seeds(days);
    let runs = run_days(scn, strategies, &seeds, policies, None)?;
    let results: Vec<DailyResult> = runs.iter().map(|r| r.result.clone()).collect();
    let report = table1_report(&results)?;
    let audits = runs
        .iter()
        .filter(|r| r.kind.is_learned())
        .map(|r| {
            let artifact = prove(&r.transcript, &scn.constraints, scn.proof)?;
            let verdict = verify(&artifact, Some(&r.transcript.public_inputs()));
            Ok(EpisodeAudit { kind: r.kind, seed: r.result.seed, transcript: r.transcript.clone(), artifact, verdict })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(EvalOutput { runs, results, report, audits })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Per-day CSV, aggregate CSV, pairwise tests, text table, transcripts and
/// artifacts.
pub fn write_eval(out: &EvalOutput, dir: &Path) -> Result<(), ExperimentError> {
    let audit_dir = dir.join("audit");
    fs::create_dir_all(&audit_dir).map_err(io_err(&audit_dir))?;
    let mut daily = Vec::new();
    write_daily_csv(&mut daily, &out.results).expect("writing to memory");
    write_file(&dir.join("daily.csv"), daily)?;
    write_file(&dir.join("aggregate.csv"), out.report.to_csv())?;
    write_file(&dir.join("pairs.csv"), out.report.pairs_csv())?;
    write_file(&dir.join("report.txt"), out.report.to_text())?;
    for a in &out.audits {
        let stem = format!("{}_{:016x}", a.kind.name(), a.seed);
        write_file(&audit_dir.join(format!("{stem}.transcript")), a.transcript.to_text())?;
        write_file(&audit_dir.join(format!("{stem}.artifact")), a.artifact.to_bytes())?;
    }
    Ok(())
}

/// One point of the participation-cap curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub mean_is_bps: f64,
    pub ci95: f64,
    pub violation_rate_unconstrained: f64,
    /// Shielded-policy shortfall per day, in seed order.
    pub is_bps: Vec<f64>,
    /// Unconstrained policy's share of violating steps per day.
    pub violation_rates: Vec<f64>,
}

pub const SWEEP_HEADER: &str = "alpha,mean_is_bps,ci95,violation_rate_unconstrained";

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for p in points {
        s.push_str(&format!("{},{},{},{}\n", p.alpha, p.mean_is_bps, p.ci95, p.violation_rate_unconstrained));
    }
    s
}

/// Re-evaluates the shielded policy under each cap on the same days, and
/// measures how often the unconstrained policy would breach that cap.
pub fn run_sweep(
    scn: &Scenario,
    alphas: &[f64],
    days: usize,
    policies: &Policies,
) -> Result<Vec<SweepPoint>, ExperimentError> {
    if alphas.is_empty() {
        return Err(ExperimentError::NoAlphas);
    }
    let kinds = [StrategyKind::RlSafe, StrategyKind::RlUnconstrained];
    policies.require(&kinds)?;
    let seeds = scn.day_seeds(days);
    alphas
        .iter()
        .map(|&alpha| {
            let mut s = scn.clone();
            s.constraints = s.constraints.with_alpha(alpha).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let runs = run_days(&s, &kinds, &seeds, policies, None)?;
            let is_bps: Vec<f64> =
                runs.iter().filter(|r| r.kind == StrategyKind::RlSafe).map(|r| r.result.is_bps).collect();
            let violation_rates: Vec<f64> = runs
                .iter()
                .filter(|r| r.kind == StrategyKind::RlUnconstrained)
                .map(|r| r.violating_step_rate)
                .collect();
            let ci = if is_bps.len() >= 2 { ci95(&is_bps)?.1 } else { 0.0 };
            Ok(SweepPoint {
                alpha,
                mean_is_bps: mean(&is_bps)?,
                ci95: ci,
                violation_rate_unconstrained: mean(&violation_rates)?,
                is_bps,
                violation_rates,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressVariant {
    /// One-way latency raised to 500 ms.
    Latency500ms,
    /// Market makers and noise traders halved.
    LiquidityHalf,
    /// Projection switched off at the configured step; checks keep logging.
    ShieldToggle,
    /// The participation-cap sweep.
    AlphaSweep,
}

impl StressVariant {
    pub const ALL: [StressVariant; 4] = [
        StressVariant::Latency500ms,
        StressVariant::LiquidityHalf,
        StressVariant::ShieldToggle,
        StressVariant::AlphaSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StressVariant::Latency500ms => "latency_500ms",
            StressVariant::LiquidityHalf => "liquidity_half",
            StressVariant::ShieldToggle => "shield_toggle",
            StressVariant::AlphaSweep => "alpha_sweep",
        }
    }

    /// The scenario with this variant's overrides applied.
    pub fn apply(self, scn: &Scenario) -> Scenario {
        let mut s = scn.clone();
        match self {
            StressVariant::Latency500ms => s.market.latency_ns = 500_000_000,
            StressVariant::LiquidityHalf => s.market.population = s.market.population.halved_liquidity(),
            StressVariant::ShieldToggle | StressVariant::AlphaSweep => {}
        }
        s
    }
}

impl fmt::Display for StressVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StressVariant {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StressVariant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| ExperimentError::UnknownStress(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressRow {
    pub strategy: String,
    pub baseline_is_bps: f64,
    pub variant_is_bps: f64,
    pub delta_is_bps: f64,
    /// Paired two-sided p-value of the shortfall change (1 when undefined).
    pub p_value: f64,
    pub baseline_violations: u64,
    pub variant_violations: u64,
    /// Non-compliant executed records before and after the toggle step.
    pub noncompliant_before_toggle: u64,
    pub noncompliant_after_toggle: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressReport {
    pub variant: StressVariant,
    pub rows: Vec<StressRow>,
    pub sweep: Vec<SweepPoint>,
}

impl StressReport {
    pub fn to_csv(&self) -> String {
        if self.variant == StressVariant::AlphaSweep {
            return sweep_csv(&self.sweep);
        }
        let mut s = String::from(
            "variant,strategy,baseline_is_bps,variant_is_bps,delta_is_bps,p_value,baseline_violations,variant_violations,noncompliant_before_toggle,noncompliant_after_toggle\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                self.variant,
                r.strategy,
                r.baseline_is_bps,
                r.variant_is_bps,
                r.delta_is_bps,
                r.p_value,
                r.baseline_violations,
                r.variant_violations,
                r.noncompliant_before_toggle,
                r.noncompliant_after_toggle
            ));
        }
        s
    }

    pub fn row(&self, strategy: StrategyKind) -> Option<&StressRow> {
        self.rows.iter().find(|r| r.strategy == strategy.name())
    }
}

/// Runs the baseline scenario and the variant on the same days and reports
/// per-strategy changes.
pub fn run_stress(
    scn: &Scenario,
    variant: StressVariant,
    strategies: &[StrategyKind],
    days: usize,
    policies: &Policies,
) -> Result<StressReport, ExperimentError> {
    if variant == StressVariant::AlphaSweep {
        let sweep = run_sweep(scn, &crate::shield::ConstraintSet::ALPHA_SWEEP, days, policies)?;
        return Ok(StressReport { variant, rows: Vec::new(), sweep });
    }
    let seeds = scn.day_seeds(days);
    let base = run_days(scn, strategies, &seeds, policies, None)?;
    let (stressed, toggle) = match variant {
        StressVariant::ShieldToggle => (scn.clone(), Some(scn.toggle_step)),
        _ => (variant.apply(scn), None),
    };
    let var = run_days(&stressed, strategies, &seeds, policies, toggle)?;
    let rows = strategies
        .iter()
        .map(|&k| {
            let pick = |runs: &[DayRun]| runs.iter().filter(|r| r.kind == k).cloned().collect::<Vec<_>>();
            let (b, v) = (pick(&base), pick(&var));
            let bi: Vec<f64> = b.iter().map(|r| r.result.is_bps).collect();
            let vi: Vec<f64> = v.iter().map(|r| r.result.is_bps).collect();
            let p_value = if bi.len() >= 2 { paired_t(&vi, &bi).map(|t| t.p_two_sided).unwrap_or(1.0) } else { 1.0 };
            let t_off = toggle.unwrap_or(u32::MAX);
            let (mut before, mut after) = (0, 0);
            for r in &v {
                for rec in r.transcript.records().iter().filter(|rec| !record_compliant(rec, &scn.constraints)) {
                    if rec.step < t_off {
                        before += 1;
                    } else {
                        after += 1;
                    }
                }
            }
            Ok(StressRow {
                strategy: k.name().to_string(),
                baseline_is_bps: mean(&bi)?,
                variant_is_bps: mean(&vi)?,
                delta_is_bps: mean(&vi)? - mean(&bi)?,
                p_value,
                baseline_violations: b.iter().map(|r| r.result.violations).sum(),
                variant_violations: v.iter().map(|r| r.result.violations).sum(),
                noncompliant_before_toggle: before,
                noncompliant_after_toggle: after,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(StressReport { variant, rows, sweep: Vec::new() })
}

/// Loads an artifact and verifies it; a separate transcript file, when
/// given, supplies the public inputs the statement must commit to.
pub fn audit_verify(artifact: &Path, transcript: Option<&Path>) -> Result<Verdict, ExperimentError> {
    let a = AuditArtifact::load(artifact)?;
    let public = transcript.map(Transcript::read_from).transpose()?.map(|t| t.public_inputs());
    Ok(verify(&a, public.as_ref()))
}

/// Rebuilds the aggregate report from a per-day CSV file.
pub fn report_from_csv(path: &Path) -> Result<AggregateReport, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(table1_report(&crate::stats::read_daily_csv(&text)?)?)
}
