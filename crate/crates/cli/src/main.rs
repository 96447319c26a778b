use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use safe_exec::audit::AuditError;
use safe_exec::baselines::StrategyKind;
use safe_exec::config::{ConfigError, Scenario, ScenarioConfig};
use safe_exec::experiment::{
    self, audit_verify, report_from_csv, run_eval, run_stress, run_sweep, sweep_csv, write_eval, ExperimentError,
    Policies, StressVariant,
};
use safe_exec::shield::ConstraintSet;
use safe_exec::stats::DailyResult;

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;
const EXIT_REJECT: u8 = 4;

#[derive(Parser)]
#[command(name = "safe-exec", version, about = "Shielded multi-venue execution simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of evaluation days.
    #[arg(long, global = true)]
    days: Option<usize>,
    /// Strategy name; repeat or comma-separate for several.
    #[arg(long, global = true, value_delimiter = ',')]
    strategy: Vec<String>,
    /// Participation cap; for `sweep`, repeat for several caps.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run rule-based or learned strategies and write per-day results.
    Simulate,
    /// Train the learned strategies and write checkpoints and learning curves.
    Train,
    /// Paired evaluation: per-day CSV, aggregate table, transcripts and artifacts.
    Evaluate {
        /// Exit with status 3 if a compliance or completion check fails.
        #[arg(long)]
        check: bool,
    },
    /// Re-evaluate the shielded policy across participation caps.
    Sweep,
    /// Run a stress scenario against the baseline on the same days.
    Stress {
        /// latency_500ms, liquidity_half, shield_toggle or alpha_sweep.
        variant: String,
    },
    /// Verify an audit artifact.
    AuditVerify {
        artifact: PathBuf,
        /// Transcript whose public inputs the statement must commit to.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Rebuild the aggregate table from a per-day CSV.
    Report {
        /// Per-day CSV; defaults to daily.csv in the output directory.
        daily: Option<PathBuf>,
        /// Exit with status 3 if a compliance or completion check fails.
        #[arg(long)]
        check: bool,
    },
}

enum Failure {
    Config(String),
    Check(Vec<String>),
    Reject,
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => c.into(),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn scenario(common: &Common, sweep: bool) -> Result<Scenario, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.run.master_seed = s;
    }
    if let Some(d) = common.days {
        cfg.run.days = d;
    }
    if !common.strategy.is_empty() {
        cfg.run.strategies = common.strategy.clone();
    }
    if !sweep {
        match common.alpha.as_slice() {
            [] => {}
            [a] => cfg.shield.alpha = *a,
            _ => return Err(Failure::Config("--alpha takes a single value outside `sweep`".into())),
        }
    }
    if let Some(o) = &common.out {
        cfg.run.out_dir = o.clone();
    }
    if let Some(p) = common.parallel {
        cfg.run.parallel = p;
    }
    Ok(cfg.build()?)
}

/// Compliance and completion checks on per-day rows: shielded strategies
/// never breach, and schedule followers finish the order.
fn check_results(rows: &[DailyResult]) -> Vec<String> {
    let mut failures = Vec::new();
    for r in rows {
        let Ok(kind) = r.strategy.parse::<StrategyKind>() else {
            continue;
        };
        if kind.shield_mode() == safe_exec::env::ShieldMode::Project && r.violations > 0 {
            failures.push(format!("{} seed {}: {} violations", r.strategy, r.seed, r.violations));
        }
        if matches!(kind, StrategyKind::Twap | StrategyKind::Vwap) && r.completed_pct < 100.0 {
            failures.push(format!("{} seed {}: completed {:.2}%", r.strategy, r.seed, r.completed_pct));
        }
    }
    failures
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn policies_for(scn: &Scenario, kinds: &[StrategyKind]) -> Result<Policies, Failure> {
    let p = Policies::load(scn)?;
    p.require(kinds)?;
    Ok(p)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = &cli.common;
    match cli.command {
        Command::Simulate | Command::Evaluate { .. } => {
            let check = matches!(cli.command, Command::Evaluate { check: true });
            let mut scn = scenario(common, false)?;
            if matches!(cli.command, Command::Simulate) && common.strategy.is_empty() {
                scn.strategies = vec![StrategyKind::Twap];
            }
            if matches!(cli.command, Command::Simulate) && common.days.is_none() {
                scn.days = 1;
            }
            let policies = policies_for(&scn, &scn.strategies)?;
            let out = run_eval(&scn, &scn.strategies, scn.days, &policies)?;
            write_eval(&out, &scn.out_dir)?;
            print!("{}", out.report.to_text());
            let rejected: Vec<String> = out
                .audits
                .iter()
                .filter(|a| a.kind == StrategyKind::RlSafe && !a.verdict.accepted())
                .map(|a| format!("{} seed {}: artifact {}", a.kind, a.seed, a.verdict))
                .collect();
            println!("wrote results to {}", scn.out_dir.display());
            if check {
                let mut failures = check_results(&out.results);
                failures.extend(rejected);
                if !failures.is_empty() {
                    return Err(Failure::Check(failures));
                }
            }
        }
        Command::Train => {
            let mut scn = scenario(common, false)?;
            if common.strategy.is_empty() {
                scn.strategies = vec![StrategyKind::RlSafe, StrategyKind::RlUnconstrained];
            }
            experiment::train_and_save(&scn, &scn.strategies, &scn.out_dir)?;
            println!("wrote checkpoints and learning curves to {}", scn.out_dir.display());
        }
        Command::Sweep => {
            let scn = scenario(common, true)?;
            let alphas =
                if common.alpha.is_empty() { ConstraintSet::ALPHA_SWEEP.to_vec() } else { common.alpha.clone() };
            let policies = policies_for(&scn, &[StrategyKind::RlSafe, StrategyKind::RlUnconstrained])?;
            let points = run_sweep(&scn, &alphas, scn.days, &policies)?;
            fs::create_dir_all(&scn.out_dir).context("creating output directory")?;
            let csv = sweep_csv(&points);
            write(&scn.out_dir.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Stress { variant } => {
            let v: StressVariant = variant.parse().map_err(|e: ExperimentError| Failure::Config(e.to_string()))?;
            let scn = scenario(common, false)?;
            let needed: Vec<StrategyKind> = if v == StressVariant::AlphaSweep {
                vec![StrategyKind::RlSafe, StrategyKind::RlUnconstrained]
            } else {
                scn.strategies.clone()
            };
            let policies = policies_for(&scn, &needed)?;
            let report = run_stress(&scn, v, &scn.strategies, scn.days, &policies)?;
            fs::create_dir_all(&scn.out_dir).context("creating output directory")?;
            let csv = report.to_csv();
            write(&scn.out_dir.join(format!("stress_{v}.csv")), &csv)?;
            print!("{csv}");
        }
        Command::AuditVerify { artifact, transcript } => match audit_verify(&artifact, transcript.as_deref()) {
            Ok(verdict) => {
                println!("{verdict}");
                if !verdict.accepted() {
                    return Err(Failure::Reject);
                }
            }
            Err(ExperimentError::Audit(AuditError::Io(e))) => {
                return Err(Failure::Other(anyhow::anyhow!("{}: {e}", artifact.display())))
            }
            Err(ExperimentError::Audit(e)) => {
                println!("reject: {e}");
                return Err(Failure::Reject);
            }
            Err(e) => return Err(e.into()),
        },
        Command::Report { daily, check } => {
            let scn = scenario(common, false)?;
            let path = daily.unwrap_or_else(|| scn.out_dir.join("daily.csv"));
            let report = report_from_csv(&path)?;
            print!("{}", report.to_text());
            if let Some(dir) = path.parent() {
                write(&dir.join("aggregate.csv"), &report.to_csv())?;
            }
            if check {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let rows = safe_exec::stats::read_daily_csv(&text).map_err(|e| Failure::Other(e.into()))?;
                let failures = check_results(&rows);
                if !failures.is_empty() {
                    return Err(Failure::Check(failures));
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Check(fs)) => {
            for f in &fs {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(EXIT_CHECK)
        }
        Err(Failure::Reject) => ExitCode::from(EXIT_REJECT),
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
