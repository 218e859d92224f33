use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use infexplore::fixed_budget::ScheduleKnobs;
use infexplore::fixed_confidence::DEFAULT_C;
use infexplore::harness::{self, ExperimentConfig, Mode, SweepParam};
use infexplore::Error;

#[derive(Parser, Debug)]
#[command(name = "infexplore", version, about = "Pure exploration with infinitely many Bernoulli arms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quantile estimation followed by the accept loop.
    FixedConfidence(Common),
    /// Moving-threshold algorithm under a sample budget.
    FixedBudget(Common),
    /// Uniform-allocation baseline under a sample budget.
    Baseline(Common),
    /// Unknown quantile, averaged over a band of levels.
    ReduceAvg(Common),
    /// Unknown quantile at a level above one half.
    ReduceHalf(Common),
    /// Essential supremum target.
    ReduceEsssup(Common),
    /// Accept many arms with a slightly larger budget.
    MultiArm(Common),
    /// Fixed-budget algorithm against the distorting adversary.
    Adversary(Common),
    /// Repeat an experiment over a grid of one parameter.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Reservoir: `uniform:LO,HI`, `atoms:V@W,...` or `admissible:alpha=A,beta=B,eta=E,rho=R`.
    #[arg(long, default_value = "uniform:0,1")]
    reservoir: String,
    #[arg(long)]
    eta: Option<f64>,
    /// Lower edge of the quantile band (reduce-avg).
    #[arg(long)]
    eta2: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Target slack below the essential supremum (reduce-esssup).
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Sample budget; scientific notation such as 1e5 is accepted.
    #[arg(long, value_parser = parse_count)]
    budget: Option<u64>,
    /// Schedule growth; in adversary mode, the adversary's batch growth.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    rho1: Option<f64>,
    #[arg(long)]
    rho2: Option<f64>,
    /// Schedule growth of the algorithm in adversary mode.
    #[arg(long)]
    algo_rho: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C)]
    c_const: f64,
    #[arg(long, default_value_t = 100, value_parser = parse_count)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Row output file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write a JSON-lines trace of trial 0 to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record per-trial wall-clock time in the `ns` column.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Experiment to repeat.
    #[arg(long, value_enum)]
    mode: SweepMode,
    /// Parameter to vary: budget, delta, eta, eps, alpha or beta.
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepMode {
    FixedConfidence,
    FixedBudget,
    Baseline,
    ReduceAvg,
    ReduceHalf,
    ReduceEsssup,
    MultiArm,
    Adversary,
}

impl From<SweepMode> for Mode {
    fn from(m: SweepMode) -> Mode {
        match m {
            SweepMode::FixedConfidence => Mode::FixedConfidence,
            SweepMode::FixedBudget => Mode::FixedBudget,
            SweepMode::Baseline => Mode::Baseline,
            SweepMode::ReduceAvg => Mode::ReductionAvg,
            SweepMode::ReduceHalf => Mode::ReductionHalf,
            SweepMode::ReduceEsssup => Mode::ReductionEsssup,
            SweepMode::MultiArm => Mode::MultiArm,
            SweepMode::Adversary => Mode::Adversary,
        }
    }
}

fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("{s:?} is not a non-negative integer"))
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Parse { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn config(mode: Mode, c: &Common) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(mode, c.reservoir.clone());
    cfg.eta = c.eta;
    cfg.eta2 = c.eta2;
    cfg.eps = c.eps;
    cfg.eps1 = c.eps1;
    cfg.delta = c.delta;
    cfg.alpha = c.alpha;
    cfg.beta = c.beta;
    cfg.budget = c.budget;
    let defaults = ScheduleKnobs::default();
    let algo_rho = if mode == Mode::Adversary { c.algo_rho } else { c.rho };
    cfg.knobs = ScheduleKnobs {
        rho: algo_rho.unwrap_or(defaults.rho),
        rho1: c.rho1.unwrap_or(defaults.rho1),
        rho2: c.rho2.unwrap_or(defaults.rho2),
    };
    if mode == Mode::Adversary {
        if let Some(r) = c.rho {
            cfg.adversary_rho = r;
        }
    }
    cfg.c = c.c_const;
    cfg.trials = c.trials;
    cfg.master_seed = c.seed;
    cfg.threads = c.threads;
    cfg.timing = c.timing;
    cfg
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn run_experiment(mode: Mode, c: &Common) -> Result<(), Failure> {
    let cfg = config(mode, c);
    cfg.validate()?;
    let (rows, summary) = harness::run_trials(&cfg)?;
    if let Some(path) = &c.out {
        let out = create(path)?;
        match c.format {
            Format::Csv => harness::write_csv(&rows, out)?,
            Format::Json => harness::write_json(&rows, &summary, out)?,
        }
    }
    if let Some(path) = &c.trace {
        harness::write_trial_trace(&cfg, 0, create(path)?)?;
    }
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, &summary).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(lock)?;
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let cfg = config(args.mode.into(), &args.common);
    let rows = harness::sweep(&cfg, args.param, &args.values)?;
    if let Some(path) = &args.common.out {
        serde_json::to_writer_pretty(create(path)?, &rows).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    for row in &rows {
        serde_json::to_writer(&mut lock, row).map_err(|e| Failure::Runtime(e.to_string()))?;
        writeln!(lock)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::FixedConfidence(c) => run_experiment(Mode::FixedConfidence, c),
        Command::FixedBudget(c) => run_experiment(Mode::FixedBudget, c),
        Command::Baseline(c) => run_experiment(Mode::Baseline, c),
        Command::ReduceAvg(c) => run_experiment(Mode::ReductionAvg, c),
        Command::ReduceHalf(c) => run_experiment(Mode::ReductionHalf, c),
        Command::ReduceEsssup(c) => run_experiment(Mode::ReductionEsssup, c),
        Command::MultiArm(c) => run_experiment(Mode::MultiArm, c),
        Command::Adversary(c) => run_experiment(Mode::Adversary, c),
        Command::Sweep(s) => run_sweep(s),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
