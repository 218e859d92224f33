//! Deterministic Monte Carlo trials.
//!
//! Every trial gets its own environment seeded by [`derive_seed`], so results
//! do not depend on how trials are spread over worker threads. Rows are
//! collected in trial order.

use std::env;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{run_adversarial, AdversarySettings};
use crate::error::{domain, Error, Result};
use crate::fisher::rate_constant;
use crate::fixed_budget::{
    build_schedule, fixed_budget_arm, reduce_alpha_above_half, reduce_ess_sup, reduce_unknown_alpha_avg,
    run_fixed_budget, run_multi_arm, run_uniform_allocation, BudgetSchedule, BudgetScheduleParams, ScheduleKnobs,
};
use crate::fixed_confidence::{solve_fixed_confidence, ConfidenceParams, DEFAULT_C};
use crate::numeric::{mix64, wilson_interval, GOLDEN_GAMMA, Z95};
use crate::reservoir::{BanditEnv, Reservoir};

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "INFEXPLORE_THREADS";

const SEED_SALT: u64 = 0x5851_f42d_4c95_7f2d;

/// Per-trial seed. For a fixed master seed the map is injective in the trial
/// id, and for a fixed trial id it is injective in the master seed.
pub fn derive_seed(master_seed: u64, trial: u64) -> u64 {
    mix64(mix64(master_seed ^ SEED_SALT) ^ mix64(trial.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    FixedConfidence,
    FixedBudget,
    /// Uniform-allocation baseline under the fixed-budget target.
    Baseline,
    ReductionAvg,
    ReductionHalf,
    ReductionEsssup,
    MultiArm,
    Adversary,
}

/// Everything needed to run a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Reservoir in the mini-language (unused in adversary mode).
    pub reservoir: String,
    pub eta: Option<f64>,
    /// Lower edge of the quantile band in the averaged reduction.
    pub eta2: Option<f64>,
    pub eps: Option<f64>,
    /// Target slack of the essential-supremum reduction.
    pub eps1: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub budget: Option<u64>,
    /// Schedule knobs of the fixed-budget algorithm.
    pub knobs: ScheduleKnobs,
    /// Batch-set growth of the adversary.
    pub adversary_rho: f64,
    pub c: f64,
    pub trials: u64,
    pub master_seed: u64,
    /// Worker threads; falls back to `INFEXPLORE_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
    /// Record wall-clock time per trial (otherwise the `ns` column is 0,
    /// keeping row output byte-reproducible).
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, reservoir: impl Into<String>) -> Self {
        ExperimentConfig {
            mode,
            reservoir: reservoir.into(),
            eta: None,
            eta2: None,
            eps: None,
            eps1: None,
            delta: None,
            alpha: None,
            beta: None,
            budget: None,
            knobs: ScheduleKnobs::default(),
            adversary_rho: 0.25,
            c: DEFAULT_C,
            trials: 1,
            master_seed: 0,
            threads: None,
            timing: false,
        }
    }

    fn need<T: Copy>(&self, v: Option<T>, name: &str) -> Result<T> {
        v.ok_or_else(|| Error::Domain(format!("{:?} mode requires --{name}", self.mode)))
    }

    /// Checks that the parameters the mode needs are present.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return domain("trials must be at least 1");
        }
        match self.mode {
            Mode::FixedConfidence => {
                self.need(self.eta, "eta")?;
                self.need(self.eps, "eps")?;
                self.need(self.delta, "delta")?;
            }
            Mode::FixedBudget | Mode::MultiArm => {
                self.need(self.alpha, "alpha")?;
                self.need(self.beta, "beta")?;
                self.need(self.budget, "budget")?;
            }
            Mode::Baseline => {
                self.need(self.beta, "beta")?;
                self.need(self.budget, "budget")?;
            }
            Mode::ReductionAvg => {
                self.need(self.eta, "eta")?;
                self.need(self.eta2, "eta2")?;
                self.need(self.eps, "eps")?;
                self.need(self.budget, "budget")?;
            }
            Mode::ReductionHalf => {
                self.need(self.eta, "eta")?;
                self.need(self.eps, "eps")?;
                self.need(self.budget, "budget")?;
            }
            Mode::ReductionEsssup => {
                self.need(self.eps, "eps")?;
                self.need(self.eps1, "eps1")?;
                self.need(self.budget, "budget")?;
            }
            Mode::Adversary => {
                self.need(self.alpha, "alpha")?;
                self.need(self.beta, "beta")?;
                self.need(self.eta, "eta")?;
                self.need(self.budget, "budget")?;
            }
        }
        Ok(())
    }
}

/// One trial's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub trial: u64,
    pub seed: u64,
    /// True mean of the output arm (smallest accepted mean in multi-arm
    /// mode, forced mean in adversary mode).
    pub true_mean: Option<f64>,
    pub samples: u64,
    pub arms: u64,
    pub success: bool,
    pub ns: u64,
    #[serde(skip)]
    pub detail: RowDetail,
}

/// Mode-specific per-trial data feeding the summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RowDetail {
    pub accepted: u64,
    pub bad_accepted: u64,
    pub enough_accepted: bool,
    pub cost: f64,
    pub aborted: bool,
    pub degenerate: bool,
    pub estimation_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiArmSummary {
    pub mean_accepted: f64,
    /// Fraction of trials accepting at least `⌈ln N⌉` arms.
    pub enough_fraction: f64,
    /// Among all accepted arms, the fraction with mean below `β`.
    pub bad_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarySummary {
    pub mean_cost: f64,
    pub max_cost: f64,
    pub aborted_runs: u64,
    /// `Cost / (N / ln² N)` averaged over completed runs.
    pub mean_normalized_cost: f64,
}

/// Aggregates over all rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub failure_rate: f64,
    /// Wilson 95% interval for the failure rate.
    pub failure_ci: (f64, f64),
    pub mean_samples: f64,
    pub sd_samples: f64,
    /// `−ln(δ̂) ln² N / N` (fixed-budget mode). With no failures the Wilson
    /// upper bound stands in for `δ̂`.
    pub rate_diagnostic: Option<f64>,
    pub rate_constant: Option<f64>,
    pub degenerate_runs: u64,
    pub estimation_exhausted_runs: u64,
    pub multi_arm: Option<MultiArmSummary>,
    pub adversary: Option<AdversarySummary>,
}

pub fn summarize(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Summary {
    let n = rows.len() as u64;
    let successes = rows.iter().filter(|r| r.success).count() as u64;
    let failures = n - successes;
    let nf = n.max(1) as f64;
    let mean = rows.iter().map(|r| r.samples as f64).sum::<f64>() / nf;
    let var = if n > 1 {
        rows.iter().map(|r| (r.samples as f64 - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let failure_ci = wilson_interval(failures, n, Z95);
    let failure_rate = failures as f64 / nf;
    let (rate_diagnostic, rate_const) = match (cfg.mode, cfg.budget, cfg.alpha, cfg.beta) {
        (Mode::FixedBudget, Some(budget), Some(a), Some(b)) => {
            let delta_hat = if failures == 0 { failure_ci.1 } else { failure_rate };
            let ln_n = (budget as f64).ln();
            (Some(-delta_hat.ln() * ln_n * ln_n / budget as f64), rate_constant(a, b).ok())
        }
        _ => (None, None),
    };
    let multi_arm = (cfg.mode == Mode::MultiArm).then(|| {
        let accepted: u64 = rows.iter().map(|r| r.detail.accepted).sum();
        let bad: u64 = rows.iter().map(|r| r.detail.bad_accepted).sum();
        MultiArmSummary {
            mean_accepted: accepted as f64 / nf,
            enough_fraction: rows.iter().filter(|r| r.detail.enough_accepted).count() as f64 / nf,
            bad_fraction: if accepted == 0 { 0.0 } else { bad as f64 / accepted as f64 },
        }
    });
    let adversary = (cfg.mode == Mode::Adversary).then(|| {
        let done: Vec<&ResultRow> = rows.iter().filter(|r| !r.detail.aborted).collect();
        let k = done.len().max(1) as f64;
        let budget = cfg.budget.unwrap_or(2) as f64;
        let scale = budget / budget.ln().powi(2);
        AdversarySummary {
            mean_cost: done.iter().map(|r| r.detail.cost).sum::<f64>() / k,
            max_cost: done.iter().map(|r| r.detail.cost).fold(0.0, f64::max),
            aborted_runs: (rows.len() - done.len()) as u64,
            mean_normalized_cost: done.iter().map(|r| r.detail.cost / scale).sum::<f64>() / k,
        }
    });
    Summary {
        mode: cfg.mode,
        trials: n,
        successes,
        success_rate: successes as f64 / nf,
        failure_rate,
        failure_ci,
        mean_samples: mean,
        sd_samples: var.sqrt(),
        rate_diagnostic,
        rate_constant: rate_const,
        degenerate_runs: rows.iter().filter(|r| r.detail.degenerate).count() as u64,
        estimation_exhausted_runs: rows.iter().filter(|r| r.detail.estimation_exhausted).count() as u64,
        multi_arm,
        adversary,
    }
}

enum Prepared {
    Plain(Reservoir),
    Scheduled(Reservoir, BudgetSchedule),
    Adversary(BudgetSchedule),
}

fn schedule_for(cfg: &ExperimentConfig, budget: u64) -> Result<BudgetSchedule> {
    build_schedule(BudgetScheduleParams {
        budget,
        knobs: cfg.knobs,
        alpha: cfg.need(cfg.alpha, "alpha")?,
        beta: cfg.need(cfg.beta, "beta")?,
    })
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    if cfg.mode == Mode::Adversary {
        return Ok(Prepared::Adversary(schedule_for(cfg, cfg.budget.unwrap())?));
    }
    let res: Reservoir = cfg.reservoir.parse()?;
    Ok(match cfg.mode {
        Mode::FixedBudget | Mode::MultiArm => {
            let s = schedule_for(cfg, cfg.budget.unwrap())?;
            Prepared::Scheduled(res, s)
        }
        _ => Prepared::Plain(res),
    })
}

fn run_one(cfg: &ExperimentConfig, prepared: &Prepared, trial: u64) -> Result<ResultRow> {
    let seed = derive_seed(cfg.master_seed, trial);
    let clock = cfg.timing.then(Instant::now);
    let mut row = ResultRow {
        trial,
        seed,
        true_mean: None,
        samples: 0,
        arms: 0,
        success: false,
        ns: 0,
        detail: RowDetail::default(),
    };
    let budget = cfg.budget.unwrap_or(0);
    let record = match prepared {
        Prepared::Adversary(schedule) => {
            let settings = AdversarySettings::new(
                budget,
                cfg.adversary_rho,
                cfg.alpha.unwrap(),
                cfg.beta.unwrap(),
                cfg.eta.unwrap(),
                seed,
            );
            let run = run_adversarial(
                &settings,
                Box::new(|src| fixed_budget_arm(src, schedule, budget, None).map(Some)),
            )?;
            row.detail.cost = run.ledger.total_cost();
            row.detail.aborted = run.aborted.is_some();
            run.record
        }
        Prepared::Scheduled(res, schedule) => {
            let mut env = BanditEnv::new(res.clone(), seed);
            if cfg.mode == Mode::MultiArm {
                let m = run_multi_arm(&mut env, schedule, budget)?;
                row.true_mean = m.accepted_means.iter().copied().reduce(f64::min);
                row.samples = m.samples_used;
                row.arms = m.arms_touched;
                row.success = m.success;
                row.detail.accepted = m.accepted.len() as u64;
                row.detail.bad_accepted = m.bad_accepted;
                row.detail.enough_accepted = m.accepted.len() as u64 >= m.required;
                row.ns = clock.map_or(0, |c| c.elapsed().as_nanos() as u64);
                return Ok(row);
            }
            run_fixed_budget(&mut env, schedule, budget, false)?
        }
        Prepared::Plain(res) => {
            let mut env = BanditEnv::new(res.clone(), seed);
            match cfg.mode {
                Mode::FixedConfidence => {
                    let p = ConfidenceParams::with_constant(cfg.eta.unwrap(), cfg.eps.unwrap(), cfg.delta.unwrap(), cfg.c)?;
                    solve_fixed_confidence(&mut env, &p)?
                }
                Mode::Baseline => run_uniform_allocation(&mut env, budget, cfg.beta.unwrap())?,
                Mode::ReductionAvg => {
                    reduce_unknown_alpha_avg(&mut env, budget, cfg.eta.unwrap(), cfg.eta2.unwrap(), cfg.eps.unwrap(), cfg.knobs)?
                }
                Mode::ReductionHalf => reduce_alpha_above_half(&mut env, budget, cfg.eta.unwrap(), cfg.eps.unwrap(), cfg.knobs)?,
                Mode::ReductionEsssup => reduce_ess_sup(&mut env, budget, cfg.eps.unwrap(), cfg.eps1.unwrap(), cfg.knobs)?,
                _ => unreachable!("scheduled modes handled above"),
            }
        }
    };
    row.true_mean = record.true_mean;
    row.samples = record.samples_used;
    row.arms = record.arms_touched;
    row.success = record.success;
    row.detail.degenerate = record.degenerate_params;
    row.detail.estimation_exhausted = record.estimation_exhausted;
    row.ns = clock.map_or(0, |c| c.elapsed().as_nanos() as u64);
    Ok(row)
}

fn thread_count(cfg: &ExperimentConfig) -> Option<usize> {
    cfg.threads
        .or_else(|| env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&t| t > 0)
}

/// Runs all trials on a bounded pool and returns rows in trial order with
/// their summary.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<(Vec<ResultRow>, Summary)> {
    let prepared = prepare(cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(cfg) {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Io(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<ResultRow> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_one(cfg, &prepared, t))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(cfg, &rows);
    Ok((rows, summary))
}

/// Re-runs one trial with tracing and writes JSON lines: checkpoint events
/// in fixed-budget mode, cost-ledger entries in adversary mode.
pub fn write_trial_trace<W: Write>(cfg: &ExperimentConfig, trial: u64, out: W) -> Result<()> {
    let seed = derive_seed(cfg.master_seed, trial);
    match prepare(cfg)? {
        Prepared::Scheduled(res, schedule) if cfg.mode == Mode::FixedBudget => {
            let mut env = BanditEnv::new(res, seed);
            run_fixed_budget(&mut env, &schedule, cfg.budget.unwrap(), true)?.write_trace(out)
        }
        Prepared::Adversary(schedule) => {
            let budget = cfg.budget.unwrap();
            let settings = AdversarySettings::new(
                budget,
                cfg.adversary_rho,
                cfg.alpha.unwrap(),
                cfg.beta.unwrap(),
                cfg.eta.unwrap(),
                seed,
            );
            let run = run_adversarial(
                &settings,
                Box::new(|src| fixed_budget_arm(src, &schedule, budget, None).map(Some)),
            )?;
            run.ledger.write_jsonl(out)
        }
        _ => domain("traces are available in fixed-budget and adversary modes"),
    }
}

/// Writes rows as CSV with header `trial,seed,true_mean,samples,arms,success,ns`.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["trial", "seed", "true_mean", "samples", "arms", "success", "ns"])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows and summary as one JSON document.
pub fn write_json<W: Write>(rows: &[ResultRow], summary: &Summary, out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        rows: &'a [ResultRow],
        summary: &'a Summary,
    }
    serde_json::to_writer_pretty(out, &Doc { rows, summary }).map_err(|e| Error::Io(e.to_string()))
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Budget,
    Delta,
    Eta,
    Eps,
    Alpha,
    Beta,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "budget" | "n" => SweepParam::Budget,
            "delta" => SweepParam::Delta,
            "eta" => SweepParam::Eta,
            "eps" => SweepParam::Eps,
            "alpha" => SweepParam::Alpha,
            "beta" => SweepParam::Beta,
            other => return Err(Error::Parse { position: 0, message: format!("unknown sweep parameter {other:?}") }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: Summary,
}

/// Runs the base experiment once per value of `param`.
pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match param {
                SweepParam::Budget => {
                    if !(value >= 1.0 && value.fract() == 0.0) {
                        return domain(format!("budget value {value} is not a positive integer"));
                    }
                    cfg.budget = Some(value as u64);
                }
                SweepParam::Delta => cfg.delta = Some(value),
                SweepParam::Eta => cfg.eta = Some(value),
                SweepParam::Eps => cfg.eps = Some(value),
                SweepParam::Alpha => cfg.alpha = Some(value),
                SweepParam::Beta => cfg.beta = Some(value),
            }
            let (_, summary) = run_trials(&cfg)?;
            Ok(SweepRow { value, summary })
        })
        .collect()
}
