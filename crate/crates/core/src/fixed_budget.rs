//! Fixed-budget exploration with moving rejection thresholds.
//!
//! One arm is studied at a time and checked at increasing pull counts
//! `b_0 < b_1 < …`. Early checks compare the raw empirical mean with a
//! threshold starting at `α − ϱ`; once an arm has `ln⁴ N` pulls the checks
//! move to angle space, where the threshold falls by a fixed fraction of the
//! Fisher distance `d_F(α, β)` per checkpoint. A rejected arm is discarded
//! for a fresh one; when the budget runs out the arm under study is output.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fisher::{fisher_distance, theta_unchecked};
use crate::fixed_confidence::{estimate_quantile_ln, DEFAULT_C};
use crate::numeric::ceil_count;
use crate::record::{Decision, Phase, RunRecord, TraceEvent};
use crate::reservoir::{ArmId, ArmSource, BanditEnv};

/// Slack used when comparing empirical ratios with floating thresholds, so
/// that a mean sitting exactly on a threshold is treated as on it.
const CMP_SLACK: f64 = 1e-12;

/// Smallest gap kept between clamped parameters.
const MIN_GAP: f64 = 1e-6;

/// The three schedule knobs `(ϱ, ϱ₁, ϱ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleKnobs {
    /// Geometric growth of checkpoint sizes.
    pub rho: f64,
    /// Scale of the first checkpoint relative to `ln² N`.
    pub rho1: f64,
    /// Slack in the angle-space threshold decrement.
    pub rho2: f64,
}

impl Default for ScheduleKnobs {
    fn default() -> Self {
        ScheduleKnobs { rho: 0.05, rho1: 0.05, rho2: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetScheduleParams {
    pub budget: u64,
    pub knobs: ScheduleKnobs,
    pub alpha: f64,
    pub beta: f64,
}

/// Precomputed checkpoints and thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetSchedule {
    pub params: BudgetScheduleParams,
    /// Index of the last raw-mean checkpoint.
    pub k0: usize,
    /// Strictly increasing checkpoint sizes, up to the first one at or
    /// beyond the multi-arm budget for `N`.
    pub sizes: Vec<u64>,
    ln_n: f64,
    early_step: f64,
    theta_start: f64,
    theta_step: f64,
}

/// Budget `Ñ = N + ⌈2N/√ln N⌉` of the multi-arm variant.
pub fn multi_arm_budget(n: u64) -> u64 {
    let ln_n = (n as f64).ln();
    n + ceil_count(2.0 * n as f64 / ln_n.sqrt())
}

/// Pull count `M = ⌈N / ln^{3/2} N⌉` after which the multi-arm variant accepts an arm.
pub fn multi_arm_acceptance_pulls(n: u64) -> u64 {
    ceil_count(n as f64 / (n as f64).ln().powf(1.5))
}

pub fn build_schedule(params: BudgetScheduleParams) -> Result<BudgetSchedule> {
    let BudgetScheduleParams { budget, knobs, alpha, beta } = params;
    let ScheduleKnobs { rho, rho1, rho2 } = knobs;
    for (name, v) in [("rho", rho), ("rho1", rho1), ("rho2", rho2)] {
        if !(v > 0.0 && v < 1.0) {
            return domain(format!("{name} = {v} outside (0, 1)"));
        }
    }
    if !(0.0 < beta && beta < alpha && alpha < 1.0) {
        return domain(format!("schedule needs 0 < beta < alpha < 1, got alpha={alpha} beta={beta}"));
    }
    if budget < 2 {
        return domain(format!("budget {budget} below 2"));
    }
    if alpha - 2.0 * rho < beta - 1e-12 {
        return domain(format!(
            "alpha - 2 rho = {} lies below beta = {beta}; angle thresholds would start under theta(beta)",
            alpha - 2.0 * rho
        ));
    }
    let ln_n = (budget as f64).ln();
    let ln2 = ln_n * ln_n;
    let ln4 = ln2 * ln2;
    let b0 = ceil_count(rho1 * ln2).max(1);
    let growth = 1.0 + rho;
    let ratio = ln4 / b0 as f64;
    let k0 = if ratio <= 1.0 { 0 } else { ceil_count(ratio.ln() / growth.ln()) as usize };

    let horizon = multi_arm_budget(budget).max(budget);
    let mut sizes = vec![b0];
    let mut k = 1usize;
    while *sizes.last().unwrap() < horizon {
        let prev = *sizes.last().unwrap();
        let raw = if k <= k0 {
            ceil_count(b0 as f64 * growth.powi(k as i32))
        } else {
            let base = sizes[k0] as f64;
            ceil_count(growth.powi((k - k0) as i32) * base)
        };
        sizes.push(raw.max(prev + 1));
        k += 1;
    }
    let d = fisher_distance(alpha, beta)?;
    Ok(BudgetSchedule {
        params,
        k0,
        sizes,
        ln_n,
        early_step: 1.0 / ln_n.sqrt(),
        theta_start: theta_unchecked(alpha - 2.0 * rho),
        theta_step: d * rho * (1.0 - rho2) / ln_n,
    })
}

impl BudgetSchedule {
    pub fn b0(&self) -> u64 {
        self.sizes[0]
    }

    /// Size of checkpoint `k`, `None` beyond the precomputed horizon.
    pub fn size(&self, k: usize) -> Option<u64> {
        self.sizes.get(k).copied()
    }

    pub fn ln_budget(&self) -> f64 {
        self.ln_n
    }

    pub fn phase(&self, k: usize) -> Phase {
        if k == 0 {
            Phase::Initial
        } else if k <= self.k0 {
            Phase::Early
        } else {
            Phase::Fisher
        }
    }

    /// Unclamped threshold of checkpoint `k`: a raw mean in the first two
    /// phases, an angle in the Fisher phase.
    pub fn raw_threshold(&self, k: usize) -> f64 {
        let alpha = self.params.alpha;
        let rho = self.params.knobs.rho;
        match self.phase(k) {
            Phase::Initial => alpha - rho,
            Phase::Early => alpha - rho - k as f64 * self.early_step,
            _ => self.theta_start - (k - self.k0) as f64 * self.theta_step,
        }
    }

    /// Threshold clamped into `[0, 1]` (raw phases) or `[0, π]` (Fisher phase).
    pub fn threshold(&self, k: usize) -> f64 {
        let t = self.raw_threshold(k);
        match self.phase(k) {
            Phase::Fisher => t.clamp(0.0, std::f64::consts::PI),
            _ => t.clamp(0.0, 1.0),
        }
    }

    /// Angle-space decrement per Fisher-phase checkpoint.
    pub fn theta_step(&self) -> f64 {
        self.theta_step
    }

    fn decide(&self, k: usize, mean: f64) -> Decision {
        let t = self.raw_threshold(k);
        if t < 0.0 {
            return Decision::Vacuous;
        }
        let stat = match self.phase(k) {
            Phase::Fisher => theta_unchecked(mean),
            _ => mean,
        };
        if stat <= t + CMP_SLACK {
            Decision::Reject
        } else {
            Decision::Continue
        }
    }

    /// Whether an arm with empirical mean `mean` at checkpoint `k` is rejected.
    pub fn should_reject(&self, k: usize, mean: f64) -> bool {
        self.decide(k, mean) == Decision::Reject
    }
}

struct Study<'t> {
    arm: ArmId,
    pulls: u64,
    successes: u64,
    next_checkpoint: usize,
    trace: Option<&'t mut Vec<TraceEvent>>,
}

enum Step {
    /// Budget gone while studying the current arm.
    Exhausted,
    Rejected,
    /// The arm reached the acceptance length without being rejected.
    Accepted,
}

/// Pulls the current arm through its checkpoints until it is rejected,
/// reaches `accept_at` pulls, or `left` runs out.
fn study_arm<S: ArmSource + ?Sized>(
    src: &mut S,
    schedule: &BudgetSchedule,
    st: &mut Study<'_>,
    left: &mut u64,
    accept_at: Option<u64>,
) -> Result<Step> {
    loop {
        let checkpoint = schedule.size(st.next_checkpoint);
        let mut goal = checkpoint.unwrap_or(u64::MAX);
        if let Some(m) = accept_at {
            goal = goal.min(m);
        }
        let need = goal - st.pulls;
        let take = need.min(*left);
        if take > 0 {
            match src.pull_many(st.arm, take) {
                Ok(s) => st.successes += s,
                Err(Error::BudgetExhausted) => return Ok(Step::Exhausted),
                Err(e) => return Err(e),
            }
            st.pulls += take;
            *left -= take;
        }
        if take < need {
            return Ok(Step::Exhausted);
        }
        if checkpoint == Some(st.pulls) {
            let k = st.next_checkpoint;
            let mean = st.successes as f64 / st.pulls as f64;
            let decision = schedule.decide(k, mean);
            if let Some(tr) = st.trace.as_deref_mut() {
                tr.push(TraceEvent {
                    arm: st.arm,
                    checkpoint: k,
                    phase: schedule.phase(k),
                    pulls: st.pulls,
                    empirical_mean: mean,
                    threshold: schedule.raw_threshold(k),
                    decision,
                });
            }
            st.next_checkpoint += 1;
            if decision == Decision::Reject {
                return Ok(Step::Rejected);
            }
        }
        if accept_at == Some(st.pulls) {
            return Ok(Step::Accepted);
        }
    }
}

/// Runs the fixed-budget algorithm on any arm source using at most `budget`
/// further samples and returns the output arm.
pub fn fixed_budget_arm<S: ArmSource + ?Sized>(
    src: &mut S,
    schedule: &BudgetSchedule,
    budget: u64,
    trace: Option<&mut Vec<TraceEvent>>,
) -> Result<ArmId> {
    let mut left = budget;
    let mut st = Study { arm: src.fresh_arm(), pulls: 0, successes: 0, next_checkpoint: 0, trace };
    loop {
        match study_arm(src, schedule, &mut st, &mut left, None)? {
            Step::Exhausted | Step::Accepted => return Ok(st.arm),
            Step::Rejected => {
                if left == 0 {
                    return Ok(st.arm);
                }
                st.arm = src.fresh_arm();
                st.pulls = 0;
                st.successes = 0;
                st.next_checkpoint = 0;
            }
        }
    }
}

/// Fixed-budget run on a seeded environment; success means the output arm's
/// true mean is at least `β`.
pub fn run_fixed_budget(
    env: &mut BanditEnv,
    schedule: &BudgetSchedule,
    budget: u64,
    with_trace: bool,
) -> Result<RunRecord> {
    let start = env.samples_used();
    env.set_budget(Some(start + budget));
    let mut trace = with_trace.then(Vec::new);
    let arm = fixed_budget_arm(env, schedule, budget, trace.as_mut())?;
    let mut rec = RunRecord::new(schedule.params.beta);
    finish(env, &mut rec, arm);
    rec.trace = trace;
    Ok(rec)
}

fn finish(env: &mut BanditEnv, rec: &mut RunRecord, arm: ArmId) {
    let p = env.true_mean(arm);
    rec.chosen = Some(arm);
    rec.true_mean = Some(p);
    rec.success = p >= rec.target;
    rec.samples_used = env.samples_used();
    rec.arms_touched = env.arms_touched();
}

/// Outcome of the multi-arm variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiArmRecord {
    pub accepted: Vec<ArmId>,
    pub accepted_means: Vec<f64>,
    /// `⌈ln N⌉`, the number of accepted arms required for success.
    pub required: u64,
    pub acceptance_pulls: u64,
    pub samples_used: u64,
    pub arms_touched: u64,
    /// At least `required` arms accepted and all of them have mean `≥ β`.
    pub success: bool,
    pub bad_accepted: u64,
}

/// Multi-arm variant: same checks, but any arm surviving `M` pulls is
/// accepted and exploration continues, with total budget `Ñ`.
pub fn run_multi_arm(env: &mut BanditEnv, schedule: &BudgetSchedule, budget: u64) -> Result<MultiArmRecord> {
    let total = multi_arm_budget(budget);
    let accept_at = multi_arm_acceptance_pulls(budget).max(1);
    let start = env.samples_used();
    env.set_budget(Some(start + total));
    let mut left = total;
    let mut accepted = Vec::new();
    let mut st = Study { arm: env.fresh_arm(), pulls: 0, successes: 0, next_checkpoint: 0, trace: None };
    while left > 0 {
        match study_arm(env, schedule, &mut st, &mut left, Some(accept_at))? {
            Step::Exhausted => break,
            Step::Accepted => accepted.push(st.arm),
            Step::Rejected => {}
        }
        st.arm = env.fresh_arm();
        st.pulls = 0;
        st.successes = 0;
        st.next_checkpoint = 0;
    }
    let beta = schedule.params.beta;
    let accepted_means: Vec<f64> = accepted.iter().map(|&a| env.true_mean(a)).collect();
    let bad = accepted_means.iter().filter(|&&p| p < beta).count() as u64;
    let required = ceil_count((budget as f64).ln());
    Ok(MultiArmRecord {
        success: accepted.len() as u64 >= required && bad == 0,
        accepted,
        accepted_means,
        required,
        acceptance_pulls: accept_at,
        samples_used: env.samples_used(),
        arms_touched: env.arms_touched(),
        bad_accepted: bad,
    })
}

/// Baseline: `⌊√N⌋` fresh arms, `⌊√N⌋` pulls each, output the best
/// empirical mean (first one on ties).
pub fn uniform_allocation_arm<S: ArmSource + ?Sized>(src: &mut S, budget: u64) -> Result<ArmId> {
    let m = budget.isqrt();
    let mut best: Option<(ArmId, u64)> = None;
    for _ in 0..m.max(1) {
        let arm = src.fresh_arm();
        let s = src.pull_many(arm, m)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((arm, s));
        }
    }
    Ok(best.unwrap().0)
}

pub fn run_uniform_allocation(env: &mut BanditEnv, budget: u64, target: f64) -> Result<RunRecord> {
    let start = env.samples_used();
    env.set_budget(Some(start + budget));
    let arm = uniform_allocation_arm(env, budget)?;
    let mut rec = RunRecord::new(target);
    finish(env, &mut rec, arm);
    Ok(rec)
}

/// Clamps `(α, β)` into the region accepted by [`build_schedule`]; the flag
/// reports whether anything moved.
pub fn clamp_run_params(alpha: f64, beta: f64, rho: f64) -> (f64, f64, bool) {
    let a = alpha.clamp(2.0 * rho + 2.0 * MIN_GAP, 1.0 - MIN_GAP);
    let b = beta.clamp(MIN_GAP, a - 2.0 * rho);
    let moved = (a - alpha).abs() > 1e-12 || (b - beta).abs() > 1e-12;
    (a, b, moved)
}

/// Runs the final fixed-budget stage of a reduction on whatever budget the
/// estimation stage left, or outputs the last estimation arm.
fn reduction_tail(
    env: &mut BanditEnv,
    rec: &mut RunRecord,
    budget_end: u64,
    alpha: f64,
    beta: f64,
    knobs: ScheduleKnobs,
) -> Result<()> {
    let left = budget_end.saturating_sub(env.samples_used());
    if left < 2 {
        rec.estimation_exhausted = true;
        let arm = env.last_pulled().unwrap_or_else(|| env.fresh_arm());
        finish(env, rec, arm);
        return Ok(());
    }
    let (a, b, moved) = clamp_run_params(alpha, beta, knobs.rho);
    rec.degenerate_params |= moved;
    let schedule = build_schedule(BudgetScheduleParams { budget: left, knobs, alpha: a, beta: b })?;
    env.set_budget(Some(budget_end));
    let arm = fixed_budget_arm(env, &schedule, left, None)?;
    finish(env, rec, arm);
    Ok(())
}

/// Estimation outcome of a reduction: `Some(value)`, or `None` when the
/// budget ran out during estimation.
fn estimation_or_exhausted<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::BudgetExhausted) => Ok(None),
        Err(e) => Err(e),
    }
}

fn exhausted_output(env: &mut BanditEnv, rec: &mut RunRecord) {
    rec.estimation_exhausted = true;
    let arm = env.last_pulled().unwrap_or_else(|| env.fresh_arm());
    finish(env, rec, arm);
}

/// `ln^{-1/3} N`, the vanishing accuracy used by the reductions, clamped to `1/2`.
pub fn vanishing_scale(budget: u64) -> (f64, bool) {
    let v = (budget as f64).ln().powf(-1.0 / 3.0);
    if v > 0.5 {
        (0.5, true)
    } else {
        (v, false)
    }
}

/// `ln(1/δ')` with `δ' = e^{−10N/ln² N}`.
fn ln_inv_tiny_delta(budget: u64) -> f64 {
    let ln_n = (budget as f64).ln();
    (10.0 * budget as f64 / (ln_n * ln_n)).max(2f64.ln())
}

/// Number of bands `J = ⌈6 / (ε (η1 − η2))⌉` in the quantile-average reduction.
pub fn band_count(eps: f64, eta1: f64, eta2: f64) -> u64 {
    ceil_count(6.0 / (eps * (eta1 - eta2)))
}

fn check_budget(budget: u64) -> Result<()> {
    if budget < 3 {
        return domain(format!("budget {budget} below 3"));
    }
    Ok(())
}

/// Unknown quantile, averaged target: estimates the quantile on `J` thin
/// bands covering `[1 − η1, 1 − η2]`, averages them into `α̂`, then runs the
/// fixed-budget algorithm with `(α̂ − ε/4, α̂ − ε/2)`. Success is judged
/// against the quantile average over the band minus `ε`.
pub fn reduce_unknown_alpha_avg(
    env: &mut BanditEnv,
    budget: u64,
    eta1: f64,
    eta2: f64,
    eps: f64,
    knobs: ScheduleKnobs,
) -> Result<RunRecord> {
    check_budget(budget)?;
    if !(0.0 < eta2 && eta2 < eta1 && eta1 <= 0.5) {
        return domain(format!("need 0 < eta2 < eta1 <= 1/2, got eta1={eta1} eta2={eta2}"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("eps = {eps} outside (0, 1)"));
    }
    let target = env.reservoir().quantile_average(eta1, eta2)? - eps;
    let mut rec = RunRecord::new(target);
    let budget_end = env.samples_used() + budget;
    env.set_budget(Some(budget_end));
    let (eps_est, clamped) = vanishing_scale(budget);
    rec.degenerate_params |= clamped;
    let bands = band_count(eps, eta1, eta2);
    let ln_inv_delta = ln_inv_tiny_delta(budget) + (bands as f64).ln();
    let width = (eta1 - eta2) / bands as f64;
    let mut total = 0.0;
    for j in 0..bands {
        let upper = ((bands - j) as f64 * eta1 + j as f64 * eta2) / bands as f64;
        let est = estimate_quantile_ln(env, upper, width.min(upper), eps_est, ln_inv_delta, DEFAULT_C);
        match estimation_or_exhausted(est)? {
            Some(e) => total += e.alpha_hat,
            None => {
                exhausted_output(env, &mut rec);
                return Ok(rec);
            }
        }
    }
    let alpha_hat = total / bands as f64;
    rec.estimate = Some(alpha_hat);
    reduction_tail(env, &mut rec, budget_end, alpha_hat - eps / 4.0, alpha_hat - eps / 2.0, knobs)?;
    Ok(rec)
}

/// Unknown quantile in the upper half: one estimation at
/// `(η, ln^{-1/3} N)` with accuracy `ln^{-1/3} N`, then the fixed-budget
/// algorithm with `α = α̂`, `β = α̂ − (ε − 2ε')`. Success is judged against
/// `G⁻¹(1 − η) − ε`.
pub fn reduce_alpha_above_half(
    env: &mut BanditEnv,
    budget: u64,
    eta: f64,
    eps: f64,
    knobs: ScheduleKnobs,
) -> Result<RunRecord> {
    check_budget(budget)?;
    if !(eta > 0.0 && eta <= 0.5) {
        return domain(format!("eta = {eta} outside (0, 1/2]"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("eps = {eps} outside (0, 1)"));
    }
    let target = env.reservoir().inverse_cdf(1.0 - eta)? - eps;
    let mut rec = RunRecord::new(target);
    let budget_end = env.samples_used() + budget;
    env.set_budget(Some(budget_end));
    let (eps_est, clamped) = vanishing_scale(budget);
    rec.degenerate_params |= clamped;
    let (mut eta2, _) = vanishing_scale(budget);
    if eta2 >= eta {
        eta2 = eta / 2.0;
        rec.degenerate_params = true;
    }
    let est = estimate_quantile_ln(env, eta, eta2, eps_est, ln_inv_tiny_delta(budget), DEFAULT_C);
    let Some(est) = estimation_or_exhausted(est)? else {
        exhausted_output(env, &mut rec);
        return Ok(rec);
    };
    let alpha_hat = est.alpha_hat - eps_est;
    rec.estimate = Some(alpha_hat);
    let gap = eps - 2.0 * eps_est;
    reduction_tail(env, &mut rec, budget_end, alpha_hat, alpha_hat - gap, knobs)?;
    Ok(rec)
}

/// Essential-supremum target: estimation at `(ln^{-1/3} N, ½ ln^{-1/3} N)`
/// with accuracy `ε1 − ε`, then the fixed-budget algorithm with
/// `α = α̂`, `β = α̂ − ε`. Success is judged against `μ* − ε1`.
pub fn reduce_ess_sup(
    env: &mut BanditEnv,
    budget: u64,
    eps: f64,
    eps1: f64,
    knobs: ScheduleKnobs,
) -> Result<RunRecord> {
    check_budget(budget)?;
    if !(0.0 < eps && eps < eps1 && eps1 < 1.0) {
        return domain(format!("need 0 < eps < eps1 < 1, got eps={eps} eps1={eps1}"));
    }
    let target = env.reservoir().ess_sup() - eps1;
    let mut rec = RunRecord::new(target);
    let budget_end = env.samples_used() + budget;
    env.set_budget(Some(budget_end));
    let (eta1, clamped) = vanishing_scale(budget);
    rec.degenerate_params |= clamped;
    let mut acc = eps1 - eps;
    if acc > 0.5 {
        acc = 0.5;
        rec.degenerate_params = true;
    }
    let est = estimate_quantile_ln(env, eta1, eta1 / 2.0, acc, ln_inv_tiny_delta(budget), DEFAULT_C);
    let Some(est) = estimation_or_exhausted(est)? else {
        exhausted_output(env, &mut rec);
        return Ok(rec);
    };
    let alpha_hat = est.alpha_hat - (eps1 - eps) / 2.0;
    rec.estimate = Some(alpha_hat);
    reduction_tail(env, &mut rec, budget_end, alpha_hat, alpha_hat - eps, knobs)?;
    Ok(rec)
}
