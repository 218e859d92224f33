//! Fixed-confidence exploration: quantile estimation from many lightly
//! sampled arms, then an accept loop that tests fresh arms against the
//! estimate.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numeric::ceil_count;
use crate::record::RunRecord;
use crate::reservoir::{ArmId, ArmSource, BanditEnv};

/// Default multiplier for the sample-count formulas.
pub const DEFAULT_C: f64 = 4.0;

/// `(η, ε, δ)` accuracy target with the sample-count multiplier `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub eta: f64,
    pub eps: f64,
    pub delta: f64,
    pub c: f64,
}

impl ConfidenceParams {
    pub fn new(eta: f64, eps: f64, delta: f64) -> Result<Self> {
        Self::with_constant(eta, eps, delta, DEFAULT_C)
    }

    pub fn with_constant(eta: f64, eps: f64, delta: f64, c: f64) -> Result<Self> {
        check_unit_half("eta", eta)?;
        check_unit_half("eps", eps)?;
        check_unit_half("delta", delta)?;
        check_constant(c)?;
        Ok(ConfidenceParams { eta, eps, delta, c })
    }
}

fn check_unit_half(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 0.5) {
        return domain(format!("{name} = {v} outside (0, 1/2]"));
    }
    Ok(())
}

fn check_constant(c: f64) -> Result<()> {
    if !(c >= 1.0 && c.is_finite()) {
        return domain(format!("constant C = {c} must be at least 1"));
    }
    Ok(())
}

/// Result of quantile estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileEstimate {
    pub alpha_hat: f64,
    /// Arms sampled.
    pub arms: u64,
    /// Pulls per arm.
    pub pulls_per_arm: u64,
    /// Rank (from the top) of the reported empirical mean.
    pub rank: u64,
    pub samples_used: u64,
}

/// Arm count, pulls per arm and rank used by [`estimate_quantile`].
pub fn estimation_sizes(eta1: f64, eta2: f64, eps: f64, ln_inv_delta: f64, c: f64) -> (u64, u64, u64) {
    let arms = ceil_count(c * eta1 * ln_inv_delta / (eta2 * eta2)).max(1);
    let pulls = ceil_count(c * (1.0 / eta2).ln() / (eps * eps)).max(1);
    let rank = ceil_count(arms as f64 * (eta1 - eta2 / 2.0)).clamp(1, arms);
    (arms, pulls, rank)
}

/// Estimates `G⁻¹(1 − η1)` as the `k`-th largest empirical mean of `K` fresh
/// arms, each pulled `n` times.
pub fn estimate_quantile<S: ArmSource + ?Sized>(
    src: &mut S,
    eta1: f64,
    eta2: f64,
    eps: f64,
    delta: f64,
    c: f64,
) -> Result<QuantileEstimate> {
    check_unit_half("delta", delta)?;
    estimate_quantile_ln(src, eta1, eta2, eps, (1.0 / delta).ln(), c)
}

/// [`estimate_quantile`] with the confidence given as `ln(1/δ)`, for
/// confidence levels below the range of `f64`.
pub fn estimate_quantile_ln<S: ArmSource + ?Sized>(
    src: &mut S,
    eta1: f64,
    eta2: f64,
    eps: f64,
    ln_inv_delta: f64,
    c: f64,
) -> Result<QuantileEstimate> {
    check_unit_half("eta1", eta1)?;
    check_unit_half("eta2", eta2)?;
    check_unit_half("eps", eps)?;
    check_constant(c)?;
    if eta2 > eta1 {
        return domain(format!("eta2 = {eta2} exceeds eta1 = {eta1}"));
    }
    if !(ln_inv_delta >= 2f64.ln()) {
        return domain(format!("ln(1/delta) = {ln_inv_delta} below ln 2"));
    }
    let (arms, pulls, rank) = estimation_sizes(eta1, eta2, eps, ln_inv_delta, c);
    let start = src.samples_used();
    // Keeping all K means is fine here: K only gets large when the budget
    // (and hence the environment's own arm table) is large too.
    let mut means = Vec::with_capacity(arms.min(1 << 20) as usize);
    for _ in 0..arms {
        let arm = src.fresh_arm();
        let s = src.pull_many(arm, pulls)?;
        means.push(s as f64 / pulls as f64);
    }
    let idx = (rank - 1) as usize;
    means.select_nth_unstable_by(idx, |a, b| b.total_cmp(a));
    Ok(QuantileEstimate {
        alpha_hat: means[idx],
        arms,
        pulls_per_arm: pulls,
        rank,
        samples_used: src.samples_used() - start,
    })
}

/// Arm cap and pulls per arm of [`accept_loop`].
pub fn accept_sizes(eta: f64, eps: f64, delta: f64, c: f64) -> (u64, u64) {
    let cap = ceil_count(c * (1.0 / delta).ln() / eta).max(1);
    let pulls = ceil_count(c * (1.0 / (eta * delta)).ln() / (eps * eps)).max(1);
    (cap, pulls)
}

/// Tests fresh arms one by one and returns the first whose empirical mean
/// reaches `α̂ − ε/3`, or `None` once the arm cap is reached.
pub fn accept_loop<S: ArmSource + ?Sized>(
    src: &mut S,
    eta: f64,
    eps: f64,
    delta: f64,
    alpha_hat: f64,
    c: f64,
) -> Result<Option<ArmId>> {
    check_unit_half("eta", eta)?;
    check_unit_half("eps", eps)?;
    check_unit_half("delta", delta)?;
    check_constant(c)?;
    if !(0.0..=1.0).contains(&alpha_hat) {
        return domain(format!("estimate {alpha_hat} outside [0, 1]"));
    }
    let (cap, pulls) = accept_sizes(eta, eps, delta, c);
    let bar = alpha_hat - eps / 3.0;
    for _ in 0..cap {
        let arm = src.fresh_arm();
        let s = src.pull_many(arm, pulls)?;
        if s as f64 / pulls as f64 >= bar {
            return Ok(Some(arm));
        }
    }
    Ok(None)
}

/// Quantile estimation at `(η, η/2)` followed by the accept loop. Success
/// means an arm was output and its mean is at least `G⁻¹(1 − η) − ε`.
pub fn solve_fixed_confidence(env: &mut BanditEnv, params: &ConfidenceParams) -> Result<RunRecord> {
    let ConfidenceParams { eta, eps, delta, c } = *params;
    let target = env.reservoir().inverse_cdf(1.0 - eta)? - eps;
    let mut rec = RunRecord::new(target);
    let est = estimate_quantile(env, eta, eta / 2.0, eps, delta, c)?;
    rec.estimate = Some(est.alpha_hat);
    let chosen = accept_loop(env, eta, eps, delta, est.alpha_hat, c)?;
    rec.chosen = chosen;
    if let Some(arm) = chosen {
        let p = env.true_mean(arm);
        rec.true_mean = Some(p);
        rec.success = p >= target;
    }
    rec.samples_used = env.samples_used();
    rec.arms_touched = env.arms_touched();
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::Reservoir;

    #[test]
    fn estimation_sizes_example() {
        let (k, n, r) = estimation_sizes(0.1, 0.05, 0.3, (1.0f64 / 0.2).ln(), 4.0);
        assert_eq!((k, n, r), (258, 134, 20));
    }

    #[test]
    fn estimate_uses_k_times_n() {
        let mut env = BanditEnv::new(Reservoir::uniform(0.0, 1.0).unwrap(), 5);
        let est = estimate_quantile(&mut env, 0.1, 0.05, 0.3, 0.2, 4.0).unwrap();
        assert_eq!(est.samples_used, est.arms * est.pulls_per_arm);
        assert_eq!(env.samples_used(), 258 * 134);
        assert!(estimate_quantile(&mut env, 0.05, 0.1, 0.3, 0.2, 4.0).is_err());
        assert!(estimate_quantile(&mut env, 0.1, 0.05, 0.6, 0.2, 4.0).is_err());
    }

    #[test]
    fn accept_loop_trivial_cases() {
        let mut env = BanditEnv::new(Reservoir::atoms([(1.0, 1.0)]).unwrap(), 1);
        assert_eq!(accept_loop(&mut env, 0.1, 0.1, 0.1, 0.9, 4.0).unwrap(), Some(0));
        let mut env = BanditEnv::new(Reservoir::atoms([(0.0, 1.0)]).unwrap(), 1);
        assert_eq!(accept_loop(&mut env, 0.1, 0.1, 0.1, 0.9, 4.0).unwrap(), None);
        let (cap, pulls) = accept_sizes(0.1, 0.1, 0.1, 4.0);
        assert_eq!(env.arms_touched(), cap);
        assert_eq!(env.samples_used(), cap * pulls);
    }

    #[test]
    fn budget_exhaustion_propagates() {
        let mut env = BanditEnv::new(Reservoir::uniform(0.0, 1.0).unwrap(), 1).with_budget(1000);
        let err = estimate_quantile(&mut env, 0.1, 0.05, 0.3, 0.2, 4.0).unwrap_err();
        assert_eq!(err, crate::Error::BudgetExhausted);
        assert_eq!(env.samples_used(), 1000);
    }

    #[test]
    fn point_reservoir_always_succeeds() {
        let params = ConfidenceParams::new(0.2, 0.1, 0.1).unwrap();
        for seed in 0..5 {
            let mut env = BanditEnv::new(Reservoir::atoms([(0.5, 1.0)]).unwrap(), seed);
            let rec = solve_fixed_confidence(&mut env, &params).unwrap();
            assert!(rec.chosen.is_none() || rec.success);
        }
    }
}
