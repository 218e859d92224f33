//! Exact binomial and hypergeometric primitives.
//!
//! Probabilities are evaluated in log space with Loader's saddle-point
//! expansion (Stirling remainders plus the deviance term `bd0`), which keeps
//! full relative accuracy for `n` in the millions and avoids the cancellation
//! of a naive `lnΓ(n+1) − lnΓ(k+1) − lnΓ(n−k+1)`.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{domain, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(n!)` by direct summation, only used for small `n`.
fn ln_factorial_small(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Stirling remainder `ln(n!) − [(n + ½) ln n − n + ½ ln 2π]`.
fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n == 0 {
        return 0.0;
    }
    let x = n as f64;
    if n <= 15 {
        return ln_factorial_small(n) - (x + 0.5) * x.ln() + x - 0.5 * LN_2PI;
    }
    let nn = x * x;
    if n > 500 {
        (S0 - S1 / nn) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / x
    }
}

/// Deviance term `x ln(x / np) + np − x`, evaluated stably near `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `ln P[Bin(n, p) = k]`, `-inf` for impossible outcomes. No validation.
pub(crate) fn ln_binom_pmf_raw(k: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if k == 0 {
        if n == 0 {
            return 0.0;
        }
        return if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
    }
    if k == n {
        return if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
    }
    let kf = k as f64;
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(kf, nf * p) - bd0(nf - kf, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_binom_pmf_raw(k, n, 0.5) + n as f64 * LN_2
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("probability {p} outside [0, 1]"));
    }
    Ok(())
}

/// `P[Bin(n, p) = k] = C(n, k) p^k (1 − p)^(n − k)`.
pub fn binom_pmf(n: u64, p: f64, k: u64) -> Result<f64> {
    check_p(p)?;
    if k > n {
        return domain(format!("binomial outcome {k} exceeds n = {n}"));
    }
    Ok(ln_binom_pmf_raw(k, n, p).exp())
}

/// `ln P[Bin(n, p) ≤ k]` for `k` possibly negative or above `n`.
pub fn ln_binom_cdf(k: i64, n: u64, p: f64) -> f64 {
    if k < 0 {
        return f64::NEG_INFINITY;
    }
    let k = k as u64;
    if k >= n {
        return 0.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return f64::NEG_INFINITY;
    }
    let q = 1.0 - p;
    let odds = p / q;
    let mode = ((n + 1) as f64 * p).floor() as u64;
    if k < mode {
        // lower tail: terms shrink geometrically moving down from k
        let head = ln_binom_pmf_raw(k, n, p);
        let mut rel = 1.0;
        let mut sum = 1.0;
        let mut i = k;
        while i > 0 {
            rel *= i as f64 / ((n - i + 1) as f64 * odds);
            sum += rel;
            if rel < 1e-17 * sum {
                break;
            }
            i -= 1;
        }
        head + sum.ln()
    } else {
        // upper tail above k, then complement (the cdf is not small here)
        let first = k + 1;
        let head = ln_binom_pmf_raw(first, n, p);
        let mut rel = 1.0;
        let mut sum = 1.0;
        let mut i = first;
        while i < n {
            rel *= (n - i) as f64 / ((i + 1) as f64) * odds;
            sum += rel;
            if rel < 1e-17 * sum {
                break;
            }
            i += 1;
        }
        let upper = (head + sum.ln()).exp();
        (-upper).ln_1p()
    }
}

/// `P[Bin(n, p) ≤ k]`.
pub fn binom_cdf(k: i64, n: u64, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(ln_binom_cdf(k, n, p).exp())
}

/// Hypergeometric pmf in the `HyperGeom(A, B, C)` convention: a sample of
/// size `B` drawn without replacement from a population of `A` containing
/// `C` successes has exactly `k` successes with probability
/// `C(B, k) C(A − B, C − k) / C(A, C)`.
pub fn hypergeom_pmf(a: u64, b: u64, c: u64, k: u64) -> Result<f64> {
    if b > a || c > a {
        return domain(format!("hypergeometric needs B, C <= A, got A={a} B={b} C={c}"));
    }
    if k > b.min(c) || c - k > a - b {
        return domain(format!("hypergeometric outcome {k} impossible for A={a} B={b} C={c}"));
    }
    Ok(ln_hypergeom_pmf_raw(a, b, c, k).exp())
}

pub(crate) fn ln_hypergeom_pmf_raw(a: u64, b: u64, c: u64, k: u64) -> f64 {
    ln_choose(b, k) + ln_choose(a - b, c - k) - ln_choose(a, c)
}

/// Support `[lo, hi]` of `HyperGeom(A, B, C)`.
pub fn hypergeom_support(a: u64, b: u64, c: u64) -> (u64, u64) {
    ((b + c).saturating_sub(a), b.min(c))
}

/// Moderate-deviation reference rate `exp(−Δ² n / (2 p (1 − p)))`.
pub fn moderate_rate(p: f64, delta: f64, n: u64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("moderate rate needs 0 < p < 1, got {p}"));
    }
    if !(delta >= 0.0) {
        return domain(format!("deviation {delta} must be nonnegative"));
    }
    Ok((-delta * delta * n as f64 / (2.0 * p * (1.0 - p))).exp())
}

/// Exact lower tail `P[Bin(n, p)/n ≤ p − Δ]` next to its moderate-deviation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBoundReport {
    pub n: u64,
    pub p: f64,
    pub delta: f64,
    pub exact_tail: f64,
    pub rate_bound: f64,
    /// `ln exact_tail`, finite even when `exact_tail` underflows.
    pub ln_exact_tail: f64,
    /// `ln rate_bound`, likewise.
    pub ln_rate_bound: f64,
}

pub fn tail_bound_report(n: u64, p: f64, delta: f64) -> Result<TailBoundReport> {
    let rate_bound = moderate_rate(p, delta, n)?;
    let k = (n as f64 * (p - delta) + 1e-9).floor() as i64;
    let ln_exact_tail = ln_binom_cdf(k, n, p);
    let ln_rate_bound = -delta * delta * n as f64 / (2.0 * p * (1.0 - p));
    Ok(TailBoundReport { n, p, delta, exact_tail: ln_exact_tail.exp(), rate_bound, ln_exact_tail, ln_rate_bound })
}

/// `KL(Ber(a) ‖ Ber(b))` in nats.
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

/// Convex test functions for the hypergeometric/binomial dominance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ConvexFn {
    Square,
    Exp(f64),
    AbsDev(f64),
}

impl ConvexFn {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ConvexFn::Square => x * x,
            ConvexFn::Exp(t) => (t * x).exp(),
            ConvexFn::AbsDev(m) => (x - m).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceReport {
    pub hypergeom_expectation: f64,
    pub binomial_expectation: f64,
    pub holds: bool,
}

/// Exact check of `E f(HyperGeom(A, B, C)) ≤ E f(Bin(B, C/A))` for convex `f`.
pub fn convex_dominance_check(a: u64, b: u64, c: u64, f: ConvexFn) -> Result<DominanceReport> {
    if a == 0 || b > a || c > a {
        return domain(format!("dominance check needs 0 < A and B, C <= A, got A={a} B={b} C={c}"));
    }
    let (lo, hi) = hypergeom_support(a, b, c);
    let hg: f64 = (lo..=hi)
        .map(|k| ln_hypergeom_pmf_raw(a, b, c, k).exp() * f.eval(k as f64))
        .sum();
    let p = c as f64 / a as f64;
    let bin: f64 = (0..=b).map(|k| ln_binom_pmf_raw(k, b, p).exp() * f.eval(k as f64)).sum();
    let slack = 1e-12 * bin.abs().max(1.0);
    Ok(DominanceReport { hypergeom_expectation: hg, binomial_expectation: bin, holds: hg <= bin + slack })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force over all 2^n reward sequences.
    fn enumerate_binom(n: u32, p: f64, k: u32) -> f64 {
        (0u32..1 << n)
            .filter(|m| m.count_ones() == k)
            .map(|m| p.powi(m.count_ones() as i32) * (1.0 - p).powi((n - m.count_ones()) as i32))
            .sum()
    }

    #[test]
    fn binom_examples() {
        assert!((binom_pmf(2, 0.5, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!((binom_pmf(1, 0.3, 1).unwrap() - 0.3).abs() < 1e-15);
        let v = binom_pmf(10, 0.4, 4).unwrap();
        assert!((v - enumerate_binom(10, 0.4, 4)).abs() < 1e-12);
        assert!(binom_pmf(3, 0.4, 4).is_err());
        assert!(binom_pmf(3, 1.4, 1).is_err());
        assert_eq!(binom_pmf(5, 0.0, 0).unwrap(), 1.0);
        assert_eq!(binom_pmf(5, 1.0, 4).unwrap(), 0.0);
    }

    #[test]
    fn binom_normalized_large_n() {
        for &(n, p) in &[(10_000u64, 0.3), (10_000, 0.5), (9_999, 0.01), (5_000, 0.97)] {
            let s: f64 = (0..=n).map(|k| binom_pmf(n, p, k).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12, "n={n} p={p} sum={s}");
        }
    }

    #[test]
    fn cdf_matches_summation() {
        for &(n, p) in &[(30u64, 0.3), (200, 0.5), (1000, 0.8), (57, 0.05)] {
            let mut acc = 0.0;
            for k in 0..=n {
                acc += binom_pmf(n, p, k).unwrap();
                let c = binom_cdf(k as i64, n, p).unwrap();
                assert!((c - acc.min(1.0)).abs() < 1e-12, "n={n} p={p} k={k}: {c} vs {acc}");
            }
        }
        assert_eq!(binom_cdf(-1, 10, 0.5).unwrap(), 0.0);
        assert_eq!(binom_cdf(10, 10, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn ln_cdf_deep_tail_is_finite() {
        // P[Bin(10^6, 0.5) = 0] = 2^-1e6, far below f64 range
        let l = ln_binom_cdf(0, 1_000_000, 0.5);
        assert!((l - 1e6 * 0.5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn hypergeom_examples() {
        assert!((hypergeom_pmf(4, 2, 2, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((hypergeom_pmf(9, 9, 4, 4).unwrap() - 1.0).abs() < 1e-15);
        let s: f64 = (0..=7).map(|k| hypergeom_pmf(30, 12, 7, k).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(hypergeom_pmf(4, 2, 2, 3).is_err());
        assert!(hypergeom_pmf(4, 3, 4, 0).is_err());
        assert!(hypergeom_pmf(4, 5, 2, 0).is_err());
    }

    #[test]
    fn moderate_rate_examples() {
        assert_eq!(moderate_rate(0.3, 0.0, 100).unwrap(), 1.0);
        assert!((moderate_rate(0.5, 0.1, 100).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert!(moderate_rate(0.4, 0.1, 200).unwrap() < moderate_rate(0.4, 0.1, 100).unwrap());
        assert!(moderate_rate(0.0, 0.1, 10).is_err());
        assert!(moderate_rate(1.0, 0.1, 10).is_err());
    }

    #[test]
    fn dominance_examples() {
        let r = convex_dominance_check(4, 2, 2, ConvexFn::Square).unwrap();
        assert!((r.hypergeom_expectation - 4.0 / 3.0).abs() < 1e-14);
        assert!((r.binomial_expectation - 1.5).abs() < 1e-14);
        assert!(r.holds);
        let r = convex_dominance_check(12, 12, 5, ConvexFn::Exp(0.7)).unwrap();
        assert!((r.hypergeom_expectation - (0.7f64 * 5.0).exp()).abs() < 1e-12);
        // B = A: the hypergeometric sample is the whole population, and the
        // binomial with p = C/A has the same mean; dominance still holds.
        assert!(r.holds);
        let r = convex_dominance_check(30, 12, 7, ConvexFn::Exp(0.5)).unwrap();
        assert!(r.holds && r.hypergeom_expectation < r.binomial_expectation);
    }

    #[test]
    fn kl_basics() {
        assert_eq!(bernoulli_kl(0.3, 0.3), 0.0);
        assert!(bernoulli_kl(0.1, 0.5) > 0.0);
        assert!((bernoulli_kl(0.0, 0.5) - LN_2).abs() < 1e-15);
    }
}
