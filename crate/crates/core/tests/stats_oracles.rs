use infexplore::stats::{
    bernoulli_kl, binom_cdf, binom_pmf, convex_dominance_check, hypergeom_pmf, hypergeom_support, ln_binom_cdf,
    tail_bound_report, ConvexFn,
};
use proptest::prelude::*;

const MAX_A: usize = 40;

/// Exact binomial coefficients by Pascal's rule.
fn pascal() -> Vec<Vec<u128>> {
    let mut t = vec![vec![0u128; MAX_A + 1]; MAX_A + 1];
    for n in 0..=MAX_A {
        t[n][0] = 1;
        for k in 1..=n {
            t[n][k] = t[n - 1][k - 1] + if k < n { t[n - 1][k] } else { 0 };
        }
    }
    t
}

#[test]
#[allow(clippy::needless_range_loop)]
fn binomial_pmf_matches_exact_counts() {
    let c = pascal();
    let ps: [f64; 10] = [0.0, 1e-3, 0.1, 0.25, 1.0 / 3.0, 0.5, 0.7, 0.9, 0.999, 1.0];
    for n in 0..=MAX_A {
        for &p in &ps {
            let mut total = 0.0;
            for k in 0..=n {
                let oracle = c[n][k] as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
                let got = binom_pmf(n as u64, p, k as u64).unwrap();
                assert!((got - oracle).abs() <= 1e-12, "n={n} p={p} k={k}: {got} vs {oracle}");
                total += got;
                let cdf = binom_cdf(k as i64, n as u64, p).unwrap();
                assert!((cdf - total.min(1.0)).abs() <= 1e-12, "cdf n={n} p={p} k={k}");
            }
            assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn hypergeometric_pmf_matches_exact_counts() {
    let c = pascal();
    for a in 0..=MAX_A {
        for b in 0..=a {
            for s in 0..=a {
                let (lo, hi) = hypergeom_support(a as u64, b as u64, s as u64);
                let mut total = 0.0;
                for k in 0..=b.min(s) {
                    let ways = c[b][k] * c[a - b][s - k];
                    let feasible = s - k <= a - b;
                    if !feasible {
                        assert!(hypergeom_pmf(a as u64, b as u64, s as u64, k as u64).is_err());
                        continue;
                    }
                    assert!(lo as usize <= k && k <= hi as usize);
                    let oracle = ways as f64 / c[a][s] as f64;
                    let got = hypergeom_pmf(a as u64, b as u64, s as u64, k as u64).unwrap();
                    assert!((got - oracle).abs() <= 1e-12, "A={a} B={b} C={s} k={k}: {got} vs {oracle}");
                    total += got;
                }
                assert!((total - 1.0).abs() <= 1e-12, "A={a} B={b} C={s} total {total}");
            }
        }
    }
}

fn test_functions(b: u64, c: u64, a: u64) -> Vec<ConvexFn> {
    let mean = b as f64 * c as f64 / a as f64;
    let mut fs = vec![ConvexFn::Square, ConvexFn::AbsDev(mean), ConvexFn::AbsDev(0.0), ConvexFn::AbsDev(b as f64 / 2.0)];
    fs.extend([-2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0].map(ConvexFn::Exp));
    fs
}

#[test]
fn convex_dominance_on_full_grid() {
    for a in 1..=20u64 {
        for b in 0..=a {
            for c in 0..=a {
                for f in test_functions(b, c, a) {
                    let r = convex_dominance_check(a, b, c, f).unwrap();
                    assert!(r.holds, "A={a} B={b} C={c} f={f:?}: {r:?}");
                    if b == a {
                        // Full sample: the hypergeometric count is exactly C,
                        // so equality needs C/A ∈ {0, 1}.
                        if c == 0 || c == a {
                            assert!((r.hypergeom_expectation - r.binomial_expectation).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn dominance_reference_examples() {
    let r = convex_dominance_check(4, 2, 2, ConvexFn::Square).unwrap();
    assert!((r.hypergeom_expectation - 4.0 / 3.0).abs() < 1e-12);
    assert!((r.binomial_expectation - 1.5).abs() < 1e-12);
    assert!(convex_dominance_check(30, 12, 7, ConvexFn::Exp(0.5)).unwrap().holds);
}

#[test]
fn hypergeometric_tails_below_binomial_chernoff() {
    for a in 1..=30u64 {
        for b in 1..=a {
            for c in 0..=a {
                let p = c as f64 / a as f64;
                let (lo, hi) = hypergeom_support(a, b, c);
                let pmf: Vec<f64> = (lo..=hi).map(|k| hypergeom_pmf(a, b, c, k).unwrap()).collect();
                for k in lo..=hi {
                    let q = k as f64 / b as f64;
                    let bound = (-(b as f64) * bernoulli_kl(q, p)).exp() * (1.0 + 1e-12) + 1e-15;
                    let upper: f64 = pmf[(k - lo) as usize..].iter().sum();
                    let lower: f64 = pmf[..=(k - lo) as usize].iter().sum();
                    if q >= p {
                        assert!(upper <= bound, "upper A={a} B={b} C={c} k={k}: {upper} > {bound}");
                    }
                    if q <= p {
                        assert!(lower <= bound, "lower A={a} B={b} C={c} k={k}: {lower} > {bound}");
                    }
                }
            }
        }
    }
}

#[test]
fn binomial_tail_tracks_moderate_rate() {
    for &p in &[0.3, 0.5, 0.7] {
        for &n in &[1_000u64, 10_000, 100_000] {
            let delta = 1.0 / (n as f64).ln();
            let r = tail_bound_report(n, p, delta).unwrap();
            let gap = (r.ln_exact_tail - r.ln_rate_bound).abs() / (n as f64 * delta * delta);
            assert!(gap <= 0.5, "p={p} n={n}: normalized log gap {gap}");
            assert!((0.0..=1.0).contains(&r.exact_tail) && (0.0..=1.0).contains(&r.rate_bound));
        }
    }
}

proptest! {
    #[test]
    fn binomial_normalized_and_nonnegative(n in 0u64..2_000, p in 0.0f64..=1.0) {
        let mut total = 0.0;
        for k in 0..=n {
            let v = binom_pmf(n, p, k).unwrap();
            prop_assert!(v >= 0.0);
            total += v;
        }
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn log_cdf_monotone(n in 1u64..5_000, p in 0.01f64..0.99, k in 0i64..5_000) {
        let k = k.min(n as i64);
        let a = ln_binom_cdf(k - 1, n, p);
        let b = ln_binom_cdf(k, n, p);
        prop_assert!(a <= b + 1e-12);
        prop_assert!(b <= 1e-15);
    }
}
