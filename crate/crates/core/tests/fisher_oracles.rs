use std::f64::consts::PI;

use infexplore::fisher::{fisher_distance, rate_constant, theta, theta_inv};
use proptest::prelude::*;

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Arc length of the Fisher metric `∫ dx / √(x(1−x))` from `lo` to `hi`.
/// The substitutions `x = w²` below one half and `x = 1 − v²` above it remove
/// the endpoint singularities, leaving the smooth integrand `2 / √(1 − w²)`
/// on `[0, √½]`.
fn fisher_arc(lo: f64, hi: f64) -> f64 {
    let smooth = |w: f64| 2.0 / (1.0 - w * w).sqrt();
    let mut total = 0.0;
    let (a, b) = (lo.min(0.5), hi.min(0.5));
    if b > a {
        total += simpson(smooth, a.sqrt(), b.sqrt(), 2000);
    }
    let (a, b) = (lo.max(0.5), hi.max(0.5));
    if b > a {
        total += simpson(smooth, (1.0 - b).sqrt(), (1.0 - a).sqrt(), 2000);
    }
    total
}

#[test]
fn rate_constant_matches_quadrature_on_200_pairs() {
    let mut worst: f64 = 0.0;
    for i in 0..200u32 {
        // Deterministic low-discrepancy pairs covering the unit square,
        // endpoints included.
        let u = (i as f64 * 0.618_033_988_749_895).fract();
        let v = (i as f64 * 0.754_877_666_246_693).fract();
        let (alpha, beta) = (u.max(v), u.min(v) * 0.999);
        let (alpha, beta) = if i == 0 { (1.0, 0.0) } else { (alpha, beta) };
        if alpha <= beta {
            continue;
        }
        let arc = fisher_arc(beta, alpha);
        let c = rate_constant(alpha, beta).unwrap();
        worst = worst.max((c - arc * arc / 2.0).abs());
    }
    assert!(worst <= 1e-8, "worst deviation {worst}");
}

#[test]
fn theta_roundtrip_on_grid() {
    for i in 0..=10_000u32 {
        let a = i as f64 / 10_000.0;
        let back = theta_inv(theta(a).unwrap());
        assert!((back - a).abs() <= 1e-12, "a={a} back={back}");
    }
}

#[test]
fn distance_endpoints_and_reference_constant() {
    assert!((fisher_distance(0.0, 1.0).unwrap() - PI).abs() <= 1e-12);
    let expected = ((-0.8f64).acos() - (-0.6f64).acos()).powi(2) / 2.0;
    assert!((rate_constant(0.9, 0.8).unwrap() - expected).abs() < 1e-15);
    assert!((rate_constant(0.9, 0.8).unwrap() - 0.040_269_548_210_674).abs() < 1e-12);
}

proptest! {
    #[test]
    fn distance_dominates_twice_the_gap(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        // θ'(x) = 1/√(x(1−x)) ≥ 2 everywhere.
        let d = fisher_distance(a, b).unwrap();
        prop_assert!(d + 1e-12 >= 2.0 * (a - b).abs());
    }

    #[test]
    fn rate_constant_monotone(beta in 0.0f64..0.98, gap in 0.001f64..0.5, extra in 0.0f64..0.5) {
        let alpha = (beta + gap).min(1.0);
        let alpha2 = (alpha + extra).min(1.0);
        let c1 = rate_constant(alpha, beta).unwrap();
        let c2 = rate_constant(alpha2, beta).unwrap();
        prop_assert!(c2 + 1e-15 >= c1);
        let beta2 = (beta - extra).max(0.0);
        prop_assert!(rate_constant(alpha, beta2).unwrap() + 1e-15 >= c1);
    }

    #[test]
    fn distance_is_a_metric(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
        let ab = fisher_distance(a, b).unwrap();
        prop_assert_eq!(ab, fisher_distance(b, a).unwrap());
        prop_assert!(ab <= fisher_distance(a, c).unwrap() + fisher_distance(c, b).unwrap() + 1e-12);
        prop_assert!(ab <= PI + 1e-15);
    }

    #[test]
    fn theta_roundtrip_random(a in 0.0f64..=1.0) {
        prop_assert!((theta_inv(theta(a).unwrap()) - a).abs() <= 1e-12);
    }
}
