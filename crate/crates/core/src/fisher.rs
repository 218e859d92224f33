//! Fisher information geometry of the Bernoulli family.
//!
//! Under the angle map `θ(a) = arccos(1 − 2a)` the Fisher metric on
//! Bernoulli means becomes the Euclidean metric on `[0, π]`, so
//! `d_F(a, b) = |θ(a) − θ(b)|`.

use std::f64::consts::PI;

use crate::error::{domain, Result};

/// A point of `[0, π]`, the image of a Bernoulli mean under `θ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ThetaValue(f64);

impl ThetaValue {
    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&t) {
            return domain(format!("theta value {t} outside [0, pi]"));
        }
        Ok(ThetaValue(t))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn check_mean(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return domain(format!("mean {a} outside [0, 1]"));
    }
    Ok(())
}

/// `θ(a) = arccos(1 − 2a)`, strictly increasing from `θ(0) = 0` to `θ(1) = π`.
pub fn theta(a: f64) -> Result<ThetaValue> {
    check_mean(a)?;
    Ok(ThetaValue(theta_unchecked(a)))
}

#[inline]
pub(crate) fn theta_unchecked(a: f64) -> f64 {
    (1.0 - 2.0 * a).clamp(-1.0, 1.0).acos()
}

/// Inverse of [`theta`]: `a = (1 − cos t) / 2`.
pub fn theta_inv(t: ThetaValue) -> f64 {
    theta_inv_unchecked(t.0)
}

#[inline]
pub(crate) fn theta_inv_unchecked(t: f64) -> f64 {
    0.5 * (1.0 - t.cos())
}

/// Fisher information distance between `Ber(a)` and `Ber(b)`.
pub fn fisher_distance(a: f64, b: f64) -> Result<f64> {
    check_mean(a)?;
    check_mean(b)?;
    Ok((theta_unchecked(a) - theta_unchecked(b)).abs())
}

/// Rate constant `c(α, β) = d_F(α, β)² / 2` governing the optimal
/// fixed-budget failure exponent `c · N / ln² N`.
pub fn rate_constant(alpha: f64, beta: f64) -> Result<f64> {
    check_mean(alpha)?;
    check_mean(beta)?;
    if beta >= alpha {
        return domain(format!("rate constant needs beta < alpha, got beta={beta} alpha={alpha}"));
    }
    let d = theta_unchecked(alpha) - theta_unchecked(beta);
    Ok(0.5 * d * d)
}
