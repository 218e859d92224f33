//! Reservoir distributions over arm means and the seeded bandit environment.

mod env;
mod parse;

pub use env::{ArmId, ArmRecord, ArmSource, BanditEnv};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::fisher::{theta_inv_unchecked, theta_unchecked};
use crate::numeric::integrate;

const MASS_TOL: f64 = 1e-12;

/// A distribution `μ` of arm means supported in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reservoir {
    /// Finitely many atoms, stored sorted by value with duplicates merged.
    DiscreteAtoms { atoms: Vec<(f64, f64)> },
    UniformInterval { lo: f64, hi: f64 },
    /// Density `levels[i]` on `[breaks[i], breaks[i + 1]]`.
    PiecewiseConstantDensity { breaks: Vec<f64>, levels: Vec<f64> },
}

impl Reservoir {
    /// Atoms given as `(value, weight)` pairs.
    pub fn atoms(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = pairs.into_iter().collect();
        if atoms.is_empty() {
            return domain("reservoir needs at least one atom");
        }
        for &(v, w) in &atoms {
            if !(0.0..=1.0).contains(&v) {
                return domain(format!("atom value {v} outside [0, 1]"));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return domain(format!("atom weight {w} must be nonnegative"));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return domain(format!("atom weights sum to {total}, expected 1"));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => merged.push((v, w)),
            }
        }
        Ok(Reservoir::DiscreteAtoms { atoms: merged })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return domain(format!("uniform interval needs 0 <= lo < hi <= 1, got [{lo}, {hi}]"));
        }
        Ok(Reservoir::UniformInterval { lo, hi })
    }

    pub fn piecewise(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || levels.len() + 1 != breaks.len() {
            return domain("piecewise density needs m + 1 breakpoints for m levels (m >= 1)");
        }
        if breaks[0] < 0.0 || *breaks.last().unwrap() > 1.0 {
            return domain("piecewise density breakpoints must lie in [0, 1]");
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("piecewise density breakpoints must be strictly increasing");
        }
        if levels.iter().any(|&f| !(f >= 0.0) || !f.is_finite()) {
            return domain("piecewise density levels must be nonnegative");
        }
        let total: f64 = levels
            .iter()
            .zip(breaks.windows(2))
            .map(|(f, w)| f * (w[1] - w[0]))
            .sum();
        if (total - 1.0).abs() > MASS_TOL {
            return domain(format!("piecewise density integrates to {total}, expected 1"));
        }
        Ok(Reservoir::PiecewiseConstantDensity { breaks, levels })
    }

    /// `G(τ) = P[p ≤ τ]`. Right-continuous and nondecreasing.
    pub fn cdf(&self, tau: f64) -> f64 {
        if tau.is_nan() {
            return f64::NAN;
        }
        if tau >= 1.0 {
            return 1.0;
        }
        if tau < 0.0 {
            return 0.0;
        }
        match self {
            Reservoir::DiscreteAtoms { atoms } => {
                atoms.iter().take_while(|a| a.0 <= tau).map(|a| a.1).sum::<f64>().min(1.0)
            }
            Reservoir::UniformInterval { lo, hi } => ((tau - lo) / (hi - lo)).clamp(0.0, 1.0),
            Reservoir::PiecewiseConstantDensity { breaks, levels } => {
                let mut acc = 0.0;
                for (f, w) in levels.iter().zip(breaks.windows(2)) {
                    if tau >= w[1] {
                        acc += f * (w[1] - w[0]);
                    } else {
                        if tau > w[0] {
                            acc += f * (tau - w[0]);
                        }
                        break;
                    }
                }
                acc.clamp(0.0, 1.0)
            }
        }
    }

    /// Left-continuous quantile `G⁻¹(q) = inf{τ : G(τ) ≥ q}` for `q ∈ (0, 1]`.
    pub fn inverse_cdf(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return domain(format!("quantile level {q} outside (0, 1]"));
        }
        Ok(self.quantile_unchecked(q))
    }

    pub(crate) fn quantile_unchecked(&self, q: f64) -> f64 {
        match self {
            Reservoir::DiscreteAtoms { atoms } => {
                let mut acc = 0.0;
                for &(v, w) in atoms {
                    acc += w;
                    if w > 0.0 && acc >= q {
                        return v;
                    }
                }
                self.ess_sup()
            }
            Reservoir::UniformInterval { lo, hi } => lo + q * (hi - lo),
            Reservoir::PiecewiseConstantDensity { breaks, levels } => {
                let mut acc = 0.0;
                for (&f, w) in levels.iter().zip(breaks.windows(2)) {
                    let mass = f * (w[1] - w[0]);
                    if mass > 0.0 && acc + mass >= q {
                        return (w[0] + (q - acc) / f).min(w[1]);
                    }
                    acc += mass;
                }
                self.ess_sup()
            }
        }
    }

    /// Essential supremum `μ* = G⁻¹(1)`.
    pub fn ess_sup(&self) -> f64 {
        match self {
            Reservoir::DiscreteAtoms { atoms } => atoms
                .iter()
                .rev()
                .find(|a| a.1 > 0.0)
                .map(|a| a.0)
                .unwrap_or(0.0),
            Reservoir::UniformInterval { hi, .. } => *hi,
            Reservoir::PiecewiseConstantDensity { breaks, levels } => levels
                .iter()
                .rposition(|&f| f > 0.0)
                .map(|i| breaks[i + 1])
                .unwrap_or(breaks[0]),
        }
    }

    /// Average of the quantile function over the top band `[1 − η1, 1 − η2]`.
    pub fn quantile_average(&self, eta1: f64, eta2: f64) -> Result<f64> {
        if !(0.0 < eta2 && eta2 < eta1 && eta1 < 1.0) {
            return domain(format!("quantile average needs 0 < eta2 < eta1 < 1, got eta1={eta1} eta2={eta2}"));
        }
        let (a, b) = (1.0 - eta1, 1.0 - eta2);
        let integral = match self {
            Reservoir::DiscreteAtoms { atoms } => {
                // G⁻¹ is a step function equal to atom v on (cum_prev, cum].
                let last = atoms.iter().rposition(|x| x.1 > 0.0).unwrap_or(atoms.len() - 1);
                let mut acc = 0.0;
                let mut total = 0.0;
                for (i, &(v, w)) in atoms.iter().enumerate().take(last + 1) {
                    let lo = acc;
                    acc += w;
                    // the top atom absorbs rounding slack in the cumulative weights
                    let hi = if i == last { 1.0 } else { acc };
                    total += v * (hi.min(b) - lo.max(a)).max(0.0);
                }
                total
            }
            Reservoir::UniformInterval { lo, hi } => {
                // ∫ lo + (hi − lo) x dx
                lo * (b - a) + 0.5 * (hi - lo) * (b * b - a * a)
            }
            Reservoir::PiecewiseConstantDensity { breaks, levels } => {
                // Split at the cumulative masses where G⁻¹ has kinks.
                let mut cuts = vec![a];
                let mut acc = 0.0;
                for (f, w) in levels.iter().zip(breaks.windows(2)) {
                    acc += f * (w[1] - w[0]);
                    if acc > a && acc < b {
                        cuts.push(acc);
                    }
                }
                cuts.push(b);
                cuts.windows(2)
                    .map(|c| integrate(|x| self.quantile_unchecked(x), c[0], c[1], 1e-12))
                    .sum()
            }
        };
        Ok(integral / (eta1 - eta2))
    }

    /// Draws a mean from `μ` given a uniform variate in `(0, 1]`.
    #[inline]
    pub fn sample_with(&self, u: f64) -> f64 {
        self.quantile_unchecked(u)
    }
}

/// Admissible lower-bound reservoir built around `(α, β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleReservoir {
    pub reservoir: Reservoir,
    /// Lower end of the support: `θ(γ_lo) = θ(β) − ϱ²`.
    pub gamma_lo: f64,
    /// Upper end of the support: `θ(γ_hi) = θ(α) + ϱ²`.
    pub gamma_hi: f64,
    /// Density level on `[γ_lo, α]`.
    pub level_low: f64,
    /// Density level on `[α, γ_hi]`.
    pub level_high: f64,
}

impl AdmissibleReservoir {
    pub fn density_floor(&self) -> f64 {
        self.level_low.min(self.level_high)
    }

    pub fn density_ceiling(&self) -> f64 {
        self.level_low.max(self.level_high)
    }
}

/// Two-level density on `[γ_lo, γ_hi]` with `G⁻¹(1 − η) = α` exactly.
pub fn admissible_reservoir(alpha: f64, beta: f64, eta: f64, rho: f64) -> Result<AdmissibleReservoir> {
    if !(0.0 < beta && beta < alpha && alpha < 1.0) {
        return domain(format!("admissible reservoir needs 0 < beta < alpha < 1, got alpha={alpha} beta={beta}"));
    }
    if !(0.0 < eta && eta < 1.0) {
        return domain(format!("eta {eta} outside (0, 1)"));
    }
    if !(rho > 0.0) {
        return domain(format!("rho {rho} must be positive"));
    }
    let shift = rho * rho;
    let t_lo = theta_unchecked(beta) - shift;
    let t_hi = theta_unchecked(alpha) + shift;
    if t_lo <= 0.0 || t_hi >= std::f64::consts::PI {
        return domain(format!("rho {rho} too large: support leaves (0, 1)"));
    }
    let gamma_lo = theta_inv_unchecked(t_lo);
    let gamma_hi = theta_inv_unchecked(t_hi);
    if !(gamma_lo > 0.0 && gamma_hi < 1.0) {
        return domain(format!("rho {rho} too large: support leaves (0, 1)"));
    }
    let level_low = (1.0 - eta) / (alpha - gamma_lo);
    let level_high = eta / (gamma_hi - alpha);
    let reservoir = Reservoir::piecewise(vec![gamma_lo, alpha, gamma_hi], vec![level_low, level_high])?;
    Ok(AdmissibleReservoir { reservoir, gamma_lo, gamma_hi, level_low, level_high })
}
