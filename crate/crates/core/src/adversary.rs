//! Randomness-distorting adversary for the fixed-budget lower bound.
//!
//! Any pull-based algorithm is first made batch-compressed: per-arm pull
//! counts may only move between consecutive entries of a slowly increasing
//! set. Each batch is then generated by the adversary, which may *declare*
//! an event about the batch outcome and condition on it. A declaration
//! holding with posterior probability `P` costs `ln(1/P)`; by a
//! supermartingale argument the failure probability of the algorithm is at
//! least `e^{−Cost}` for the total cost of a run whose declarations force
//! failure.
//!
//! The posterior over an arm's mean lives on a fixed grid and is recomputed
//! from the arm's `(pulls, successes)` whenever a batch is generated.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::fisher::{fisher_distance, rate_constant, theta_inv_unchecked, theta_unchecked};
use crate::numeric::floor_count;
use crate::record::RunRecord;
use crate::reservoir::{admissible_reservoir, AdmissibleReservoir, ArmId, ArmSource, Reservoir};
use crate::stats::{ln_binom_cdf, ln_binom_pmf_raw};

/// Default number of posterior grid cells.
pub const DEFAULT_GRID_CELLS: usize = 2048;
/// Smallest grid accepted for densities.
pub const MIN_GRID_CELLS: usize = 512;
/// Rejection-sampling retries before falling back or giving up.
pub const MAX_RETRIES: u64 = 1_000_000;
/// Largest batch for which the exact conditional law is enumerated.
pub const MAX_ENUMERATED_BATCH: u64 = 20;

const CMP_SLACK: f64 = 1e-12;

/// Pull-count checkpoints: every integer up to `N^{2ϱ}`, multiples of
/// `⌊N^ϱ⌋` up to `N^{6ϱ}`, then `⌊N^{6ϱ}(1+ϱ)^j⌋`. Stored up to the first
/// entry at or beyond `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSet {
    entries: Vec<u64>,
    rho: f64,
    dense_end: u64,
    step: u64,
    geometric_start: u64,
}

/// `⌊N^x⌋` computed as `⌊exp(x ln N)⌋`.
fn power_floor(n: u64, x: f64) -> u64 {
    floor_count((x * (n as f64).ln()).exp())
}

pub fn batch_set(n: u64, rho: f64) -> Result<BatchSet> {
    if !(rho > 0.0 && rho < 1.0) {
        return domain(format!("rho = {rho} outside (0, 1)"));
    }
    let dense_end = power_floor(n, 2.0 * rho);
    if n < 2 || dense_end < 2 {
        return domain(format!("N^(2 rho) below 2 for N={n}, rho={rho}"));
    }
    let step = power_floor(n, rho).max(1);
    let geometric_start = power_floor(n, 6.0 * rho);
    let mut entries: Vec<u64> = (1..=dense_end.min(n)).collect();
    let mut m = step;
    while m <= geometric_start && *entries.last().unwrap() < n {
        if m > *entries.last().unwrap() {
            entries.push(m);
        }
        m += step;
    }
    let mut j = 0;
    while *entries.last().unwrap() < n {
        let v = floor_count(geometric_start as f64 * (1.0 + rho).powi(j));
        if v > *entries.last().unwrap() {
            entries.push(v);
        }
        j += 1;
    }
    let set = BatchSet { entries, rho, dense_end, step, geometric_start };
    let worst = set.max_growth_ratio();
    if worst > 1.0 + rho + 1e-12 {
        return domain(format!(
            "batch set for N={n}, rho={rho} is not slowly increasing (max ratio {worst:.4} > {})",
            1.0 + rho
        ));
    }
    Ok(set)
}

impl BatchSet {
    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `⌊N^{2ϱ}⌋`, the end of the dense block.
    pub fn dense_end(&self) -> u64 {
        self.dense_end
    }

    /// `⌊N^ϱ⌋`, the spacing of the middle block.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// `⌊N^{6ϱ}⌋`, where geometric growth starts.
    pub fn geometric_start(&self) -> u64 {
        self.geometric_start
    }

    pub fn contains(&self, n: u64) -> bool {
        self.entries.binary_search(&n).is_ok()
    }

    /// Smallest entry `≥ n` (or `n` itself beyond the stored range).
    pub fn next_at_least(&self, n: u64) -> u64 {
        match self.entries.binary_search(&n) {
            Ok(_) => n,
            Err(i) => self.entries.get(i).copied().unwrap_or(n),
        }
    }

    /// `max_k b_{k+1} / (b_k + 1)`.
    pub fn max_growth_ratio(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| w[1] as f64 / (w[0] + 1) as f64)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Default)]
struct Pending {
    consumed: u64,
    buffered: Vec<bool>,
}

/// Batch-compressing wrapper: whenever the wrapped algorithm needs a pull
/// beyond what has been drawn, the arm is advanced to the next entry of the
/// batch set and the surplus rewards are buffered. The algorithm sees the
/// same reward sequence as it would unwrapped; `budget` applies to the
/// algorithm's own pulls.
#[derive(Debug)]
pub struct BatchCompressed<S> {
    inner: S,
    set: BatchSet,
    arms: HashMap<ArmId, Pending>,
    budget: Option<u64>,
    used: u64,
}

impl<S: ArmSource> BatchCompressed<S> {
    pub fn new(inner: S, set: BatchSet, budget: Option<u64>) -> Self {
        BatchCompressed { inner, set, arms: HashMap::new(), budget, used: 0 }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }

    /// Pulls made by the wrapped algorithm.
    pub fn algorithm_samples(&self) -> u64 {
        self.used
    }

    /// Pulls actually drawn from the inner source divided by the algorithm's pulls.
    pub fn inflation(&self) -> f64 {
        if self.used == 0 {
            1.0
        } else {
            self.inner.samples_used() as f64 / self.used as f64
        }
    }

    fn next_reward(&mut self, arm: ArmId) -> Result<bool> {
        if let Some(b) = self.budget {
            if self.used >= b {
                return Err(Error::BudgetExhausted);
            }
        }
        let p = self.arms.entry(arm).or_default();
        if p.consumed as usize == p.buffered.len() {
            let drawn = p.buffered.len() as u64;
            let target = self.set.next_at_least(drawn + 1);
            let mut fresh = Vec::with_capacity((target - drawn) as usize);
            let res = self.inner.pull_batch(arm, target - drawn, &mut fresh);
            let p = self.arms.get_mut(&arm).unwrap();
            p.buffered.extend(fresh);
            res?;
        }
        let p = self.arms.get_mut(&arm).unwrap();
        let r = p.buffered[p.consumed as usize];
        p.consumed += 1;
        self.used += 1;
        Ok(r)
    }
}

impl<S: ArmSource> ArmSource for BatchCompressed<S> {
    fn pull(&mut self, arm: ArmId) -> Result<bool> {
        self.next_reward(arm)
    }

    fn fresh_arm(&mut self) -> ArmId {
        self.inner.fresh_arm()
    }

    fn samples_used(&self) -> u64 {
        self.used
    }

    fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.used))
    }
}

/// An event the adversary conditions on. Batch declarations are relative to
/// the arm's counts before the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Declaration {
    /// The batch's own empirical mean is at most `bound`.
    BatchMeanAtMost { bound: f64 },
    /// The angle of the running empirical mean drops by at least `decrement`.
    ThetaDropAtLeast { decrement: f64 },
    /// The running empirical mean stays at most `beta` after the batch.
    MeanStaysBelow { beta: f64 },
    /// The output arm's true mean is below `beta`.
    FinalArmBelow { beta: f64 },
}

impl Declaration {
    /// Largest number of batch successes compatible with the declaration
    /// (negative when none is), or `None` for the output declaration.
    pub fn max_batch_successes(&self, pulls: u64, successes: u64, batch: u64) -> Option<i64> {
        let after = (pulls + batch) as f64;
        let r = successes as f64;
        let floor = |x: f64| (x + 1e-9).floor() as i64;
        match *self {
            Declaration::BatchMeanAtMost { bound } => Some(floor(bound * batch as f64).min(batch as i64)),
            Declaration::ThetaDropAtLeast { decrement } => {
                if pulls == 0 {
                    return Some(-1);
                }
                let t = theta_unchecked(r / pulls as f64) - decrement;
                if t < 0.0 {
                    return Some(-1);
                }
                Some(floor(theta_inv_unchecked(t) * after - r).min(batch as i64))
            }
            Declaration::MeanStaysBelow { beta } => Some(floor(beta * after - r).min(batch as i64)),
            Declaration::FinalArmBelow { .. } => None,
        }
    }

    /// Direct check of a batch declaration on an observed batch.
    pub fn holds(&self, pulls: u64, successes: u64, batch: u64, batch_successes: u64) -> bool {
        let after = (successes + batch_successes) as f64 / (pulls + batch) as f64;
        match *self {
            Declaration::BatchMeanAtMost { bound } => batch_successes as f64 / batch as f64 <= bound + CMP_SLACK,
            Declaration::ThetaDropAtLeast { decrement } => {
                pulls > 0
                    && theta_unchecked(after)
                        <= theta_unchecked(successes as f64 / pulls as f64) - decrement + CMP_SLACK
            }
            Declaration::MeanStaysBelow { beta } => after <= beta + CMP_SLACK,
            Declaration::FinalArmBelow { .. } => false,
        }
    }
}

impl std::fmt::Display for Declaration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Declaration::BatchMeanAtMost { bound } => write!(f, "batch mean <= {bound}"),
            Declaration::ThetaDropAtLeast { decrement } => write!(f, "theta drop >= {decrement}"),
            Declaration::MeanStaysBelow { beta } => write!(f, "running mean stays <= {beta}"),
            Declaration::FinalArmBelow { beta } => write!(f, "output mean < {beta}"),
        }
    }
}

/// Posterior over one arm's mean on a fixed grid of nodes: weight of node
/// `x` proportional to `x^R (1 − x)^{n − R}` times its prior mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    points: Vec<f64>,
    ln_prior: Vec<f64>,
    pulls: u64,
    successes: u64,
    weights: Vec<f64>,
}

impl PosteriorGrid {
    /// Prior grid from explicit `(node, mass)` pairs.
    pub fn from_nodes(nodes: &[(f64, f64)]) -> Result<Self> {
        let nodes: Vec<(f64, f64)> = nodes.iter().copied().filter(|n| n.1 > 0.0).collect();
        if nodes.is_empty() {
            return domain("posterior grid needs a node with positive mass");
        }
        if nodes.iter().any(|n| !(0.0..=1.0).contains(&n.0)) {
            return domain("posterior grid nodes must lie in [0, 1]");
        }
        let points = nodes.iter().map(|n| n.0).collect();
        let ln_prior = nodes.iter().map(|n| n.1.ln()).collect();
        Ok(PosteriorGrid { points, ln_prior, pulls: 0, successes: 0, weights: Vec::new() }.with_counts(0, 0))
    }

    /// Point-mass prior.
    pub fn point(p: f64) -> Result<Self> {
        Self::from_nodes(&[(p, 1.0)])
    }

    /// Midpoint discretization of a reservoir. Densities get `cells` cells
    /// split across segments in proportion to length, with a cell boundary
    /// at every breakpoint and at every value in `align`; atoms are used as is.
    pub fn from_reservoir(res: &Reservoir, cells: usize, align: &[f64]) -> Result<Self> {
        let (mut breaks, levels): (Vec<f64>, Vec<f64>) = match res {
            Reservoir::DiscreteAtoms { atoms } => return Self::from_nodes(atoms),
            Reservoir::UniformInterval { lo, hi } => (vec![*lo, *hi], vec![1.0 / (hi - lo)]),
            Reservoir::PiecewiseConstantDensity { breaks, levels } => (breaks.clone(), levels.clone()),
        };
        if cells < MIN_GRID_CELLS {
            return domain(format!("posterior grid needs at least {MIN_GRID_CELLS} cells, got {cells}"));
        }
        let orig = breaks.clone();
        let density_at = |x: f64| {
            let i = orig.partition_point(|&b| b <= x).clamp(1, levels.len());
            levels[i - 1]
        };
        let (lo, hi) = (breaks[0], *breaks.last().unwrap());
        for &a in align {
            if a > lo && a < hi && !breaks.contains(&a) {
                breaks.push(a);
            }
        }
        breaks.sort_by(f64::total_cmp);
        let span = hi - lo;
        let segments = breaks.len() - 1;
        let mut nodes = Vec::with_capacity(cells + segments);
        for w in breaks.windows(2) {
            let k = ((cells as f64 * (w[1] - w[0]) / span).round() as usize).max(1);
            let h = (w[1] - w[0]) / k as f64;
            let f = density_at(0.5 * (w[0] + w[1]));
            for i in 0..k {
                nodes.push((w[0] + (i as f64 + 0.5) * h, f * h));
            }
        }
        Self::from_nodes(&nodes)
    }

    /// Posterior after `pulls` pulls with `successes` successes, starting
    /// from this grid's prior.
    pub fn with_counts(&self, pulls: u64, successes: u64) -> Self {
        let (n, r) = (pulls as f64, successes as f64);
        let xlogy = |c: f64, y: f64| if c == 0.0 { 0.0 } else { c * y.ln() };
        let logw: Vec<f64> = self
            .points
            .iter()
            .zip(&self.ln_prior)
            .map(|(&x, &lp)| lp + xlogy(r, x) + xlogy(n - r, 1.0 - x))
            .collect();
        let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = logw.iter().map(|&l| (l - m).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        PosteriorGrid { points: self.points.clone(), ln_prior: self.ln_prior.clone(), pulls, successes, weights }
    }

    /// Updates the posterior with a batch outcome.
    pub fn observe(&mut self, batch: u64, batch_successes: u64) {
        *self = self.with_counts(self.pulls + batch, self.successes + batch_successes);
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// Posterior mass strictly below `x`.
    pub fn mass_below(&self, x: f64) -> f64 {
        self.points.iter().zip(&self.weights).filter(|(&p, _)| p < x).map(|(_, w)| w).sum()
    }

    fn draw_node<R: Rng + ?Sized>(&self, rng: &mut R, weights: &[f64], total: f64) -> usize {
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

/// `ln P_t`, `-inf` for impossible declarations.
pub fn ln_declaration_probability(post: &PosteriorGrid, batch_size: u64, d: &Declaration) -> f64 {
    let terms: Vec<f64> = match d.max_batch_successes(post.pulls, post.successes, batch_size) {
        None => {
            let Declaration::FinalArmBelow { beta } = *d else { unreachable!() };
            let m = post.mass_below(beta);
            return if m > 0.0 { m.ln() } else { f64::NEG_INFINITY };
        }
        Some(m) if m < 0 => return f64::NEG_INFINITY,
        Some(m) => post
            .points
            .iter()
            .zip(&post.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| w.ln() + ln_binom_cdf(m, batch_size, x))
            .collect(),
    };
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    let s: f64 = terms.iter().map(|&t| (t - top).exp()).sum();
    (top + s.ln()).min(0.0)
}

/// Posterior-predictive probability `P_t` that the declaration holds for the
/// next `batch_size` pulls of an arm with posterior `post`.
pub fn declaration_probability(post: &PosteriorGrid, batch_size: u64, d: &Declaration) -> Result<f64> {
    if batch_size == 0 && !matches!(d, Declaration::FinalArmBelow { .. }) {
        return domain("batch size must be at least 1");
    }
    let l = ln_declaration_probability(post, batch_size, d);
    if l == f64::NEG_INFINITY {
        return Err(Error::InfeasibleDeclaration { arm: None, pulls: post.pulls, declaration: d.to_string() });
    }
    Ok(l.exp())
}

/// A batch drawn from the conditioned posterior predictive.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    /// Mean drawn for the arm (a grid node).
    pub mean: f64,
    pub rewards: Vec<bool>,
    pub successes: u64,
    /// Rejection-sampling attempts used (0 when enumerated exactly).
    pub attempts: u64,
}

fn rewards_with<R: Rng + ?Sized>(rng: &mut R, batch: u64, successes: u64) -> Vec<bool> {
    let mut v: Vec<bool> = (0..batch).map(|i| i < successes).collect();
    v.shuffle(rng);
    v
}

/// Draws `(p, batch)` from the posterior predictive conditioned on `d` by
/// rejection; after [`MAX_RETRIES`] failures, small batches switch to exact
/// enumeration of the conditional law.
pub fn sample_conditioned<R: Rng + ?Sized>(
    post: &PosteriorGrid,
    batch_size: u64,
    d: &Declaration,
    rng: &mut R,
) -> Result<SampledBatch> {
    let Some(m) = d.max_batch_successes(post.pulls, post.successes, batch_size) else {
        return domain("the output declaration does not constrain a batch");
    };
    if m < 0 {
        return Err(Error::InfeasibleDeclaration { arm: None, pulls: post.pulls, declaration: d.to_string() });
    }
    let m = m as u64;
    for attempt in 1..=MAX_RETRIES {
        let i = post.draw_node(rng, &post.weights, 1.0);
        let p = post.points[i];
        let x = Binomial::new(batch_size, p).map(|b| b.sample(rng)).unwrap_or(0);
        if x <= m {
            return Ok(SampledBatch { mean: p, rewards: rewards_with(rng, batch_size, x), successes: x, attempts: attempt });
        }
    }
    if batch_size > MAX_ENUMERATED_BATCH {
        return Err(Error::SamplingStalled { retries: MAX_RETRIES, batch_size });
    }
    let mut cells = Vec::new();
    let mut probs = Vec::new();
    for (i, (&p, &w)) in post.points.iter().zip(&post.weights).enumerate() {
        for x in 0..=m {
            cells.push((i, x));
            probs.push(w * ln_binom_pmf_raw(x, batch_size, p).exp());
        }
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InfeasibleDeclaration { arm: None, pulls: post.pulls, declaration: d.to_string() });
    }
    let j = post.draw_node(rng, &probs, total);
    let (i, x) = cells[j];
    Ok(SampledBatch { mean: post.points[i], rewards: rewards_with(rng, batch_size, x), successes: x, attempts: 0 })
}

/// Draws the output arm's mean from its posterior conditioned below `beta`.
pub fn sample_mean_below<R: Rng + ?Sized>(post: &PosteriorGrid, beta: f64, rng: &mut R) -> Result<f64> {
    let w: Vec<f64> = post.points.iter().zip(&post.weights).map(|(&p, &w)| if p < beta { w } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InfeasibleDeclaration {
            arm: None,
            pulls: post.pulls,
            declaration: Declaration::FinalArmBelow { beta }.to_string(),
        });
    }
    Ok(post.points[post.draw_node(rng, &w, total)])
}

/// One ledger entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    /// Samples drawn by the adversary before this declaration.
    pub t: u64,
    pub arm: ArmId,
    pub pulls_before: u64,
    pub successes_before: u64,
    /// Zero for the output declaration.
    pub batch_size: u64,
    pub batch_successes: Option<u64>,
    pub declaration: Declaration,
    pub p_t: f64,
    pub ln_p_t: f64,
    pub cum_cost: f64,
    /// The declaration was checked true on the sampled outcome.
    pub holds: bool,
}

/// Declarations with their probabilities and running cost `Σ ln(1/P_s)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total_cost(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.cum_cost)
    }

    /// Appends an entry, filling in `p_t` and `cum_cost` from `ln_p_t`.
    pub fn push(&mut self, mut entry: LedgerEntry) {
        entry.p_t = entry.ln_p_t.exp();
        entry.cum_cost = self.total_cost() - entry.ln_p_t;
        self.entries.push(entry);
    }

    /// Exports the ledger as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).map_err(|err| Error::Io(err.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Parameters of an adversarial run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversarySettings {
    /// Sample budget `N` of the wrapped algorithm.
    pub budget: u64,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub grid_cells: usize,
    pub seed: u64,
}

impl AdversarySettings {
    pub fn new(budget: u64, rho: f64, alpha: f64, beta: f64, eta: f64, seed: u64) -> Self {
        AdversarySettings { budget, rho, alpha, beta, eta, grid_cells: DEFAULT_GRID_CELLS, seed }
    }
}

/// Arm source whose batches are generated by the adversary.
#[derive(Debug)]
pub struct AdversarialSource {
    prior: PosteriorGrid,
    counts: HashMap<ArmId, (u64, u64)>,
    rng: ChaCha8Rng,
    ledger: CostLedger,
    dense_end: u64,
    geometric_start: u64,
    mild_bound: f64,
    decrement: f64,
    beta: f64,
    next_fresh: ArmId,
    drawn: u64,
}

impl AdversarialSource {
    pub fn new(settings: &AdversarySettings, adm: &AdmissibleReservoir, set: &BatchSet) -> Result<Self> {
        let AdversarySettings { budget, rho, alpha, beta, grid_cells, seed, .. } = *settings;
        let prior = PosteriorGrid::from_reservoir(&adm.reservoir, grid_cells, &[beta, alpha])?;
        let ln_n = (budget as f64).ln();
        Ok(AdversarialSource {
            prior,
            counts: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            ledger: CostLedger::new(),
            dense_end: set.dense_end(),
            geometric_start: set.geometric_start(),
            mild_bound: adm.gamma_hi - (-rho * ln_n).exp(),
            decrement: rho * (1.0 + 10.0 * rho) * fisher_distance(alpha, beta)? / ln_n,
            beta,
            next_fresh: 0,
            drawn: 0,
        })
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    /// `(pulls, successes)` drawn for an arm so far.
    pub fn counts(&self, arm: ArmId) -> (u64, u64) {
        self.counts.get(&arm).copied().unwrap_or((0, 0))
    }

    /// The declaration the adversary makes for a batch starting at `pulls`.
    pub fn declaration_for(&self, pulls: u64, successes: u64) -> Option<Declaration> {
        if pulls < self.dense_end {
            None
        } else if pulls < self.geometric_start {
            Some(Declaration::BatchMeanAtMost { bound: self.mild_bound })
        } else if successes as f64 / pulls as f64 > self.beta {
            Some(Declaration::ThetaDropAtLeast { decrement: self.decrement })
        } else {
            Some(Declaration::MeanStaysBelow { beta: self.beta })
        }
    }

    /// Output declaration: the arm's mean is below `β`. Returns the forced mean.
    pub fn declare_output(&mut self, arm: ArmId) -> Result<f64> {
        let (n, r) = self.counts(arm);
        let post = self.prior.with_counts(n, r);
        let d = Declaration::FinalArmBelow { beta: self.beta };
        let ln_p = ln_declaration_probability(&post, 0, &d);
        if ln_p == f64::NEG_INFINITY {
            return Err(Error::InfeasibleDeclaration { arm: Some(arm), pulls: n, declaration: d.to_string() });
        }
        let forced = sample_mean_below(&post, self.beta, &mut self.rng)?;
        self.ledger.push(LedgerEntry {
            t: self.drawn,
            arm,
            pulls_before: n,
            successes_before: r,
            batch_size: 0,
            batch_successes: None,
            declaration: d,
            p_t: 0.0,
            ln_p_t: ln_p,
            cum_cost: 0.0,
            holds: forced < self.beta,
        });
        Ok(forced)
    }

    pub fn into_ledger(self) -> CostLedger {
        self.ledger
    }
}

impl ArmSource for AdversarialSource {
    fn pull(&mut self, arm: ArmId) -> Result<bool> {
        let mut out = Vec::with_capacity(1);
        self.pull_batch(arm, 1, &mut out)?;
        Ok(out[0])
    }

    fn pull_batch(&mut self, arm: ArmId, count: u64, out: &mut Vec<bool>) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        let (n, r) = self.counts(arm);
        let post = self.prior.with_counts(n, r);
        let decl = self.declaration_for(n, r);
        let always = Declaration::BatchMeanAtMost { bound: 1.0 };
        let ln_p = match &decl {
            Some(d) => {
                let l = ln_declaration_probability(&post, count, d);
                if l == f64::NEG_INFINITY {
                    return Err(Error::InfeasibleDeclaration { arm: Some(arm), pulls: n, declaration: d.to_string() });
                }
                l
            }
            None => 0.0,
        };
        let sample = sample_conditioned(&post, count, decl.as_ref().unwrap_or(&always), &mut self.rng)
            .map_err(|e| match e {
                Error::InfeasibleDeclaration { pulls, declaration, .. } => {
                    Error::InfeasibleDeclaration { arm: Some(arm), pulls, declaration }
                }
                other => other,
            })?;
        if let Some(d) = decl {
            self.ledger.push(LedgerEntry {
                t: self.drawn,
                arm,
                pulls_before: n,
                successes_before: r,
                batch_size: count,
                batch_successes: Some(sample.successes),
                declaration: d,
                p_t: 0.0,
                ln_p_t: ln_p,
                cum_cost: 0.0,
                holds: d.holds(n, r, count, sample.successes),
            });
        }
        self.counts.insert(arm, (n + count, r + sample.successes));
        self.next_fresh = self.next_fresh.max(arm + 1);
        self.drawn += count;
        out.extend(sample.rewards);
        Ok(())
    }

    fn fresh_arm(&mut self) -> ArmId {
        let a = self.next_fresh;
        self.next_fresh += 1;
        a
    }

    fn samples_used(&self) -> u64 {
        self.drawn
    }

    fn remaining(&self) -> Option<u64> {
        None
    }
}

/// Outcome of an adversarial run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarialRun {
    /// Output under the conditioned measure; the true mean is the forced one.
    pub record: RunRecord,
    pub ledger: CostLedger,
    /// Reason the run stopped early (an infeasible declaration).
    pub aborted: Option<String>,
    /// Pulls made by the algorithm itself.
    pub algorithm_samples: u64,
    /// Pulls drawn after batch compression.
    pub compressed_samples: u64,
}

/// An exploration algorithm as seen by the adversary: it pulls through the
/// given source and returns its output arm, if any.
pub type Algorithm<'a> = Box<dyn FnOnce(&mut dyn ArmSource) -> Result<Option<ArmId>> + 'a>;

/// Runs `algorithm` against the adversary on the admissible reservoir for
/// `(α, β, η, ϱ)`, batch-compressed on `batch_set(N, ϱ)`.
pub fn run_adversarial(settings: &AdversarySettings, algorithm: Algorithm<'_>) -> Result<AdversarialRun> {
    let adm = admissible_reservoir(settings.alpha, settings.beta, settings.eta, settings.rho)?;
    let set = batch_set(settings.budget, settings.rho)?;
    let source = AdversarialSource::new(settings, &adm, &set)?;
    let mut wrapped = BatchCompressed::new(source, set, Some(settings.budget));
    let outcome = algorithm(&mut wrapped);
    let algorithm_samples = wrapped.algorithm_samples();
    let mut source = wrapped.into_inner();
    let compressed_samples = source.samples_used();
    let mut record = RunRecord::new(settings.beta);
    record.samples_used = algorithm_samples;
    record.arms_touched = source.counts.len() as u64;
    let mut aborted = None;
    match outcome {
        Ok(Some(arm)) => {
            record.chosen = Some(arm);
            match source.declare_output(arm) {
                Ok(p) => {
                    record.true_mean = Some(p);
                    record.success = p >= settings.beta;
                }
                Err(e) => aborted = Some(e.to_string()),
            }
        }
        Ok(None) => {}
        Err(e @ (Error::InfeasibleDeclaration { .. } | Error::SamplingStalled { .. })) => {
            aborted = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(AdversarialRun { record, ledger: source.into_ledger(), aborted, algorithm_samples, compressed_samples })
}

/// Summary of a ledger against the reference envelope `c_{α,β} N / ln² N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrengthReport {
    pub cost: f64,
    /// `N / ln² N`.
    pub scale: f64,
    pub rate_constant: f64,
    /// `Cost / (N / ln² N)`.
    pub normalized_cost: f64,
    /// `C` solving `Cost = (c_{α,β} + C ϱ) N / ln² N`; reported, not asserted.
    pub fitted_c: f64,
    /// `e^{−Cost}`, the implied floor on the failure probability.
    pub failure_floor: f64,
}

pub fn strength_report(alpha: f64, beta: f64, rho: f64, budget: u64, ledger: &CostLedger) -> Result<StrengthReport> {
    let c = rate_constant(alpha, beta)?;
    let ln_n = (budget as f64).ln();
    let scale = budget as f64 / (ln_n * ln_n);
    let cost = ledger.total_cost();
    let normalized_cost = cost / scale;
    Ok(StrengthReport {
        cost,
        scale,
        rate_constant: c,
        normalized_cost,
        fitted_c: (normalized_cost - c) / rho,
        failure_floor: (-cost).exp(),
    })
}
