use crate::error::{Error, Result};
use crate::numeric::{mix64, unit_open_closed, GOLDEN_GAMMA};

use super::Reservoir;

/// Index of an arm in the (conceptually infinite) arm sequence.
pub type ArmId = usize;

const ARM_SALT: u64 = 0x243f_6a88_85a3_08d3;
const MEAN_SALT: u64 = 0xa076_1d64_78bd_642f;

/// Anything an exploration algorithm can pull arms from: the plain
/// environment, a batch-compressing wrapper or the adversary.
pub trait ArmSource {
    /// One pull of `arm`, returning the Bernoulli reward.
    fn pull(&mut self, arm: ArmId) -> Result<bool>;

    /// `count` pulls of `arm` appended in order to `out`.
    ///
    /// If the budget runs out part way, the affordable pulls are still made
    /// (and appended) before `BudgetExhausted` is returned.
    fn pull_batch(&mut self, arm: ArmId, count: u64, out: &mut Vec<bool>) -> Result<()> {
        for _ in 0..count {
            out.push(self.pull(arm)?);
        }
        Ok(())
    }

    /// `count` pulls of `arm`, returning the number of successes. Same
    /// partial-consumption rule as [`ArmSource::pull_batch`].
    fn pull_many(&mut self, arm: ArmId, count: u64) -> Result<u64> {
        let mut successes = 0;
        for _ in 0..count {
            successes += self.pull(arm)? as u64;
        }
        Ok(successes)
    }

    /// The next arm index that has never been pulled or handed out.
    fn fresh_arm(&mut self) -> ArmId;

    fn samples_used(&self) -> u64;

    /// Samples still available, `None` when unbudgeted.
    fn remaining(&self) -> Option<u64>;
}

/// Per-arm bookkeeping. The true mean is hidden from algorithms, which only
/// see rewards through [`ArmSource`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmRecord {
    pub(crate) true_mean: f64,
    pub pulls: u64,
    pub total_reward: u64,
    key: u64,
    threshold: u64,
}

impl ArmRecord {
    pub fn empirical_mean(&self) -> Option<f64> {
        (self.pulls > 0).then(|| self.total_reward as f64 / self.pulls as f64)
    }

    pub fn true_mean(&self) -> f64 {
        self.true_mean
    }

    #[inline]
    fn reward(&self, pull_index: u64) -> bool {
        let bits = mix64(self.key.wrapping_add(pull_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)));
        (bits >> 11) < self.threshold
    }
}

/// Seeded environment serving Bernoulli rewards from arms drawn from a reservoir.
///
/// The reward of pull `n` of arm `i` is a pure function of
/// `(master_seed, i, n)`, so the order in which arms are instantiated never
/// changes what they pay.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    reservoir: Reservoir,
    master_seed: u64,
    arms: Vec<ArmRecord>,
    samples_used: u64,
    budget: Option<u64>,
    next_fresh: ArmId,
    last_pulled: Option<ArmId>,
}

impl BanditEnv {
    pub fn new(reservoir: Reservoir, master_seed: u64) -> Self {
        BanditEnv {
            reservoir,
            master_seed,
            arms: Vec::new(),
            samples_used: 0,
            budget: None,
            next_fresh: 0,
            last_pulled: None,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    /// Sets the total budget (counting samples already used).
    pub fn set_budget(&mut self, budget: Option<u64>) {
        self.budget = budget;
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Arm record, if the arm has been instantiated.
    pub fn arm(&self, arm: ArmId) -> Option<&ArmRecord> {
        self.arms.get(arm)
    }

    /// True mean of an arm, drawing it if needed. For evaluation only.
    pub fn true_mean(&mut self, arm: ArmId) -> f64 {
        self.ensure(arm);
        self.arms[arm].true_mean
    }

    pub fn arms_touched(&self) -> u64 {
        self.arms.iter().filter(|a| a.pulls > 0).count() as u64
    }

    pub fn last_pulled(&self) -> Option<ArmId> {
        self.last_pulled
    }

    fn ensure(&mut self, arm: ArmId) {
        while self.arms.len() <= arm {
            let i = self.arms.len() as u64;
            let key = mix64(mix64(self.master_seed ^ ARM_SALT) ^ i.wrapping_mul(GOLDEN_GAMMA));
            let p = self.reservoir.sample_with(unit_open_closed(mix64(key ^ MEAN_SALT)));
            self.arms.push(ArmRecord {
                true_mean: p,
                pulls: 0,
                total_reward: 0,
                key,
                threshold: bernoulli_threshold(p),
            });
        }
    }

    fn affordable(&self, count: u64) -> u64 {
        match self.budget {
            Some(b) => count.min(b.saturating_sub(self.samples_used)),
            None => count,
        }
    }

    fn touch(&mut self, arm: ArmId) {
        self.ensure(arm);
        self.last_pulled = Some(arm);
        self.next_fresh = self.next_fresh.max(arm + 1);
    }
}

/// Integer threshold `t` with `P[U53 < t] = p` for a 53-bit uniform `U53`.
fn bernoulli_threshold(p: f64) -> u64 {
    (p * (1u64 << 53) as f64).round() as u64
}

impl ArmSource for BanditEnv {
    fn pull(&mut self, arm: ArmId) -> Result<bool> {
        if self.affordable(1) == 0 {
            return Err(Error::BudgetExhausted);
        }
        self.touch(arm);
        let rec = &mut self.arms[arm];
        let r = rec.reward(rec.pulls);
        rec.pulls += 1;
        rec.total_reward += r as u64;
        self.samples_used += 1;
        Ok(r)
    }

    fn pull_batch(&mut self, arm: ArmId, count: u64, out: &mut Vec<bool>) -> Result<()> {
        let take = self.affordable(count);
        if take > 0 {
            self.touch(arm);
            let rec = &mut self.arms[arm];
            out.reserve(take as usize);
            for n in rec.pulls..rec.pulls + take {
                let r = rec.reward(n);
                rec.total_reward += r as u64;
                out.push(r);
            }
            rec.pulls += take;
            self.samples_used += take;
        }
        if take < count {
            Err(Error::BudgetExhausted)
        } else {
            Ok(())
        }
    }

    fn pull_many(&mut self, arm: ArmId, count: u64) -> Result<u64> {
        let take = self.affordable(count);
        let mut successes = 0;
        if take > 0 {
            self.touch(arm);
            let rec = &mut self.arms[arm];
            for n in rec.pulls..rec.pulls + take {
                successes += rec.reward(n) as u64;
            }
            rec.pulls += take;
            rec.total_reward += successes;
            self.samples_used += take;
        }
        if take < count {
            Err(Error::BudgetExhausted)
        } else {
            Ok(successes)
        }
    }

    fn fresh_arm(&mut self) -> ArmId {
        let arm = self.next_fresh;
        self.next_fresh += 1;
        arm
    }

    fn samples_used(&self) -> u64 {
        self.samples_used
    }

    fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.samples_used))
    }
}
