//! Pure-exploration algorithms for bandits with infinitely many Bernoulli arms.
//!
//! Arms are drawn i.i.d. from a *reservoir* distribution over `[0, 1]`. The
//! crate provides:
//!
//! * [`reservoir`]: reservoir distributions and the seeded [`BanditEnv`].
//! * [`fisher`]: the Fisher information distance on Bernoulli means and the
//!   rate constant `c(α, β)`.
//! * [`stats`]: exact binomial / hypergeometric primitives and tail oracles.
//! * [`fixed_confidence`]: quantile estimation and the accept loop.
//! * [`fixed_budget`]: the moving-threshold `N`-sample algorithm, its
//!   multi-arm variant and the unknown-quantile reductions.
//! * [`adversary`]: the randomness-distorting adversary, batch compression and
//!   the cost ledger.
//! * [`harness`]: deterministic parallel Monte Carlo trials and result output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod error;
pub mod fisher;
pub mod fixed_budget;
pub mod fixed_confidence;
pub mod harness;
pub mod numeric;
pub mod record;
pub mod reservoir;
pub mod stats;

pub use error::{Error, Result};
pub use record::RunRecord;
pub use reservoir::{ArmId, ArmSource, BanditEnv, Reservoir};
