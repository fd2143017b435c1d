//! Regime-wise local Gaussian correlation for bivariate financial returns.
//!
//! The pipeline this crate supports:
//!
//! 1. fit a bivariate Gaussian hidden Markov model by direct numerical
//!    maximization of the scaled forward likelihood ([`hmm`]) and assign each
//!    observation its most probable regime;
//! 2. filter each series with a GARCH(1,1) model with Student-t innovations
//!    ([`garch`]);
//! 3. estimate a local Gaussian correlation map per regime on a common grid
//!    ([`lgc`]);
//! 4. test equality of the maps across regimes with a pooled bootstrap and
//!    Bonferroni correction ([`regimetest`]).
//!
//! [`copula`] and [`simstudy`] provide the Monte Carlo designs used to check
//! level and power of the test.
//!
//! The crate is `no_std` (it needs `alloc`). All randomness is seeded through
//! [`rng`], and loops over independent work units go through an
//! [`exec::Executor`] so a host can run them on threads without changing
//! results.

#![no_std]
// NaN-rejecting `!(x > 0.0)` checks and index loops over small matrices are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::inconsistent_digit_grouping)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod copula;
pub mod error;
pub mod exec;
pub mod garch;
pub mod hmm;
pub mod lgc;
pub mod linalg;
pub mod math;
pub mod optim;
pub mod regimetest;
pub mod rng;
pub mod simstudy;
pub mod stats;
pub mod timeseries;

pub use error::{Error, Result};
pub use timeseries::ReturnSeries;
