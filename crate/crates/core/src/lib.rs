//! Concentration bounds, Monte Carlo experiments and surveillance control
//! limits for sums of Negative Binomial counts.
//!
//! - [`distributions`]: NB in `(r, p)` and NB2 `(mu, kappa)` form, the
//!   shared-Gamma mixture, exact samplers.
//! - [`bounds`]: Chernoff, Kolmogorov and Bernstein-type maximal bounds,
//!   their inversion, and exact-tail oracles for small instances.
//! - [`simulation`]: seeded, worker-count-invariant replication engine.
//! - [`surveillance`]: cumulative control limits and the weekly monitor.
//! - [`reproduce`]: end-to-end comparison table, validation and figure data.

pub mod bounds;
pub mod distributions;
pub mod error;
pub mod reproduce;
pub mod rng;
pub mod simulation;
pub mod surveillance;

pub use error::{Error, Result};
pub use rng::RngHandle;
