//! Stochastic reliability of an n-node blockchain attacked by k independent
//! hackers, with random detection and re-set times.
//!
//! Two engines compute the same quantities and check each other:
//!
//! * [`analytic`]: quadrature plus a discretized renewal equation.
//! * [`montecarlo`]: seeded replication with per-replication substreams.
//!
//! [`econ`] layers the net-revenue model over either engine and [`cli`]
//! drives batch experiments that write CSV.

pub mod analytic;
pub mod cli;
pub mod dists;
pub mod econ;
mod error;
pub mod model;
pub mod montecarlo;
pub mod quad;

pub use error::{Error, Result};
pub use dists::{DistributionSpec, UniformSource};
pub use model::{AttackMode, BlockchainSpec};
