//! Economic security of services secured through restaking.
//!
//! Validators lock stake σ(v) and spread it across Shared Security Providers
//! (SSPs) through an allocation matrix ω. An attacker who controls a fraction
//! θ of an SSP's stake can break the services it secures for a profit π.
//! This crate evaluates that trade-off:
//!
//! - [`model`]: stakes, allocations, parameters, attack plans and utilities.
//! - [`security`]: weak and strong security, minimum attack costs under the
//!   isolated (one pool per SSP) and shared (one pool for all) architectures.
//! - [`allocation`]: maximin allocation and equilibrium checks.
//! - [`bribery`]: exact minimum bribery cost per SSP.
//! - [`risk`]: price-driven variance of dollar security, correlations,
//!   stochastic dominance and volatility shocks.
//! - [`simulate`]: seeded Monte Carlo comparison of the architectures.
//!
//! ```
//! use restake::model::{AllocationMatrix, EconomicParams, ModelKind, StakeTable};
//! use restake::security::min_attack_cost;
//!
//! let stakes = StakeTable::new(vec![60.0, 40.0]).unwrap();
//! let omega = AllocationMatrix::from_rows(vec![vec![30.0, 30.0], vec![10.0, 30.0]]).unwrap();
//! let params = EconomicParams::new(10.0, 1.0 / 3.0, 0.1).unwrap();
//!
//! let isolated = min_attack_cost(&omega, &params, ModelKind::Isolated).unwrap();
//! let shared = min_attack_cost(&omega, &params, ModelKind::Shared).unwrap();
//! assert!(isolated.min_cost <= shared.min_cost);
//! # let _ = stakes;
//! ```

pub mod allocation;
pub mod bribery;
pub mod error;
pub mod model;
pub mod risk;
pub mod sampling;
pub mod security;
pub mod simulate;

pub use error::{Error, Result};

/// Book chapters, compiled and run as doc-tests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/security.md")]
    pub struct Security;
    #[doc = include_str!("../../../book/src/allocation.md")]
    pub struct Allocation;
    #[doc = include_str!("../../../book/src/bribery.md")]
    pub struct Bribery;
    #[doc = include_str!("../../../book/src/risk.md")]
    pub struct Risk;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
