//! Closed-form performance analysis and AP duplex-mode optimization for
//! network-assisted full-duplex (NAFD) cell-free ISAC networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: geometry, antenna arrays, steering vectors, duplex assignments.
//! - [`statistics`]: second-order channel statistics and MMSE estimation statistics.
//! - [`rates`]: closed-form downlink/uplink SINR and rates.
//! - [`sensing`]: closed-form CRLBs, localization error rate and a numeric FIM.
//! - [`montecarlo`]: channel sampling and empirical SINR/residual estimates.
//! - [`admo`]: objective evaluation, solver registry, Q-learning, DQN and Pareto tools.
//! - [`config`]: the key-value configuration file schema.

pub mod admo;
pub mod analysis;
pub mod config;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod rates;
pub mod scenario;
pub mod sensing;
pub mod statistics;

pub use analysis::ScenarioAnalysis;
pub use error::{Error, Result};
pub use scenario::{build_scenario, DuplexAssignment, Scenario, SystemConfig};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
