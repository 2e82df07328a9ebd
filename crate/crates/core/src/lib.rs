//! Risk-aware batch bandits for on-farm identification of management
//! practices.
//!
//! - [`metrics`]: empirical and exact CVaR, VaR, confidence bands, and the
//!   yield-excess reward.
//! - [`policies`]: BCB, batch Explore-Then-Commit and two reference
//!   strategies.
//! - [`environment`]: bounded synthetic reward laws, cohorts and volunteers.
//! - [`harness`]: seeded replication campaigns, regret and CVaR curves,
//!   CSV reports.

pub mod environment;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod policies;

pub use error::{Error, Result};
pub use metrics::RiskLevel;
