//! Optimal debt-relief mechanism with numerical verification and a
//! secret-shared settlement protocol.
//!
//! * [`distributions`]: bounded creditor-type distributions.
//! * [`mechanism`]: the optimal investment rule, pivotal types and transfers.
//! * [`analysis`]: incentive, participation and welfare checks.
//! * [`closedform`]: the two-creditor uniform economy in closed form.
//! * [`protocol`]: settlement without a trusted party.

pub mod analysis;
pub mod closedform;
pub mod distributions;
pub mod error;
pub mod mechanism;
pub mod protocol;
pub mod quadrature;

pub use distributions::{DistributionSpec, Family, SupportInterval, TypeDistribution};
pub use error::{Error, Result};
pub use mechanism::{MarketParams, Outcome, OutcomeFlag, Pivotal, RevisionSpec, TypeProfile};
pub use quadrature::Estimate;
