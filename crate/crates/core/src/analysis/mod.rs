//! Monte Carlo estimators and closed-form quantities built on the engine.

pub mod critical;
pub mod estimate;
pub mod growth;
pub mod pathwise;
pub mod phase;
pub mod reports;
pub mod survival;
