//! Contact processes in evolving random environments (CPERE) on finite boxes
//! of the integer lattice.
//!
//! Everything is driven by a single realised Poisson point set, the
//! [`graphical::Timeline`]: infection arrows, recovery marks and background
//! flip candidates, each carrying a uniform mark. Every process in the crate
//! (the CPERE itself, the Richardson upper bound, truncated and delayed
//! variants, the dynamical-percolation sandwich and the time-reversed dual)
//! is a deterministic function of a timeline, which is what makes the
//! pathwise couplings checkable event by event.
//!
//! Closed-form quantities (growth constant, Lambert W, hitting bounds, rate
//! bounds, Wilson intervals) are generic over [`num::Real`]; the simulation
//! layer works in `f64`.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod background;
pub mod blocks;
pub mod engine;
pub mod error;
pub mod graphical;
pub mod lattice;
pub mod num;
pub mod seed;

pub use error::{Error, Result};

pub type RateBoundsF64 = background::RateBounds<f64>;
pub type RateBoundsF32 = background::RateBounds<f32>;
pub type ErgodicityMarginF64 = background::ErgodicityMargin<f64>;
pub type ErgodicityMarginF32 = background::ErgodicityMargin<f32>;
pub type GrowthConstantF64 = analysis::growth::GrowthConstant<f64>;
pub type GrowthConstantF32 = analysis::growth::GrowthConstant<f32>;
pub type IntervalF64 = analysis::estimate::Interval<f64>;
pub type IntervalF32 = analysis::estimate::Interval<f32>;
