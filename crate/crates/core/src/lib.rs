//! Frequency-domain stability analysis of grid-connected voltage-source
//! converters using generalized impedances, with a nonlinear dq-frame
//! simulator as an independent check.

pub mod case;
pub mod error;
pub mod gisc;
pub mod network;
pub mod plant;
pub mod poles;
pub mod ratfun;
pub mod timedom;

pub use error::{Error, Result};
