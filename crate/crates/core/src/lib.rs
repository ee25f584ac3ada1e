// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod deformed_math;
pub mod densities;
pub mod divergences;
pub mod error;
pub mod parallel;
pub mod paths;
pub mod samplers;
pub mod schedules;

pub use error::{Error, Result};
