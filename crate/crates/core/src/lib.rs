// Negated float comparisons deliberately send NaN down the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod critical;
pub mod distributions;
pub mod error;
pub mod fileio;
pub mod hypothesis;
pub mod numeric;
pub mod power;
pub mod signal;
pub mod statistic;
