// `!(x >= lo)` style checks are kept because they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod domain;
pub mod error;
pub mod harness;
pub mod infill;
pub mod lhs;
pub mod mbo;
pub mod metrics;
pub mod minima;
pub mod objectives;
pub mod optim;
pub mod random;
pub mod stats;
pub mod surrogate;
