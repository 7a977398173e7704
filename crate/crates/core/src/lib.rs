// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod error;
pub mod fbm;
pub mod harness;
pub mod kernel;
pub mod local_time;
pub mod oracles;
pub mod par;
pub mod quad;
pub mod rng;
