#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flops;
pub mod harness;
pub mod linalg;
pub mod baselines;
pub mod channel;
pub mod modem;
pub mod rf;
pub mod stm;
pub mod wesn;

pub use error::{Error, Result};
