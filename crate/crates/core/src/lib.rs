#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimators;
pub mod format;
pub mod kernels;
pub mod lkernel;
pub mod mellin;
pub mod quad;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
