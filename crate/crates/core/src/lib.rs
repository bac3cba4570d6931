#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdl;
pub mod cdu;
pub mod cli;
pub mod csc;
pub mod error;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod signal_model;

pub use error::{Error, Result};
