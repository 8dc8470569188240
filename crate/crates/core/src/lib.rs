#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustics;
pub mod bubble;
pub mod error;
pub mod eval;
pub mod flow;
pub mod network;
pub mod pipeline;
pub mod rng;
pub mod tracks;

pub use error::{Error, Result};
