#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod choice;
pub mod data;
pub mod error;
pub mod geo;
pub mod equilibrium;
pub mod instruments;
pub mod linear;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
