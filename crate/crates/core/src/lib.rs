//! Direct transient-stability analysis with energy functions improved by
//! composition with the discretized flow map.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cct;
pub mod direct;
pub mod dynamics;
pub mod energy;
pub mod equilibria;
pub mod error;
pub mod expansion;
pub mod grid;
pub mod models;

pub use error::{Error, Result};
