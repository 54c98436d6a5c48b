//! Békollé–Bonami weights on truncated dyadic trees over the unit disc,
//! shifted-grid averaging, and Bloch-type dyadic martingales.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x <= b)` sends NaN to the failing branch

pub mod averaging;
pub mod error;
pub mod extend;
pub mod factor;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod lattice;
pub mod martingale;
pub mod sample;

pub use error::{Error, Result};
