//! Mean curvature flow of graphs meeting a horizontal plane at a prescribed
//! contact angle.
//!
//! The crate provides a rotationally symmetric solver ([`radial`]), a solver
//! on a polar grid over the unit disk ([`planar`]), compatible initial data
//! ([`seed`]) and checks of the geometric identities and monotone quantities
//! the flow is expected to satisfy ([`diagnose`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod diagnose;
pub mod geometry;
pub mod grid;
pub mod planar;
pub mod radial;
pub mod seed;
pub mod snapshot;
pub mod trace;

pub use error::{Error, Result};
