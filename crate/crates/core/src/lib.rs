//! Trinocular self-supervised depth estimation with a single generator and
//! twin discriminators.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. File formats, the training driver and the command-line tool live
//! in the companion `tridepth` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod diff;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod scalar;
pub mod synth;
pub mod train;
pub mod warp;

pub use diff::{Graph, Tensor, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;
