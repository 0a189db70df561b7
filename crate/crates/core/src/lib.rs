//! Computational twin of a synchronously pumped OPO below threshold: a
//! multimode squeezed frequency comb is simulated from its supermodes,
//! measured through equal-power spectral pixels, and reconstructed from the
//! pixel intensity-noise data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comb;
pub mod config;
pub mod error;
pub mod gaussian_state;
pub mod io;
pub mod measurement;
pub mod pipeline;
pub mod reconstruction;

pub use error::{Error, Result};
