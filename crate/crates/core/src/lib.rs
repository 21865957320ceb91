//! Subject-transfer brain decoding and principal sensitivity analysis.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs and an explicit seed; file formats, experiment
//! orchestration and the command line live in the `neurodecode` crate.
//!
//! - [`linalg`]: dense matrices and a cyclic Jacobi symmetric eigensolver
//! - [`data`]: datasets, z-scoring, region averaging, subject-wise splits and
//!   the synthetic multi-subject generator
//! - [`network`]: feed-forward ReLU/softmax classifier trained by minibatch SGD
//!   with dropout and early stopping
//! - [`sensitivity`]: input gradients, sensitivity maps, sensitivity kernels
//!   and principal sensitivity maps (PSMs)
//! - [`analysis`]: PSM similarity, agglomerative clustering and thresholded maps
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod data;
mod error;
pub mod linalg;
pub mod network;
pub mod seed;
pub mod sensitivity;

pub use error::{Error, Result};
pub use linalg::{EigenPairs, Matrix};
