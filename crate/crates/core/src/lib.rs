//! Learned measurement likelihoods for Bayes filters.
//!
//! A conditional autoencoder is trained on pairs of synthetic depth images
//! that share all unmodeled scene content but differ in the modeled state.
//! At inference time the encoder summarizes the observed image, the decoder
//! re-renders it for any queried state, and the reconstruction error turns
//! into a particle weight.
//!
//! This crate is `no_std` + `alloc`. File formats, the threaded data
//! pipeline and the command line live in the `dmu` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
mod error;
pub mod filter;
pub mod likelihood;
pub mod model;
pub mod render;
pub mod rng;
pub mod scene;
pub mod training;

pub use error::{Error, Result};
