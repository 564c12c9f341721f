//! Training and algebraic probing of a word-embedding GRU text classifier.
//!
//! The crate is `no_std` with `alloc`: it holds every numerical routine and
//! no IO. File formats, the experiment runner and the command line live in
//! the `lieprobe` companion crate.

#![no_std]

extern crate alloc;

pub mod adam;
pub mod corpus;
pub mod error;
pub mod geometry;
pub mod latent;
pub mod model;
pub mod probes;
pub mod rng;
pub mod sweep;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
