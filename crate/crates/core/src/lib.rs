//! Core library for tri-coupled relative-attention recurrent networks.
//!
//! Everything in this crate is pure computation over in-memory values:
//! dense tensors with reverse-mode differentiation, the three recurrent
//! cell variants (vanilla, coupled, tri-coupled), soft attention over
//! feature-map locations, the five end-to-end architectures, the SGD
//! training loop and the observation-ratio evaluation protocol.
//!
//! The crate is `no_std` (with `alloc`); file formats, dataset loading
//! and the command-line interface live in the companion `tcra` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod attention;
pub mod cells;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod param;
pub mod real;
pub mod sample;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use param::{ParamId, ParamSet, Parameter};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
