//! # structckn
//!
//! Convolutional kernel networks feeding conditional random fields, trained
//! with stochastic dual coordinate ascent (or block-coordinate Frank-Wolfe),
//! with AD3 for constrained MAP inference, plus a desk-scale airline crew
//! pairing pipeline built on top of the predictor.
//!
//! The crate is organized by capability; `examples/` has one runnable
//! program per capability.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ckn;
pub mod cpp;
pub mod crew;
pub mod error;
pub mod graph;
pub mod inference;
pub mod ocr;
pub mod optim;
pub mod trainer;
pub mod rng;

pub use error::{Error, Result};
