//! Cascaded sequence-to-sequence translation with a differentiable
//! interface between a non-autoregressive first stage and an
//! autoregressive second stage.

pub mod autodiff;
pub mod cascade;
pub mod config;
pub mod error;

pub use autodiff::{Graph, Scalar, Tensor, Var};
pub use error::{Error, Result};
pub mod data;
pub mod decoding;
pub mod evaluation;
pub mod nnet;
pub mod training;
