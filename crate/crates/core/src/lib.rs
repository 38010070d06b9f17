//! Identity-preserving disentangled finetuning of a toy conditional
//! diffusion model, evaluated on a procedural synthetic benchmark.
//!
//! The crate is organized around a small tape-based autodiff engine
//! ([`autodiff`]) over dense tensors ([`tensor`]); on top of it sit the
//! diffusion stack ([`diffusion`]), the frozen text/image encoders
//! ([`encoders`]), low-rank adaptation and the mask adapter ([`adaptation`]),
//! the finetuning loop ([`tuning`]), the synthetic benchmark ([`synthbench`])
//! and its evaluation metrics ([`eval`]), plus binary/file formats ([`io`]).
//!
//! All stochastic behaviour is seeded ([`rng`]) and all kernels produce
//! bit-identical results with and without the `parallel` feature.

pub mod adaptation;
pub mod autodiff;
pub mod diffusion;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod exec;
pub mod io;
pub mod kernels;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod synthbench;
pub mod tensor;
pub mod tuning;

pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};
pub use tensor::Tensor;
