//! Bi-directional knowledge transfer between a message-passing graph
//! network and the structure-free MLP obtained by replacing its
//! propagation operator with the identity.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod diagnostics;
pub mod error;
pub mod generator;
pub mod graph;
pub mod models;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = tensor::Matrix<f64>;
pub type SparseCsr = tensor::SparseCsr<f64>;
pub type Tape = tensor::Tape<f64>;
pub type Graph = graph::Graph<f64>;
pub type Model = models::Model<f64>;
pub type Propagation = models::Propagation<f64>;
pub type ModelParams = models::ModelParams<f64>;
pub type GeneratorParams = generator::GeneratorParams<f64>;

pub type Matrix32 = tensor::Matrix<f32>;
pub type SparseCsr32 = tensor::SparseCsr<f32>;
pub type Tape32 = tensor::Tape<f32>;
pub type Graph32 = graph::Graph<f32>;
pub type Model32 = models::Model<f32>;
pub type Propagation32 = models::Propagation<f32>;
pub type ModelParams32 = models::ModelParams<f32>;
pub type GeneratorParams32 = generator::GeneratorParams<f32>;
