//! Count-sketch compressed auxiliary state for first-order optimizers.
//!
//! Stochastic optimizers such as Momentum, Adagrad and Adam carry one or two
//! auxiliary variables per model parameter. For sparse embedding-style layers
//! those variables dominate memory even though at any moment only a small set
//! of heavy rows matters. This crate stores them in hashed sketch tensors
//! instead: a signed count-sketch with median queries for moving averages of
//! gradients, and a nonnegative count-min sketch with min queries for squared
//! gradients. The optimizer update rules are rewritten additively so they can
//! be applied directly to the sketch cells.
//!
//! The crate is generic over the scalar type through [`Real`], implemented
//! for `f32` and `f64`. Practical runs use `f32`; reference and oracle paths
//! use `f64`. Concrete aliases for the common instantiations live at the
//! crate root.

pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod hash;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod sketch;

pub use error::Error;
pub use scalar::Real;

/// Single-precision sketch tensor, the configuration used in real runs.
pub type SketchTensorF32 = sketch::SketchTensor<f32>;
/// Double-precision sketch tensor, used by oracle and shadow paths.
pub type SketchTensorF64 = sketch::SketchTensor<f64>;

/// Single-precision dense matrix.
pub type MatrixF32 = matrix::Matrix<f32>;
/// Double-precision dense matrix.
pub type MatrixF64 = matrix::Matrix<f64>;

/// Single-precision sparse gradient.
pub type SparseGradientF32 = optim::SparseGradient<f32>;
/// Double-precision sparse gradient.
pub type SparseGradientF64 = optim::SparseGradient<f64>;

/// Single-precision optimizer state.
pub type OptimizerStateF32 = optim::OptimizerState<f32>;
/// Double-precision optimizer state.
pub type OptimizerStateF64 = optim::OptimizerState<f64>;
