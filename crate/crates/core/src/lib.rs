pub mod autodiff;
pub mod checks;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod param;
pub mod plot;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

/// Scalar type used for training and inference.
pub type Real = f32;
pub type Params = param::ParamStore<Real>;
pub type RealTensor = tensor::Tensor<Real>;
pub type RealGraph<'p> = autodiff::Graph<'p, Real>;

pub use error::{Error, Result};
