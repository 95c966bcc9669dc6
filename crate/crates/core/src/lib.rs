pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod lptn;
pub mod model;
pub mod mps;
pub mod observables;
pub mod oracles;
pub mod quench;
mod train;
pub mod scalar;
pub mod tensor;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64 as c64;
pub use scalar::Scalar;
pub use tensor::DenseTensor;

/// Double-precision complex tensor used by the engines.
pub type Tensor = DenseTensor<c64>;
/// Single-precision complex tensor.
pub type Tensor32 = DenseTensor<num_complex::Complex32>;
