pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod imageio;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod optim;
pub mod pipeline;
pub mod rearrange;
pub mod resize;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod tile;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};

/// Default training precision.
pub type Tensor32 = Tensor<f32>;
/// Verification precision for gradient checks.
pub type Tensor64 = Tensor<f64>;
