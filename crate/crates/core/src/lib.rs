//! Translation- and scale-equivariant 1-D convolutional networks on the
//! dilation-translation group, with a classical time-frequency transform
//! suite used as a numerical oracle.

pub mod autodiff;
pub mod conv;
pub mod datasets;
pub mod error;
pub mod group;
pub mod layers;
pub mod models;
pub mod spline;
pub mod tensor;
pub mod trainer;
pub mod transforms;

pub use error::{Error, Result};
pub use tensor::Tensor;
