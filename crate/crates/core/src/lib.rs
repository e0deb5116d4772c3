pub mod acoustic;
pub mod audio;
pub mod error;
pub mod masking;
pub mod metrics;
pub mod model_io;
pub mod nn;
pub mod pipeline;
pub mod pqmf;
pub mod tensor;
pub mod vocoder;

pub use error::{Error, FormatError, Result};
pub use tensor::Tensor;
