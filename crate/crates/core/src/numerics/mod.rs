//! Numerical kernels shared by the trainers and metrics.

mod adam;
mod linalg;
mod rng;
mod special;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use linalg::{dot_f64, matmul, matvec, transpose};
pub use rng::Rng;
pub use special::{digamma, soft_threshold, EULER_MASCHERONI};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
}
