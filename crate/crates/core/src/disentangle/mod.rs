//! Factor regressions and disentanglement metrics over a representation.

mod entropy;
mod lasso;
mod metrics;
mod pipeline;

pub use entropy::{knn_entropy, knn_entropy_seeded};
pub use lasso::{fit_lasso, lambda_max, Design, LassoModel, LassoOptions};
pub use metrics::{completeness, r2_score, spearman};
pub use pipeline::{
    run_disentanglement, DisentangleConfig, DisentangleReport, FactorResult, ImportanceMatrix,
    LamPolicy, RankedFactor, SkippedFactor,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DisentangleError {
    #[error("target has zero variance")]
    DegenerateTarget,
    #[error("need more than {k} samples, got {m}")]
    InsufficientSamples { m: usize, k: usize },
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("ids do not align: {} representation rows without factors {:?}, {} factor rows not in the representation {:?}", missing.len(), missing, unknown.len(), unknown)]
    Alignment {
        missing: Vec<String>,
        unknown: Vec<String>,
    },
    #[error("invalid lambda policy {0:?}")]
    BadLamPolicy(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}
