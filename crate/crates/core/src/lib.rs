//! Sparse autoencoders, linear probes and disentanglement metrics for pooled
//! hidden representations of audio models.
//!
//! The pipeline consumes pre-extracted embeddings (one ATNS tensor per
//! utterance and layer, indexed by a JSON manifest) and acoustic factor
//! tables (CSV), and produces:
//!
//! - TopK SAEs trained per layer and sparsity level ([`sae`]),
//! - linear-probe accuracies on raw embeddings and on SAE codes ([`probe`]),
//! - per-factor R² informativeness, completeness and k-NN entropy
//!   ([`disentangle`]),
//! - run trees, CSV summaries and SVG figures ([`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod disentangle;
pub mod numerics;
pub mod probe;
pub mod sae;
pub mod synth;
pub mod tensor;

pub use data::{
    mean_pool, split_train_val, standardize_columns, DatasetManifest, FactorFamilyMap, FactorTable,
    Family, Split,
};
pub use disentangle::{run_disentanglement, DisentangleConfig, DisentangleReport, LamPolicy};
pub use probe::{probe_accuracy, train_probe, ProbeConfig, ProbeModel, ProbeReport};
pub use sae::{
    eval_reconstruction, sparsity_to_k, train_sae, SaeModel, SaeTrainConfig,
    SaeTrainReport,
};
pub use tensor::{load_tensor, save_tensor, Tensor};
