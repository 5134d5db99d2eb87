//! TopK sparse autoencoder over pooled embeddings.
//!
//! `z = TopK(ReLU(W_enc x + b_enc))`, `x_hat = W_dec z` (no decoder bias),
//! trained with minibatch Adam on the per-sample squared reconstruction error
//! averaged over the batch. Gradients pass only through the surviving
//! coordinates of the TopK mask.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{adam_step, dot_f64, AdamConfig, AdamState, NumericsError, Rng};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum SaeError {
    #[error("sparsity {sparsity} leaves no active latent out of {n_latent}")]
    SparsityTooHigh { sparsity: f64, n_latent: usize },
    #[error("sparsity {0} must lie strictly between 0 and 1")]
    BadSparsity(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<NumericsError> for SaeError {
    fn from(e: NumericsError) -> Self {
        SaeError::Shape(e.to_string())
    }
}

/// `k = floor((1 - sparsity) * n_latent)`.
pub fn sparsity_to_k(sparsity: f64, n_latent: usize) -> Result<usize, SaeError> {
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(SaeError::BadSparsity(sparsity));
    }
    // The epsilon absorbs representation error in 1 - s, e.g. (1 - 0.9) * 10.
    let k = ((1.0 - sparsity) * n_latent as f64 + 1e-9).floor() as usize;
    if k == 0 {
        return Err(SaeError::SparsityTooHigh {
            sparsity,
            n_latent,
        });
    }
    Ok(k)
}

/// Indices of the TopK survivors after ReLU, ascending. Larger values win;
/// equal values go to the lower index. Fewer than `k` indices come back when
/// fewer than `k` pre-activations are positive.
pub fn topk_active(pre: &[f32], k: usize) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..pre.len()).filter(|&i| pre[i] > 0.0).collect();
    if pos.len() > k {
        let order = |&a: &usize, &b: &usize| match pre[b].partial_cmp(&pre[a]) {
            Some(Ordering::Equal) | None => a.cmp(&b),
            Some(o) => o,
        };
        pos.select_nth_unstable_by(k - 1, order);
        pos.truncate(k);
        pos.sort_unstable();
    }
    pos
}

pub fn topk_relu(pre: &[f32], k: usize) -> Vec<f32> {
    let mut out = vec![0.0; pre.len()];
    for i in topk_active(pre, k) {
        out[i] = pre[i];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    /// `n_latent x d_in`
    pub w_enc: Tensor,
    pub b_enc: Vec<f32>,
    /// `d_in x n_latent`
    pub w_dec: Tensor,
    pub k: usize,
}

/// Nonzero coordinates of a code, ascending by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub idx: Vec<usize>,
    pub val: Vec<f32>,
}

impl SparseCode {
    pub fn to_dense(&self, n: usize) -> Vec<f32> {
        let mut out = vec![0.0; n];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            out[i] = v;
        }
        out
    }
}

impl SaeModel {
    /// Assembles a model from its parts, checking shapes and `1 <= k <= N`.
    pub fn from_parts(w_enc: Tensor, b_enc: Vec<f32>, w_dec: Tensor, k: usize) -> Result<Self, SaeError> {
        let (n, d) = (w_enc.rows(), w_enc.cols());
        if w_enc.rank() != 2 || w_dec.rank() != 2 {
            return Err(SaeError::Shape("weights must be matrices".into()));
        }
        if b_enc.len() != n || w_dec.rows() != d || w_dec.cols() != n {
            return Err(SaeError::Shape(format!(
                "w_enc {:?}, b_enc [{}], w_dec {:?}",
                w_enc.shape(),
                b_enc.len(),
                w_dec.shape()
            )));
        }
        if k == 0 || k > n {
            return Err(SaeError::Config(format!("k = {k} outside 1..={n}")));
        }
        let finite = w_enc.first_non_finite().is_none()
            && w_dec.first_non_finite().is_none()
            && b_enc.iter().all(|v| v.is_finite());
        if !finite {
            return Err(SaeError::Config("non-finite weights".into()));
        }
        Ok(Self {
            w_enc,
            b_enc,
            w_dec,
            k,
        })
    }

    /// Encoder rows uniform in `[-1/sqrt(D), 1/sqrt(D)]`, zero bias, decoder
    /// set to the encoder transpose with unit-norm columns.
    pub fn init(d_in: usize, n_latent: usize, k: usize, rng: &mut Rng) -> Result<Self, SaeError> {
        if d_in == 0 || n_latent <= d_in {
            return Err(SaeError::Config(format!(
                "latent width {n_latent} must exceed input width {d_in}"
            )));
        }
        let bound = 1.0 / (d_in as f64).sqrt();
        let enc: Vec<f32> = (0..n_latent * d_in)
            .map(|_| rng.uniform_range(-bound, bound) as f32)
            .collect();
        let w_enc = Tensor::matrix(n_latent, d_in, enc).expect("encoder shape");
        let mut dec = vec![0.0f32; d_in * n_latent];
        for n in 0..n_latent {
            let row = w_enc.row(n);
            let norm = dot_f64(row, row).sqrt();
            let norm = if norm > 0.0 { norm } else { 1.0 };
            for (d, &v) in row.iter().enumerate() {
                dec[d * n_latent + n] = (v as f64 / norm) as f32;
            }
        }
        let w_dec = Tensor::matrix(d_in, n_latent, dec).expect("decoder shape");
        Self::from_parts(w_enc, vec![0.0; n_latent], w_dec, k)
    }

    pub fn d_in(&self) -> usize {
        self.w_enc.cols()
    }

    pub fn n_latent(&self) -> usize {
        self.w_enc.rows()
    }

    pub fn pre_activations(&self, x: &[f32]) -> Vec<f32> {
        self.w_enc
            .iter_rows()
            .zip(&self.b_enc)
            .map(|(row, &b)| (dot_f64(row, x) + b as f64) as f32)
            .collect()
    }

    pub fn encode_sparse(&self, x: &[f32]) -> Result<SparseCode, SaeError> {
        if x.len() != self.d_in() {
            return Err(SaeError::Shape(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.d_in()
            )));
        }
        let pre = self.pre_activations(x);
        let idx = topk_active(&pre, self.k);
        let val = idx.iter().map(|&i| pre[i]).collect();
        Ok(SparseCode { idx, val })
    }

    pub fn encode(&self, x: &[f32]) -> Result<Vec<f32>, SaeError> {
        Ok(self.encode_sparse(x)?.to_dense(self.n_latent()))
    }

    /// Encodes every row of an `[M, D]` matrix into an `[M, N]` code matrix.
    pub fn encode_batch(&self, x: &Tensor) -> Result<Tensor, SaeError> {
        let n = self.n_latent();
        let mut out = Tensor::zeros(x.rows(), n);
        for (i, row) in x.iter_rows().enumerate() {
            let code = self.encode_sparse(row)?;
            let dst = out.row_mut(i);
            for (&j, &v) in code.idx.iter().zip(&code.val) {
                dst[j] = v;
            }
        }
        Ok(out)
    }

    fn decode_sparse_f64(&self, code: &SparseCode) -> Vec<f64> {
        let n = self.n_latent();
        let w = self.w_dec.data();
        (0..self.d_in())
            .map(|d| {
                let row = &w[d * n..(d + 1) * n];
                code.idx
                    .iter()
                    .zip(&code.val)
                    .map(|(&j, &v)| row[j] as f64 * v as f64)
                    .sum()
            })
            .collect()
    }

    pub fn decode(&self, z: &[f32]) -> Result<Vec<f32>, SaeError> {
        if z.len() != self.n_latent() {
            return Err(SaeError::Shape(format!(
                "code has {} values, model expects {}",
                z.len(),
                self.n_latent()
            )));
        }
        Ok(self
            .w_dec
            .iter_rows()
            .map(|row| dot_f64(row, z) as f32)
            .collect())
    }

    /// Batch loss and exact gradients with respect to every parameter, with
    /// the TopK active set of each sample taken at the current parameters.
    pub fn loss_and_grad(&self, batch: &Tensor) -> Result<(f64, SaeGrads), SaeError> {
        let mut grads = SaeGrads::zeros(self.d_in(), self.n_latent());
        let rows: Vec<&[f32]> = batch.iter_rows().collect();
        let loss = self.accumulate_grads(&rows, &mut grads)?;
        Ok((loss, grads))
    }

    fn accumulate_grads(&self, rows: &[&[f32]], g: &mut SaeGrads) -> Result<f64, SaeError> {
        let (d, n) = (self.d_in(), self.n_latent());
        let scale = 2.0 / rows.len() as f64;
        let w_dec = self.w_dec.data();
        let mut total = 0.0f64;
        let mut resid = vec![0.0f64; d];
        for x in rows {
            let code = self.encode_sparse(x)?;
            let x_hat = self.decode_sparse_f64(&code);
            let mut sq = 0.0;
            for ((r, &xh), &xv) in resid.iter_mut().zip(&x_hat).zip(x.iter()) {
                let e = xh - xv as f64;
                sq += e * e;
                *r = scale * e;
            }
            total += sq;
            for (&j, &zj) in code.idx.iter().zip(&code.val) {
                // dL/dz_j = sum_d W_dec[d, j] r_d, then through the mask to
                // the pre-activation.
                let mut dz = 0.0f64;
                for (dd, &r) in resid.iter().enumerate() {
                    dz += w_dec[dd * n + j] as f64 * r;
                    g.w_dec[dd * n + j] += r * zj as f64;
                }
                g.b_enc[j] += dz;
                let row = &mut g.w_enc[j * d..(j + 1) * d];
                for (gw, &xv) in row.iter_mut().zip(x.iter()) {
                    *gw += dz * xv as f64;
                }
            }
        }
        Ok(total / rows.len() as f64)
    }
}

/// Gradients in `f64`, laid out like the model's parameters.
#[derive(Debug, Clone)]
pub struct SaeGrads {
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<f64>,
}

impl SaeGrads {
    fn zeros(d: usize, n: usize) -> Self {
        Self {
            w_enc: vec![0.0; n * d],
            b_enc: vec![0.0; n],
            w_dec: vec![0.0; d * n],
        }
    }

    fn clear(&mut self) {
        self.w_enc.iter_mut().for_each(|v| *v = 0.0);
        self.b_enc.iter_mut().for_each(|v| *v = 0.0);
        self.w_dec.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Mean over rows of the squared L2 residual. Vectors count as one row.
pub fn mse(x_hat: &Tensor, x: &Tensor) -> Result<f64, SaeError> {
    if x_hat.shape() != x.shape() {
        return Err(SaeError::Shape(format!(
            "{:?} vs {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let rows = x.rows().max(1);
    let sq: f64 = x_hat
        .data()
        .iter()
        .zip(x.data())
        .map(|(&a, &b)| {
            let e = a as f64 - b as f64;
            e * e
        })
        .sum();
    Ok(sq / rows as f64)
}

/// Average per-sample squared reconstruction error of `decode(encode(x))`.
pub fn eval_reconstruction(model: &SaeModel, x: &Tensor) -> Result<f64, SaeError> {
    if x.cols() != model.d_in() {
        return Err(SaeError::Shape(format!(
            "data has {} columns, model expects {}",
            x.cols(),
            model.d_in()
        )));
    }
    if x.rows() == 0 {
        return Err(SaeError::Shape("no rows to evaluate".into()));
    }
    let mut total = 0.0f64;
    for row in x.iter_rows() {
        let code = model.encode_sparse(row)?;
        let x_hat = model.decode_sparse_f64(&code);
        total += x_hat
            .iter()
            .zip(row)
            .map(|(&a, &b)| (a - b as f64).powi(2))
            .sum::<f64>();
    }
    Ok(total / x.rows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeTrainConfig {
    pub sparsity: f64,
    pub n_latent: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for SaeTrainConfig {
    fn default() -> Self {
        Self {
            sparsity: 0.95,
            n_latent: 2048,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 20,
            seed: 0,
        }
    }
}

impl SaeTrainConfig {
    pub fn k(&self) -> Result<usize, SaeError> {
        sparsity_to_k(self.sparsity, self.n_latent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeTrainReport {
    pub k: usize,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

/// Trains an SAE and returns the parameters with the lowest validation MSE.
pub fn train_sae(
    x_train: &Tensor,
    x_val: &Tensor,
    cfg: &SaeTrainConfig,
) -> Result<(SaeModel, SaeTrainReport), SaeError> {
    let k = cfg.k()?;
    let (m, d) = (x_train.rows(), x_train.cols());
    if x_val.cols() != d {
        return Err(SaeError::Shape(format!(
            "train has {d} columns, validation has {}",
            x_val.cols()
        )));
    }
    if cfg.batch_size == 0 || m < cfg.batch_size {
        return Err(SaeError::Config(format!(
            "{m} training rows cannot fill a batch of {}",
            cfg.batch_size
        )));
    }
    if x_val.rows() == 0 || cfg.max_epochs == 0 {
        return Err(SaeError::Config("need validation rows and at least one epoch".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut model = SaeModel::init(d, cfg.n_latent, k, &mut rng)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let n = cfg.n_latent;
    let mut st_enc = AdamState::new(n * d, adam)?;
    let mut st_b = AdamState::new(n, adam)?;
    let mut st_dec = AdamState::new(d * n, adam)?;
    let mut grads = SaeGrads::zeros(d, n);
    let mut g32_enc = vec![0.0f32; n * d];
    let mut g32_b = vec![0.0f32; n];
    let mut g32_dec = vec![0.0f32; d * n];

    let mut report = SaeTrainReport {
        k,
        train_mse: Vec::new(),
        val_mse: Vec::new(),
        best_epoch: 0,
        best_val_mse: f64::INFINITY,
        stopped_early: false,
    };
    let mut best = model.clone();
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let order = rng.permutation(m);
        let mut epoch_sq = 0.0f64;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let rows: Vec<&[f32]> = chunk.iter().map(|&i| x_train.row(i)).collect();
            grads.clear();
            let loss = model.accumulate_grads(&rows, &mut grads)?;
            if !loss.is_finite() {
                return Err(SaeError::TrainingDiverged { epoch, batch: b });
            }
            epoch_sq += loss * rows.len() as f64;
            cast_into(&grads.w_enc, &mut g32_enc);
            cast_into(&grads.b_enc, &mut g32_b);
            cast_into(&grads.w_dec, &mut g32_dec);
            adam_step(model.w_enc.data_mut(), &g32_enc, &mut st_enc)?;
            adam_step(&mut model.b_enc, &g32_b, &mut st_b)?;
            adam_step(model.w_dec.data_mut(), &g32_dec, &mut st_dec)?;
        }
        let val = eval_reconstruction(&model, x_val)?;
        if !val.is_finite() {
            return Err(SaeError::TrainingDiverged {
                epoch,
                batch: m.div_ceil(cfg.batch_size),
            });
        }
        report.train_mse.push(epoch_sq / m as f64);
        report.val_mse.push(val);
        log::debug!("sae epoch {epoch}: train {:.6} val {val:.6}", epoch_sq / m as f64);
        if val < report.best_val_mse {
            report.best_val_mse = val;
            report.best_epoch = epoch;
            best.clone_from(&model);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, report))
}

fn cast_into(src: &[f64], dst: &mut [f32]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = s as f32;
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (integers little-endian):
//   u64 header length | header JSON (UTF-8)
//   u64 length | ATNS w_enc [N, D]
//   u64 length | ATNS b_enc [N]
//   u64 length | ATNS w_dec [D, N]

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d_in: usize,
    pub n_latent: usize,
    pub k: usize,
    pub sparsity: f64,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

pub fn checkpoint_to_bytes(model: &SaeModel, header: &CheckpointHeader) -> Vec<u8> {
    let mut out = Vec::new();
    let mut push = |blob: &[u8]| {
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(blob);
    };
    push(serde_json::to_string(header).expect("header serializes").as_bytes());
    push(&model.w_enc.to_bytes());
    push(&Tensor::vector(model.b_enc.clone()).to_bytes());
    push(&model.w_dec.to_bytes());
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(SaeModel, CheckpointHeader), SaeError> {
    let mut rest = bytes;
    let mut take = || -> Result<&[u8], SaeError> {
        if rest.len() < 8 {
            return Err(SaeError::Checkpoint("truncated length prefix".into()));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
        if rest.len() - 8 < len {
            return Err(SaeError::Checkpoint("truncated blob".into()));
        }
        let blob = &rest[8..8 + len];
        rest = &rest[8 + len..];
        Ok(blob)
    };
    let header: CheckpointHeader = serde_json::from_slice(take()?)
        .map_err(|e| SaeError::Checkpoint(format!("header: {e}")))?;
    let w_enc = Tensor::from_bytes(take()?)?;
    let b_enc = Tensor::from_bytes(take()?)?;
    let w_dec = Tensor::from_bytes(take()?)?;
    if !rest.is_empty() {
        return Err(SaeError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    if b_enc.rank() != 1 {
        return Err(SaeError::Checkpoint("b_enc must be a vector".into()));
    }
    let model = SaeModel::from_parts(w_enc, b_enc.into_data(), w_dec, header.k)?;
    if model.d_in() != header.d_in || model.n_latent() != header.n_latent {
        return Err(SaeError::Checkpoint(
            "header dimensions disagree with weights".into(),
        ));
    }
    Ok((model, header))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &SaeModel,
    header: &CheckpointHeader,
) -> Result<(), SaeError> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_bytes(model, header)).map_err(|source| SaeError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(SaeModel, CheckpointHeader), SaeError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| SaeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    checkpoint_from_bytes(&bytes)
}
