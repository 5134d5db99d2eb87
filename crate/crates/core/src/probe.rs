//! Linear probes: multinomial logistic regression on frozen representations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{split_indices, DataError, SplitData};
use crate::numerics::{adam_step, dot_f64, AdamConfig, AdamState, NumericsError, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<NumericsError> for ProbeError {
    fn from(e: NumericsError) -> Self {
        ProbeError::Shape(e.to_string())
    }
}

/// `logits = W x + b`, `W` is `C x P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub w: Tensor,
    pub b: Vec<f32>,
}

impl ProbeModel {
    pub fn zeros(num_classes: usize, input_dim: usize) -> Self {
        Self {
            w: Tensor::zeros(num_classes, input_dim),
            b: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        self.w
            .iter_rows()
            .zip(&self.b)
            .map(|(row, &b)| dot_f64(row, x) + b as f64)
            .collect()
    }

    /// Argmax of the logits; the lowest class index wins ties.
    pub fn predict(&self, x: &[f32]) -> usize {
        argmax(&self.logits(x))
    }

    /// Mean softmax cross-entropy over the rows of `x` and its gradient.
    pub fn loss_and_grad(&self, x: &Tensor, y: &[usize]) -> Result<(f64, ProbeGrads), ProbeError> {
        self.check(x, y)?;
        let rows: Vec<&[f32]> = x.iter_rows().collect();
        let mut g = ProbeGrads::zeros(self.num_classes(), self.input_dim());
        let loss = self.accumulate(&rows, y, &mut g);
        Ok((loss, g))
    }

    fn accumulate(&self, rows: &[&[f32]], y: &[usize], g: &mut ProbeGrads) -> f64 {
        let p = self.input_dim();
        let inv_b = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for (x, &label) in rows.iter().zip(y) {
            let logits = self.logits(x);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            loss += z.ln() + max - logits[label];
            for (c, e) in exps.iter().enumerate() {
                let delta = (e / z - if c == label { 1.0 } else { 0.0 }) * inv_b;
                g.b[c] += delta;
                for (gw, &xv) in g.w[c * p..(c + 1) * p].iter_mut().zip(x.iter()) {
                    *gw += delta * xv as f64;
                }
            }
        }
        loss * inv_b
    }

    fn check(&self, x: &Tensor, y: &[usize]) -> Result<(), ProbeError> {
        if x.cols() != self.input_dim() || x.rows() != y.len() {
            return Err(ProbeError::Shape(format!(
                "inputs {:?} with {} labels for a probe of width {}",
                x.shape(),
                y.len(),
                self.input_dim()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= self.num_classes()) {
            return Err(ProbeError::Invalid(format!(
                "label {bad} outside 0..{}",
                self.num_classes()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProbeGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ProbeGrads {
    fn zeros(c: usize, p: usize) -> Self {
        Self {
            w: vec![0.0; c * p],
            b: vec![0.0; c],
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn probe_accuracy(model: &ProbeModel, x: &Tensor, y: &[usize]) -> Result<f64, ProbeError> {
    model.check(x, y)?;
    if y.is_empty() {
        return Err(ProbeError::Invalid("no samples".into()));
    }
    let hits = x
        .iter_rows()
        .zip(y)
        .filter(|(row, &label)| model.predict(row) == label)
        .count();
    Ok(hits as f64 / y.len() as f64)
}

/// `C x C` counts, rows indexed by true class, columns by prediction.
pub fn confusion_matrix(model: &ProbeModel, x: &Tensor, y: &[usize]) -> Result<Vec<Vec<usize>>, ProbeError> {
    model.check(x, y)?;
    let c = model.num_classes();
    let mut m = vec![vec![0usize; c]; c];
    for (row, &label) in x.iter_rows().zip(y) {
        m[label][model.predict(row)] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub val_frac: f64,
    pub seed: u64,
    pub lr: f32,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            val_frac: 0.2,
            seed: 0,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEpoch {
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEvaluation {
    pub accuracy: f64,
    pub n_test: usize,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: Vec<ProbeEpoch>,
    pub test: Option<TestEvaluation>,
}

impl ProbeReport {
    pub fn test_accuracy(&self) -> Option<f64> {
        self.test.as_ref().map(|t| t.accuracy)
    }

    pub fn evaluate_test(&mut self, model: &ProbeModel, x: &Tensor, y: &[usize]) -> Result<(), ProbeError> {
        let confusion = confusion_matrix(model, x, y)?;
        let hits: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        self.test = Some(TestEvaluation {
            accuracy: if y.is_empty() { 0.0 } else { hits as f64 / y.len() as f64 },
            n_test: y.len(),
            confusion,
        });
        Ok(())
    }
}

/// Trains a probe on `x`/`y`, holding out `cfg.val_frac` for validation, and
/// returns the epoch snapshot with the highest validation accuracy.
///
/// Inputs are centered on the training-part mean while training; the
/// returned model has the shift folded into its bias and acts on raw inputs.
pub fn train_probe(
    x: &Tensor,
    y: &[usize],
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<(ProbeModel, ProbeReport), ProbeError> {
    let (m, p) = (x.rows(), x.cols());
    if y.len() != m {
        return Err(ProbeError::Shape(format!("{m} rows, {} labels", y.len())));
    }
    if m < 10 {
        return Err(ProbeError::Invalid(format!("need at least 10 samples, got {m}")));
    }
    if num_classes == 0 || y.iter().any(|&l| l >= num_classes) {
        return Err(ProbeError::Invalid(format!("labels must lie in 0..{num_classes}")));
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(ProbeError::DegenerateLabels);
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(ProbeError::Invalid("batch size and epochs must be positive".into()));
    }

    let (train_idx, val_idx) = split_indices(m, cfg.val_frac, cfg.seed)?;
    let mut mean = vec![0.0f64; p];
    for &i in &train_idx {
        for (a, &v) in mean.iter_mut().zip(x.row(i)) {
            *a += v as f64;
        }
    }
    mean.iter_mut().for_each(|v| *v /= train_idx.len() as f64);
    let center = |idx: &[usize]| {
        let mut t = x.select_rows(idx);
        for r in 0..t.rows() {
            for (v, mu) in t.row_mut(r).iter_mut().zip(&mean) {
                *v = (*v as f64 - mu) as f32;
            }
        }
        t
    };
    let x_train = center(&train_idx);
    let x_val = center(&val_idx);
    let y_train: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
    let y_val: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();

    let mut model = ProbeModel::zeros(num_classes, p);
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut st_w = AdamState::new(num_classes * p, adam)?;
    let mut st_b = AdamState::new(num_classes, adam)?;
    let mut grads = ProbeGrads::zeros(num_classes, p);
    let mut gw = vec![0.0f32; num_classes * p];
    let mut gb = vec![0.0f32; num_classes];
    let mut rng = Rng::new(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);

    let mut report = ProbeReport {
        best_val_accuracy: -1.0,
        best_epoch: 0,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        epochs: Vec::new(),
        test: None,
    };
    let mut best = model.clone();
    let mut since_best = 0;
    let n_train = x_train.rows();
    for epoch in 0..cfg.max_epochs {
        let order = rng.permutation(n_train);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f32]> = chunk.iter().map(|&i| x_train.row(i)).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| y_train[i]).collect();
            grads.w.iter_mut().for_each(|v| *v = 0.0);
            grads.b.iter_mut().for_each(|v| *v = 0.0);
            epoch_loss += model.accumulate(&rows, &labels, &mut grads) * rows.len() as f64;
            for (d, &s) in gw.iter_mut().zip(&grads.w) {
                *d = s as f32;
            }
            for (d, &s) in gb.iter_mut().zip(&grads.b) {
                *d = s as f32;
            }
            adam_step(model.w.data_mut(), &gw, &mut st_w)?;
            adam_step(&mut model.b, &gb, &mut st_b)?;
        }
        let val_accuracy = if y_val.is_empty() {
            0.0
        } else {
            probe_accuracy(&model, &x_val, &y_val)?
        };
        report.epochs.push(ProbeEpoch {
            train_loss: epoch_loss / n_train as f64,
            val_accuracy,
        });
        if val_accuracy > report.best_val_accuracy {
            report.best_val_accuracy = val_accuracy;
            report.best_epoch = epoch;
            best.clone_from(&model);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    for (c, b) in best.b.iter_mut().enumerate() {
        let shift: f64 = best
            .w
            .row(c)
            .iter()
            .zip(&mean)
            .map(|(&w, mu)| w as f64 * mu)
            .sum();
        *b = (*b as f64 - shift) as f32;
    }
    Ok((best, report))
}

/// Trains on `train`, evaluates on `test`.
pub fn train_and_test(
    train: &SplitData,
    test: &SplitData,
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<(ProbeModel, ProbeReport), ProbeError> {
    let (model, mut report) = train_probe(&train.x, &train.labels, num_classes, cfg)?;
    report.evaluate_test(&model, &test.x, &test.labels)?;
    Ok((model, report))
}

/// Mean and population standard deviation of test accuracy over several seeds.
pub fn multi_seed_test_accuracy(
    train: &SplitData,
    test: &SplitData,
    num_classes: usize,
    cfg: &ProbeConfig,
    seeds: &[u64],
) -> Result<(f64, f64), ProbeError> {
    if seeds.is_empty() {
        return Err(ProbeError::Invalid("no seeds".into()));
    }
    let accs = seeds
        .iter()
        .map(|&seed| {
            let cfg = ProbeConfig { seed, ..cfg.clone() };
            let (_, r) = train_and_test(train, test, num_classes, &cfg)?;
            Ok(r.test_accuracy().unwrap_or(0.0))
        })
        .collect::<Result<Vec<f64>, ProbeError>>()?;
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    pub layer: String,
    pub val_acc: f64,
    pub test_acc: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSweep {
    /// One row per layer, in input order.
    pub rows: Vec<LayerResult>,
    /// Row indices sorted by test accuracy, best first; ties keep input order.
    pub ranking: Vec<usize>,
    pub selected: usize,
}

/// Input for one layer of a sweep.
pub struct LayerInput<'a> {
    pub name: &'a str,
    pub train: &'a SplitData,
    pub test: &'a SplitData,
}

/// One probe per layer; selects the layer with the best test accuracy, the
/// earlier layer winning ties.
pub fn layer_sweep(
    layers: &[LayerInput<'_>],
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<LayerSweep, ProbeError> {
    if layers.is_empty() {
        return Err(ProbeError::Invalid("layer sweep needs at least one layer".into()));
    }
    let rows = layers
        .iter()
        .map(|l| {
            let (_, r) = train_and_test(l.train, l.test, num_classes, cfg)?;
            Ok(LayerResult {
                layer: l.name.to_string(),
                val_acc: r.best_val_accuracy,
                test_acc: r.test_accuracy().unwrap_or(0.0),
                n_train: l.train.len(),
                n_test: l.test.len(),
            })
        })
        .collect::<Result<Vec<_>, ProbeError>>()?;
    let mut ranking: Vec<usize> = (0..rows.len()).collect();
    ranking.sort_by(|&a, &b| {
        rows[b]
            .test_acc
            .partial_cmp(&rows[a].test_acc)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let selected = ranking[0];
    Ok(LayerSweep {
        rows,
        ranking,
        selected,
    })
}
