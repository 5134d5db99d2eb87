use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::args::{DisentangleArgs, LassoOpts, ProbeArgs, ProbeOpts, SaeEvalArgs, SaeTrainArgs, SplitChoice};
use super::{
    create_dir, load_choice, parse_layers, sparsity_dir, timestamp, write_file, write_json, CliError,
    LayerSpec,
};
use crate::data::{split_indices, ColumnStats, DatasetManifest, FactorFamilyMap, FactorTable, Split, SplitData};
use crate::disentangle::{
    run_disentanglement, DisentangleConfig, DisentangleReport, ImportanceMatrix, LamPolicy, LassoOptions,
};
use crate::probe::{train_and_test, ProbeConfig, ProbeEpoch};
use crate::sae::{
    eval_reconstruction, load_checkpoint, save_checkpoint, sparsity_to_k, train_sae, CheckpointHeader,
    SaeModel, SaeTrainConfig, SaeTrainReport,
};

/// Everything that determines a run directory's outputs. Written to
/// `config.json` before any work starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub layer: String,
    pub manifest: PathBuf,
    pub sparsity: Option<f64>,
    pub seed: u64,
    pub standardize: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sae: Option<SaeTrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sae_val_frac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe: Option<ProbeConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lasso: Option<LassoOpts>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub factors: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub family_map: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: &str, layer: &LayerSpec, sparsity: Option<f64>, seed: u64, standardize: bool) -> Self {
        Self {
            command: command.into(),
            layer: layer.name.clone(),
            manifest: layer.path.clone(),
            sparsity,
            seed,
            standardize,
            sae: None,
            sae_val_frac: None,
            checkpoint: None,
            probe: None,
            lasso: None,
            factors: None,
            family_map: None,
        }
    }
}

/// Contents of `probe.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutput {
    pub layer: String,
    pub sparsity: Option<f64>,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    /// Rows are true classes.
    pub confusion: Vec<Vec<usize>>,
    pub epochs: Vec<ProbeEpoch>,
    pub timestamp: String,
}

/// One row of `probe.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub layer: String,
    /// Empty for the raw embeddings.
    pub sparsity: String,
    pub val_acc: f64,
    pub test_acc: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl ProbeOutput {
    pub fn row(&self) -> ProbeRow {
        ProbeRow {
            layer: self.layer.clone(),
            sparsity: self.sparsity.map(sparsity_dir).unwrap_or_default(),
            val_acc: self.val_acc,
            test_acc: self.test_acc,
            n_train: self.n_train,
            n_test: self.n_test,
            seed: self.seed,
        }
    }
}

/// Train and test splits of one layer, optionally standardized with
/// train-split statistics.
pub(crate) struct LayerData {
    pub manifest: DatasetManifest,
    pub train: SplitData,
    pub test: SplitData,
}

impl LayerData {
    pub fn load(spec: &LayerSpec, standardize: bool) -> Result<Self, CliError> {
        let manifest = spec.load()?;
        let mut train = manifest.load_split(Split::Train)?;
        let mut test = manifest.load_split(Split::Test)?;
        if standardize {
            let stats = ColumnStats::compute(&train.x)?;
            train.x = stats.apply(&train.x);
            test.x = stats.apply(&test.x);
        }
        Ok(Self { manifest, train, test })
    }

    pub fn choice(&self, c: SplitChoice) -> SplitData {
        match c {
            SplitChoice::Train => self.train.clone(),
            SplitChoice::Test => self.test.clone(),
            SplitChoice::All => {
                let mut ids = self.train.ids.clone();
                ids.extend(self.test.ids.iter().cloned());
                let mut labels = self.train.labels.clone();
                labels.extend(&self.test.labels);
                let mut data = self.train.x.data().to_vec();
                data.extend_from_slice(self.test.x.data());
                let x = crate::tensor::Tensor::matrix(ids.len(), self.train.x.cols(), data)
                    .expect("splits share a width");
                SplitData { ids, labels, x }
            }
        }
    }

    pub fn all_ids(&self) -> HashSet<String> {
        self.manifest.entries.iter().map(|e| e.id.clone()).collect()
    }

    /// Same rows with `x` replaced by the SAE codes.
    pub fn encoded(&self, model: &SaeModel) -> Result<(SplitData, SplitData), CliError> {
        let enc = |s: &SplitData| -> Result<SplitData, CliError> {
            Ok(SplitData {
                ids: s.ids.clone(),
                labels: s.labels.clone(),
                x: model.encode_batch(&s.x)?,
            })
        };
        Ok((enc(&self.train)?, enc(&self.test)?))
    }
}

pub(crate) fn probe_config(opts: &ProbeOpts, seed: u64) -> ProbeConfig {
    ProbeConfig {
        val_frac: opts.val_frac,
        seed,
        lr: opts.lr,
        batch_size: opts.batch,
        max_epochs: opts.probe_epochs,
        patience: opts.probe_patience,
    }
}

pub(crate) fn run_probe(
    layer: &str,
    sparsity: Option<f64>,
    train: &SplitData,
    test: &SplitData,
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeOutput, CliError> {
    let (_, report) = train_and_test(train, test, num_classes, cfg)?;
    let test_eval = report.test.clone().expect("train_and_test evaluates");
    Ok(ProbeOutput {
        layer: layer.to_string(),
        sparsity,
        seed: cfg.seed,
        n_train: train.len(),
        n_val: report.n_val,
        n_test: test.len(),
        best_epoch: report.best_epoch,
        val_acc: report.best_val_accuracy,
        test_acc: test_eval.accuracy,
        confusion: test_eval.confusion,
        epochs: report.epochs,
        timestamp: timestamp(),
    })
}

/// Trains an SAE with the validation rows chosen exactly as the probe
/// chooses them for the same seed.
pub(crate) fn run_sae(
    train: &SplitData,
    cfg: &SaeTrainConfig,
    val_frac: f64,
) -> Result<(SaeModel, SaeTrainReport), CliError> {
    let (kept, held) = split_indices(train.len(), val_frac, cfg.seed)?;
    let x_train = train.x.select_rows(&kept);
    let x_val = train.x.select_rows(&held);
    Ok(train_sae(&x_train, &x_val, cfg)?)
}

pub(crate) fn sae_header(model: &SaeModel, cfg: &SaeTrainConfig, report: &SaeTrainReport) -> CheckpointHeader {
    CheckpointHeader {
        d_in: model.d_in(),
        n_latent: model.n_latent(),
        k: model.k,
        sparsity: cfg.sparsity,
        seed: cfg.seed,
        best_epoch: report.best_epoch,
        best_val_mse: report.best_val_mse,
    }
}

pub(crate) fn load_family_map(path: Option<&Path>) -> Result<FactorFamilyMap, CliError> {
    match path {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::Invalid(format!("family map not found: {}", p.display())));
            }
            Ok(FactorFamilyMap::load(p)?)
        }
        None => Ok(FactorFamilyMap::egemaps()),
    }
}

pub(crate) fn load_factors(path: &Path) -> Result<FactorTable, CliError> {
    if !path.is_file() {
        return Err(CliError::Invalid(format!("factor table not found: {}", path.display())));
    }
    Ok(FactorTable::load_csv(path)?)
}

pub(crate) fn disentangle_config(opts: &LassoOpts, seed: u64) -> Result<DisentangleConfig, CliError> {
    let lam: LamPolicy = opts.lam.parse()?;
    if !(opts.eval_frac > 0.0 && opts.eval_frac < 1.0) {
        return Err(CliError::Invalid(format!("--eval-frac {} must be in (0, 1)", opts.eval_frac)));
    }
    Ok(DisentangleConfig {
        lam,
        eval_frac: opts.eval_frac,
        in_sample: opts.in_sample,
        seed,
        lasso: LassoOptions {
            max_iter: opts.lasso_max_iter,
            tol: opts.lasso_tol,
        },
        ..DisentangleConfig::default()
    })
}

/// Restricts `factors` to the rows of `rows`. Factor ids that the manifest
/// does not know at all are an error; ids of other splits are dropped.
pub(crate) fn factors_for_rows(
    factors: &FactorTable,
    rows: &SplitData,
    manifest_ids: &HashSet<String>,
) -> Result<FactorTable, CliError> {
    let unknown: Vec<&String> = factors.ids.iter().filter(|id| !manifest_ids.contains(*id)).collect();
    if !unknown.is_empty() {
        return Err(CliError::Invalid(format!(
            "factor table has {} ids not in the manifest: {:?}",
            unknown.len(),
            unknown
        )));
    }
    let want: HashSet<&str> = rows.ids.iter().map(String::as_str).collect();
    let f = factors.num_factors();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (i, id) in factors.ids.iter().enumerate() {
        if want.contains(id.as_str()) {
            ids.push(id.clone());
            values.extend_from_slice(&factors.values[i * f..(i + 1) * f]);
        }
    }
    Ok(FactorTable::new(ids, factors.names.clone(), values)?)
}

pub(crate) fn run_disentangle(
    layer: &str,
    sparsity: Option<f64>,
    rows: &SplitData,
    manifest_ids: &HashSet<String>,
    factors: &FactorTable,
    family_map: &FactorFamilyMap,
    cfg: &DisentangleConfig,
) -> Result<(DisentangleReport, ImportanceMatrix), CliError> {
    let table = factors_for_rows(factors, rows, manifest_ids)?;
    let (mut report, importance) = run_disentanglement(&rows.x, &rows.ids, &table, family_map, cfg)?;
    report.layer = layer.to_string();
    report.sparsity = sparsity;
    report.run_id = format!("{layer}/{}", sparsity.map_or_else(|| "raw".into(), sparsity_dir));
    report.timestamp = Some(timestamp());
    Ok((report, importance))
}

#[derive(Serialize)]
struct ImportanceIndex<'a> {
    file: &'a str,
    rows: usize,
    factor_names: &'a [String],
}

pub(crate) fn write_disentangle(
    dir: &Path,
    report: &DisentangleReport,
    importance: &ImportanceMatrix,
) -> Result<(), CliError> {
    let bytes = importance.values.to_bytes();
    write_file(&dir.join("importance.atns"), bytes)?;
    write_json(
        &dir.join("importance.json"),
        &ImportanceIndex {
            file: "importance.atns",
            rows: importance.values.rows(),
            factor_names: &importance.factor_names,
        },
    )?;
    write_json(&dir.join("disentangle.json"), report)
}

pub(crate) fn write_probe_csv(path: &Path, rows: &[ProbeRow]) -> Result<(), CliError> {
    write_csv(path, rows)
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
    write_file(path, bytes)
}

pub(crate) fn probe(args: &ProbeArgs) -> Result<(), CliError> {
    let layers = parse_layers(&args.manifest)?;
    let checkpoint = match &args.checkpoint {
        Some(p) => {
            if layers.len() != 1 {
                return Err(CliError::Invalid("--checkpoint takes exactly one --manifest".into()));
            }
            Some((p.clone(), load_checkpoint(p)?))
        }
        None => None,
    };
    let mut rows = Vec::new();
    for spec in &layers {
        let data = LayerData::load(spec, args.probe.standardize)?;
        let cfg = probe_config(&args.probe, args.seed);
        let (sparsity, train, test) = match &checkpoint {
            Some((_, (model, header))) => {
                let (tr, te) = data.encoded(model)?;
                (Some(header.sparsity), tr, te)
            }
            None => (None, data.train.clone(), data.test.clone()),
        };
        let dir = args
            .out
            .join(&spec.name)
            .join(sparsity.map_or_else(|| "raw".into(), sparsity_dir));
        let mut run_cfg = RunConfig::new("probe", spec, sparsity, args.seed, args.probe.standardize);
        run_cfg.probe = Some(cfg.clone());
        run_cfg.checkpoint = checkpoint.as_ref().map(|c| c.0.clone());
        create_dir(&dir)?;
        write_json(&dir.join("config.json"), &run_cfg)?;
        let out = run_probe(&spec.name, sparsity, &train, &test, data.manifest.num_classes, &cfg)?;
        write_json(&dir.join("probe.json"), &out)?;
        log::info!("{}: val {:.4} test {:.4}", spec.name, out.val_acc, out.test_acc);
        rows.push(out.row());
    }
    write_probe_csv(&args.out.join("probe.csv"), &rows)?;
    if rows.len() > 1 {
        let best = rows
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.test_acc.total_cmp(&b.1.test_acc).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        println!("best layer: {} (test accuracy {:.4})", best.1.layer, best.1.test_acc);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeTrainOutput {
    pub layer: String,
    pub sparsity: f64,
    pub k: usize,
    pub n_latent: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub timestamp: String,
}

pub(crate) fn sae_train(args: &SaeTrainArgs) -> Result<(), CliError> {
    let spec = LayerSpec::parse(&args.manifest)?;
    let cfg = SaeTrainConfig {
        sparsity: args.sparsity,
        n_latent: args.sae.latent,
        lr: args.lr,
        batch_size: args.batch,
        max_epochs: args.sae.sae_epochs,
        patience: args.sae.sae_patience,
        seed: args.seed,
    };
    sparsity_to_k(cfg.sparsity, cfg.n_latent)?;
    let data = LayerData::load(&spec, args.standardize)?;
    let dir = args.out.join(&spec.name).join(sparsity_dir(args.sparsity));
    let mut run_cfg = RunConfig::new("sae-train", &spec, Some(args.sparsity), args.seed, args.standardize);
    run_cfg.sae = Some(cfg.clone());
    run_cfg.sae_val_frac = Some(args.val_frac);
    create_dir(&dir)?;
    write_json(&dir.join("config.json"), &run_cfg)?;
    let (model, report) = run_sae(&data.train, &cfg, args.val_frac)?;
    save_checkpoint(dir.join("sae.ckpt"), &model, &sae_header(&model, &cfg, &report))
        .map_err(|e| CliError::Internal(e.to_string()))?;
    write_json(
        &dir.join("train.json"),
        &SaeTrainOutput {
            layer: spec.name.clone(),
            sparsity: args.sparsity,
            k: report.k,
            n_latent: cfg.n_latent,
            best_epoch: report.best_epoch,
            best_val_mse: report.best_val_mse,
            stopped_early: report.stopped_early,
            train_mse: report.train_mse,
            val_mse: report.val_mse,
            timestamp: timestamp(),
        },
    )?;
    println!("{}", dir.join("sae.ckpt").display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeEvalOutput {
    pub layer: String,
    pub checkpoint: PathBuf,
    pub sparsity: f64,
    pub k: usize,
    pub split: SplitChoice,
    pub n: usize,
    pub mse: f64,
    pub timestamp: String,
}

pub(crate) fn sae_eval(args: &SaeEvalArgs) -> Result<(), CliError> {
    let spec = LayerSpec::parse(&args.manifest)?;
    if !args.checkpoint.is_file() {
        return Err(CliError::Invalid(format!(
            "checkpoint not found: {}",
            args.checkpoint.display()
        )));
    }
    let (model, header) = load_checkpoint(&args.checkpoint)?;
    let manifest = spec.load()?;
    let rows = load_choice(&manifest, args.split)?;
    let mse = eval_reconstruction(&model, &rows.x)?;
    let out = args.out.clone().unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("eval.json")
    });
    write_json(
        &out,
        &SaeEvalOutput {
            layer: spec.name,
            checkpoint: args.checkpoint.clone(),
            sparsity: header.sparsity,
            k: header.k,
            split: args.split,
            n: rows.len(),
            mse,
            timestamp: timestamp(),
        },
    )?;
    println!("{mse}");
    Ok(())
}

pub(crate) fn disentangle(args: &DisentangleArgs) -> Result<(), CliError> {
    let spec = LayerSpec::parse(&args.manifest)?;
    let cfg = disentangle_config(&args.lasso, args.seed)?;
    let factors = load_factors(&args.factors)?;
    let family_map = load_family_map(args.family_map.as_deref())?;
    let data = LayerData::load(&spec, args.standardize)?;
    let mut rows = data.choice(args.lasso.split);
    let sparsity = match &args.checkpoint {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::Invalid(format!("checkpoint not found: {}", p.display())));
            }
            let (model, header) = load_checkpoint(p)?;
            rows.x = model.encode_batch(&rows.x)?;
            Some(header.sparsity)
        }
        None => None,
    };
    let mut run_cfg = RunConfig::new("disentangle", &spec, sparsity, args.seed, args.standardize);
    run_cfg.checkpoint = args.checkpoint.clone();
    run_cfg.lasso = Some(args.lasso.clone());
    run_cfg.factors = Some(args.factors.clone());
    run_cfg.family_map = args.family_map.clone();
    create_dir(&args.out)?;
    write_json(&args.out.join("config.json"), &run_cfg)?;
    let (report, importance) =
        run_disentangle(&spec.name, sparsity, &rows, &data.all_ids(), &factors, &family_map, &cfg)?;
    write_disentangle(&args.out, &report, &importance)?;
    log::info!(
        "{}: top-{} R² {:.4}, completeness {:.4}",
        report.run_id,
        report.top10_r2.len(),
        report.top10_r2_mean,
        report.top10_completeness_mean
    );
    Ok(())
}
