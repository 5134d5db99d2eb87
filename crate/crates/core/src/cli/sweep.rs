use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::args::SweepArgs;
use super::commands::{
    disentangle_config, load_factors, load_family_map, probe_config, run_disentangle, run_probe, run_sae,
    sae_header, write_csv, write_disentangle, write_probe_csv, LayerData, ProbeOutput, RunConfig,
};
use super::{
    create_dir, parse_layers, read_json, sparsity_dir, timestamp, write_file, write_json, CliError, LayerSpec,
};
use crate::data::{FactorFamilyMap, FactorTable};
use crate::disentangle::DisentangleConfig;
use crate::sae::{eval_reconstruction, save_checkpoint, sparsity_to_k, SaeTrainConfig};

/// Raw-embedding baseline of layer `i` uses cell index `RAW_CELL_BASE + i`;
/// grid cell `(layer i, sparsity j)` uses `i * n_sparsities + j`.
pub const RAW_CELL_BASE: u64 = 1 << 32;

/// Seed of one sweep cell.
pub fn cell_seed(root: u64, cell_index: u64) -> u64 {
    root ^ cell_index
}

/// Comma list of sparsity levels: nonempty, strictly increasing, each in (0, 1).
pub fn parse_sparsities(text: &str) -> Result<Vec<f64>, CliError> {
    let levels = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Invalid(format!("bad sparsity {t:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if levels.is_empty() {
        return Err(CliError::Invalid("sparsity grid is empty".into()));
    }
    if let Some(s) = levels.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(CliError::Invalid(format!("sparsity {s} is not in (0, 1)")));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Invalid("sparsities must be strictly increasing".into()));
    }
    Ok(levels)
}

/// `result.json` of a cell; written last, so its presence marks completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub layer: String,
    /// `None` for the raw-embedding baseline.
    pub sparsity: Option<f64>,
    pub k: Option<usize>,
    pub n_latent: Option<usize>,
    pub best_val_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub probe_val_acc: f64,
    pub probe_test_acc: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub top10_r2_mean: Option<f64>,
    pub top10_completeness_mean: Option<f64>,
    pub timestamp: String,
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub layer: String,
    pub sparsity: f64,
    pub k: usize,
    pub best_val_mse: f64,
    pub test_mse: f64,
    pub probe_test_acc: f64,
}

struct Cell<'a> {
    layer_idx: usize,
    sparsity: Option<f64>,
    seed: u64,
    dir: PathBuf,
    spec: &'a LayerSpec,
}

struct Shared<'a> {
    args: &'a SweepArgs,
    layers: Vec<LayerData>,
    factors: Option<FactorTable>,
    family_map: FactorFamilyMap,
    lasso: DisentangleConfig,
}

impl Shared<'_> {
    fn config_for(&self, cell: &Cell) -> RunConfig {
        let a = self.args;
        let mut c = RunConfig::new("sweep", cell.spec, cell.sparsity, cell.seed, a.probe.standardize);
        c.probe = Some(probe_config(&a.probe, cell.seed));
        c.sae = cell.sparsity.map(|s| self.sae_config(s, cell.seed));
        c.sae_val_frac = cell.sparsity.map(|_| a.probe.val_frac);
        if self.factors.is_some() {
            c.lasso = Some(a.lasso.clone());
            c.factors = a.factors.clone();
            c.family_map = a.family_map.clone();
        }
        c
    }

    fn sae_config(&self, sparsity: f64, seed: u64) -> SaeTrainConfig {
        let a = self.args;
        SaeTrainConfig {
            sparsity,
            n_latent: a.sae.latent,
            lr: a.probe.lr,
            batch_size: a.probe.batch,
            max_epochs: a.sae.sae_epochs,
            patience: a.sae.sae_patience,
            seed,
        }
    }

    fn run_cell(&self, cell: &Cell) -> Result<CellResult, CliError> {
        let config = self.config_for(cell);
        let result_path = cell.dir.join("result.json");
        let config_path = cell.dir.join("config.json");
        if result_path.is_file() {
            let previous: RunConfig = read_json(&config_path)?;
            if previous != config {
                return Err(CliError::Invalid(format!(
                    "{} was produced with a different configuration; use a fresh --out",
                    cell.dir.display()
                )));
            }
            log::info!("{} already complete", cell.dir.display());
            return read_json(&result_path);
        }
        create_dir(&cell.dir)?;
        write_json(&config_path, &config)?;

        let data = &self.layers[cell.layer_idx];
        let name = &cell.spec.name;
        let num_classes = data.manifest.num_classes;
        let probe_cfg = probe_config(&self.args.probe, cell.seed);
        let mut result = CellResult {
            layer: name.clone(),
            sparsity: cell.sparsity,
            k: None,
            n_latent: None,
            best_val_mse: None,
            test_mse: None,
            probe_val_acc: 0.0,
            probe_test_acc: 0.0,
            n_train: data.train.len(),
            n_test: data.test.len(),
            seed: cell.seed,
            top10_r2_mean: None,
            top10_completeness_mean: None,
            timestamp: String::new(),
        };

        let (probe, rows) = match cell.sparsity {
            None => (
                run_probe(name, None, &data.train, &data.test, num_classes, &probe_cfg)?,
                data.choice(self.args.lasso.split),
            ),
            Some(s) => {
                let sae_cfg = self.sae_config(s, cell.seed);
                let (model, report) = run_sae(&data.train, &sae_cfg, self.args.probe.val_frac)?;
                save_checkpoint(cell.dir.join("sae.ckpt"), &model, &sae_header(&model, &sae_cfg, &report))
                    .map_err(|e| CliError::Internal(e.to_string()))?;
                result.k = Some(report.k);
                result.n_latent = Some(sae_cfg.n_latent);
                result.best_val_mse = Some(report.best_val_mse);
                result.test_mse = Some(eval_reconstruction(&model, &data.test.x)?);
                let (train, test) = data.encoded(&model)?;
                let probe = run_probe(name, Some(s), &train, &test, num_classes, &probe_cfg)?;
                let mut rows = data.choice(self.args.lasso.split);
                rows.x = model.encode_batch(&rows.x)?;
                (probe, rows)
            }
        };
        write_json(&cell.dir.join("probe.json"), &probe)?;
        result.probe_val_acc = probe.val_acc;
        result.probe_test_acc = probe.test_acc;

        if let Some(factors) = &self.factors {
            // Every cell of a run uses the root seed here, so all
            // representations are scored on the same fit/eval rows.
            let ids: HashSet<String> = data.all_ids();
            let (report, importance) =
                run_disentangle(name, cell.sparsity, &rows, &ids, factors, &self.family_map, &self.lasso)?;
            write_disentangle(&cell.dir, &report, &importance)?;
            result.top10_r2_mean = Some(report.top10_r2_mean);
            result.top10_completeness_mean = Some(report.top10_completeness_mean);
        }
        result.timestamp = timestamp();
        write_json(&result_path, &result)?;
        Ok(result)
    }
}

pub(crate) fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let grid = parse_sparsities(&args.sparsities)?;
    let specs = parse_layers(&args.manifest)?;
    if args.jobs == 0 {
        return Err(CliError::Invalid("--jobs must be at least 1".into()));
    }
    for &s in &grid {
        sparsity_to_k(s, args.sae.latent)?;
    }
    let lasso = disentangle_config(&args.lasso, args.seed)?;
    let factors = args.factors.as_deref().map(load_factors).transpose()?;
    let family_map = load_family_map(args.family_map.as_deref())?;
    let layers = specs
        .iter()
        .map(|s| LayerData::load(s, args.probe.standardize))
        .collect::<Result<Vec<_>, _>>()?;
    for (spec, data) in specs.iter().zip(&layers) {
        if args.sae.latent <= data.manifest.dim {
            return Err(CliError::Invalid(format!(
                "--latent {} must exceed the dimension {} of layer {}",
                args.sae.latent, data.manifest.dim, spec.name
            )));
        }
    }

    let n_grid = grid.len() as u64;
    let mut cells = Vec::new();
    for (li, spec) in specs.iter().enumerate() {
        let layer_dir = args.out.join(&spec.name);
        if !args.no_baseline {
            cells.push(Cell {
                layer_idx: li,
                sparsity: None,
                seed: cell_seed(args.seed, RAW_CELL_BASE + li as u64),
                dir: layer_dir.join("raw"),
                spec,
            });
        }
        for (j, &s) in grid.iter().enumerate() {
            cells.push(Cell {
                layer_idx: li,
                sparsity: Some(s),
                seed: cell_seed(args.seed, li as u64 * n_grid + j as u64),
                dir: layer_dir.join(sparsity_dir(s)),
                spec,
            });
        }
    }
    create_dir(&args.out)?;

    let shared = Shared {
        args,
        layers,
        factors,
        family_map,
        lasso,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<CellResult, CliError>> =
        pool.install(|| cells.par_iter().map(|c| shared.run_cell(c)).collect());

    let mut sweep_rows = Vec::new();
    let mut probe_rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(r) => {
                probe_rows.push(probe_row(&cell.dir, &r)?);
                if let (Some(sparsity), Some(k), Some(best_val_mse), Some(test_mse)) =
                    (r.sparsity, r.k, r.best_val_mse, r.test_mse)
                {
                    sweep_rows.push(SweepRow {
                        layer: r.layer.clone(),
                        sparsity,
                        k,
                        best_val_mse,
                        test_mse,
                        probe_test_acc: r.probe_test_acc,
                    });
                }
            }
            Err(e) => {
                log::error!("{}: {e}", cell.dir.display());
                let _ = write_file(&cell.dir.join("error.txt"), format!("{e}\n"));
                failures.push(e);
            }
        }
    }
    write_csv(&args.out.join("sweep.csv"), &sweep_rows)?;
    write_probe_csv(&args.out.join("probe.csv"), &probe_rows)?;
    if failures.is_empty() {
        return Ok(());
    }
    let n = failures.len();
    let any_internal = failures.iter().any(|f| matches!(f, CliError::Internal(_)));
    let msg = format!("{n} of {} cells failed; first: {}", cells.len(), failures[0]);
    Err(if any_internal {
        CliError::Internal(msg)
    } else {
        CliError::Invalid(msg)
    })
}

fn probe_row(dir: &Path, r: &CellResult) -> Result<super::commands::ProbeRow, CliError> {
    let probe: ProbeOutput = read_json(&dir.join("probe.json"))?;
    debug_assert_eq!(probe.layer, r.layer);
    Ok(probe.row())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_sparsities("0.75, 0.9").unwrap(), vec![0.75, 0.9]);
        assert!(parse_sparsities("").is_err());
        assert!(parse_sparsities("0.9,0.75").is_err());
        assert!(parse_sparsities("0.9,0.9").is_err());
        assert!(parse_sparsities("0,0.5").is_err());
        assert!(parse_sparsities("0.5,1").is_err());
        assert!(parse_sparsities("x").is_err());
    }

    #[test]
    fn cell_seeds_are_distinct() {
        let mut seen = HashSet::new();
        for li in 0..13u64 {
            seen.insert(cell_seed(7, RAW_CELL_BASE + li));
            for j in 0..6u64 {
                seen.insert(cell_seed(7, li * 6 + j));
            }
        }
        assert_eq!(seen.len(), 13 * 7);
    }
}
