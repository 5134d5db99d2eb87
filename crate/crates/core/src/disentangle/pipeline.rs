use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::entropy::knn_entropy_seeded;
use super::lasso::{fit_lasso, lambda_max, Design, LassoOptions};
use super::metrics::{completeness, r2_score};
use super::DisentangleError;
use crate::data::{split_indices, ColumnStats, FactorFamilyMap, FactorTable};
use crate::tensor::Tensor;

/// How the L1 penalty is chosen per factor.
#[derive(Debug, Clone, PartialEq)]
pub enum LamPolicy {
    /// `c * lam_max` of the factor being fitted.
    Relative(f64),
    Fixed(f64),
    /// Relative multipliers; the one with the best R² on an inner 80/20 split
    /// of the fit rows is refitted on all fit rows.
    RelativeGrid(Vec<f64>),
}

impl Default for LamPolicy {
    fn default() -> Self {
        LamPolicy::Relative(0.01)
    }
}

impl fmt::Display for LamPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LamPolicy::Relative(c) => write!(f, "{c}*lmax"),
            LamPolicy::Fixed(v) => write!(f, "{v}"),
            LamPolicy::RelativeGrid(cs) => {
                let parts: Vec<String> = cs.iter().map(|c| c.to_string()).collect();
                write!(f, "grid:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for LamPolicy {
    type Err = DisentangleError;

    /// Accepts `0.01*lmax`, a plain number, or `grid:0.001,0.01,0.1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DisentangleError::BadLamPolicy(s.to_string());
        let num = |t: &str| -> Result<f64, DisentangleError> {
            let v: f64 = t.trim().parse().map_err(|_| bad())?;
            if v >= 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        let s_trim = s.trim();
        if let Some(list) = s_trim.strip_prefix("grid:") {
            let cs = list.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
            if cs.is_empty() {
                return Err(bad());
            }
            Ok(LamPolicy::RelativeGrid(cs))
        } else if let Some(c) = s_trim.strip_suffix("lmax") {
            let c = c.trim().strip_suffix('*').ok_or_else(bad)?;
            Ok(LamPolicy::Relative(num(c)?))
        } else {
            Ok(LamPolicy::Fixed(num(s_trim)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisentangleConfig {
    pub lam: LamPolicy,
    /// Fraction of rows held out for R²; ignored when `in_sample` is set.
    pub eval_frac: f64,
    /// Fit and score on every row.
    pub in_sample: bool,
    pub seed: u64,
    pub entropy_k: usize,
    pub lasso: LassoOptions,
    pub top_n: usize,
    /// Restrict the top lists to these factors instead of all factors.
    pub fixed_top_set: Option<Vec<String>>,
}

impl Default for DisentangleConfig {
    fn default() -> Self {
        Self {
            lam: LamPolicy::default(),
            eval_frac: 0.2,
            in_sample: false,
            seed: 0,
            entropy_k: 3,
            lasso: LassoOptions::default(),
            top_n: 10,
            fixed_top_set: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorResult {
    pub name: String,
    pub family: String,
    pub r2: f64,
    pub completeness: f64,
    pub entropy_nats: f64,
    pub nnz: usize,
    pub lam: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFactor {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFactor {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisentangleReport {
    pub run_id: String,
    pub layer: String,
    pub sparsity: Option<f64>,
    pub lam_policy: String,
    pub n_fit: usize,
    pub n_eval: usize,
    pub factors: Vec<FactorResult>,
    pub top10_r2: Vec<RankedFactor>,
    pub top10_completeness: Vec<RankedFactor>,
    pub top10_r2_mean: f64,
    pub top10_r2_std: f64,
    pub top10_completeness_mean: f64,
    pub top10_completeness_std: f64,
    pub family_counts: BTreeMap<String, usize>,
    pub skipped: Vec<SkippedFactor>,
    pub unmapped_factors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timestamp: Option<String>,
}

/// `|beta|` per latent dimension (rows) and factor (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMatrix {
    pub factor_names: Vec<String>,
    pub values: Tensor,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn top_n(results: &[FactorResult], pick: impl Fn(&FactorResult) -> f64, n: usize) -> Vec<RankedFactor> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| pick(&results[b]).total_cmp(&pick(&results[a])).then(a.cmp(&b)));
    order
        .into_iter()
        .take(n)
        .map(|i| RankedFactor {
            name: results[i].name.clone(),
            value: pick(&results[i]),
        })
        .collect()
}

enum Outcome {
    Done(FactorResult, Vec<f64>),
    Skipped(SkippedFactor),
}

/// Per-factor Lasso regressions from the representation `z` (rows keyed by
/// `z_ids`) to every factor of `factors`, with R² on a held-out part,
/// completeness of `|beta|` and k-NN entropy of the raw factor values.
pub fn run_disentanglement(
    z: &Tensor,
    z_ids: &[String],
    factors: &FactorTable,
    family_map: &FactorFamilyMap,
    cfg: &DisentangleConfig,
) -> Result<(DisentangleReport, ImportanceMatrix), DisentangleError> {
    if z.rows() != z_ids.len() {
        return Err(DisentangleError::Shape(format!(
            "{} representation rows, {} ids",
            z.rows(),
            z_ids.len()
        )));
    }
    let row_of: HashMap<&str, usize> = factors
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let z_set: HashSet<&str> = z_ids.iter().map(String::as_str).collect();
    let missing: Vec<String> = z_ids
        .iter()
        .filter(|id| !row_of.contains_key(id.as_str()))
        .cloned()
        .collect();
    let unknown: Vec<String> = factors
        .ids
        .iter()
        .filter(|id| !z_set.contains(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(DisentangleError::Alignment { missing, unknown });
    }
    let m = z.rows();
    let p = z.cols();
    if p < 2 {
        return Err(DisentangleError::Domain("representation needs at least two dimensions".into()));
    }

    let (fit_idx, eval_idx) = if cfg.in_sample {
        ((0..m).collect::<Vec<_>>(), (0..m).collect::<Vec<_>>())
    } else {
        split_indices(m, cfg.eval_frac, cfg.seed)?
    };
    if fit_idx.len() < 2 || eval_idx.len() < 2 {
        return Err(DisentangleError::InsufficientSamples { m, k: 3 });
    }
    let z_fit_raw = z.select_rows(&fit_idx);
    let stats = ColumnStats::compute(&z_fit_raw)?;
    let design_fit = Design::from_tensor(&stats.apply(&z_fit_raw)).with_inactive(&stats.degenerate);
    let design_eval =
        Design::from_tensor(&stats.apply(&z.select_rows(&eval_idx))).with_inactive(&stats.degenerate);

    let (assigned, unmapped) = family_map.resolve(&factors.names);
    if !unmapped.is_empty() {
        log::warn!("{} factors have no family and count as \"other\": {:?}", unmapped.len(), unmapped);
    }

    let outcomes: Vec<Outcome> = (0..factors.num_factors())
        .into_par_iter()
        .map(|j| -> Result<Outcome, DisentangleError> {
            let name = factors.names[j].clone();
            let column = factors.column(j);
            let aligned: Vec<f64> = z_ids.iter().map(|id| column[row_of[id.as_str()]]).collect();
            let skip = |reason: &str| {
                Ok(Outcome::Skipped(SkippedFactor {
                    name: name.clone(),
                    reason: reason.to_string(),
                }))
            };
            let fit_raw: Vec<f64> = fit_idx.iter().map(|&i| aligned[i]).collect();
            let (mu, sd) = mean_std(&fit_raw);
            if !(sd > 1e-12 * mu.abs().max(1.0)) {
                return skip("zero variance on fit rows");
            }
            let standardize = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| (x - mu) / sd).collect() };
            let f_fit = standardize(&fit_raw);
            let f_eval = standardize(&eval_idx.iter().map(|&i| aligned[i]).collect::<Vec<_>>());
            if mean_std(&f_eval).1 == 0.0 {
                return skip("zero variance on eval rows");
            }

            let lam = choose_lambda(&design_fit, &f_fit, &cfg.lam, &cfg.lasso, cfg.seed)?;
            let mut model = fit_lasso(&design_fit, &f_fit, lam, &cfg.lasso)?;
            model.factor_name = name.clone();
            if !model.converged {
                log::warn!("lasso for {name} stopped after {} sweeps", model.iterations);
            }
            let r2 = r2_score(&f_eval, &model.predict(&design_eval))?;
            let importance: Vec<f64> = model.beta.iter().map(|b| b.abs()).collect();
            let comp = completeness(&importance)?;
            let entropy = knn_entropy_seeded(&aligned, cfg.entropy_k, cfg.seed)?;
            Ok(Outcome::Done(
                FactorResult {
                    name,
                    family: assigned[j].as_str().to_string(),
                    r2,
                    completeness: comp,
                    entropy_nats: entropy,
                    nnz: model.nnz(),
                    lam,
                    converged: model.converged,
                },
                importance,
            ))
        })
        .collect::<Result<_, _>>()?;

    let f = factors.num_factors();
    let mut imp = vec![0.0f32; p * f];
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (j, o) in outcomes.into_iter().enumerate() {
        match o {
            Outcome::Done(r, importance) => {
                for (i, v) in importance.into_iter().enumerate() {
                    imp[i * f + j] = v as f32;
                }
                results.push(r);
            }
            Outcome::Skipped(s) => {
                log::warn!("skipping factor {}: {}", s.name, s.reason);
                skipped.push(s);
            }
        }
    }

    let pool: Vec<FactorResult> = match &cfg.fixed_top_set {
        Some(names) => {
            let keep: HashSet<&str> = names.iter().map(String::as_str).collect();
            results.iter().filter(|r| keep.contains(r.name.as_str())).cloned().collect()
        }
        None => results.clone(),
    };
    let top10_r2 = top_n(&pool, |r| r.r2, cfg.top_n);
    let top10_completeness = top_n(&pool, |r| r.completeness, cfg.top_n);
    let (r2_mean, r2_std) = mean_std(&top10_r2.iter().map(|r| r.value).collect::<Vec<_>>());
    let (c_mean, c_std) = mean_std(&top10_completeness.iter().map(|r| r.value).collect::<Vec<_>>());
    let family_of: HashMap<&str, &str> = results
        .iter()
        .map(|r| (r.name.as_str(), r.family.as_str()))
        .collect();
    let mut family_counts = BTreeMap::new();
    for r in &top10_r2 {
        *family_counts.entry(family_of[r.name.as_str()].to_string()).or_insert(0) += 1;
    }

    let report = DisentangleReport {
        run_id: String::new(),
        layer: String::new(),
        sparsity: None,
        lam_policy: cfg.lam.to_string(),
        n_fit: fit_idx.len(),
        n_eval: eval_idx.len(),
        factors: results,
        top10_r2,
        top10_completeness,
        top10_r2_mean: r2_mean,
        top10_r2_std: r2_std,
        top10_completeness_mean: c_mean,
        top10_completeness_std: c_std,
        family_counts,
        skipped,
        unmapped_factors: unmapped,
        timestamp: None,
    };
    let importance = ImportanceMatrix {
        factor_names: factors.names.clone(),
        values: Tensor::matrix(p, f, imp).expect("importance shape"),
    };
    Ok((report, importance))
}

fn choose_lambda(
    design: &Design,
    f: &[f64],
    policy: &LamPolicy,
    opts: &LassoOptions,
    seed: u64,
) -> Result<f64, DisentangleError> {
    match policy {
        LamPolicy::Fixed(v) => Ok(*v),
        LamPolicy::Relative(c) => Ok(c * lambda_max(design, f)?),
        LamPolicy::RelativeGrid(cs) => {
            let (inner_fit, inner_val) = split_indices(design.rows(), 0.2, seed ^ 0x5EED)?;
            let d_fit = design.select_rows(&inner_fit);
            let d_val = design.select_rows(&inner_val);
            let y_fit: Vec<f64> = inner_fit.iter().map(|&i| f[i]).collect();
            let y_val: Vec<f64> = inner_val.iter().map(|&i| f[i]).collect();
            let lmax = lambda_max(&d_fit, &y_fit)?;
            let mut best = (f64::NEG_INFINITY, cs[0]);
            for &c in cs {
                let model = fit_lasso(&d_fit, &y_fit, c * lmax, opts)?;
                let score = r2_score(&y_val, &model.predict(&d_val)).unwrap_or(f64::NEG_INFINITY);
                if score > best.0 {
                    best = (score, c);
                }
            }
            Ok(best.1 * lambda_max(design, f)?)
        }
    }
}
