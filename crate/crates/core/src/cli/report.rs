use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::args::ReportArgs;
use super::commands::write_csv;
use super::svg::{self, Bars, Frame, LineChart, Reference, Scatter, Series};
use super::sweep::CellResult;
use super::{read_json, write_file, CliError};
use crate::data::Family;
use crate::disentangle::DisentangleReport;

/// `summary.csv`: one row per completed layer x sparsity cell. Column order is
/// part of the format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub layer: String,
    pub sparsity: f64,
    pub k: Option<usize>,
    pub n_latent: Option<usize>,
    pub best_val_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub probe_val_acc: f64,
    pub probe_test_acc: f64,
    pub top10_r2_mean: Option<f64>,
    pub top10_completeness_mean: Option<f64>,
}

/// `baseline.csv`: the raw-embedding cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub layer: String,
    pub probe_val_acc: f64,
    pub probe_test_acc: f64,
    pub top10_r2_mean: Option<f64>,
    pub top10_completeness_mean: Option<f64>,
}

struct CellFiles {
    result: CellResult,
    disentangle: Option<DisentangleReport>,
}

/// Orders `layer2` before `layer10`.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let ord = match (x, y) {
            ((true, p), (true, q)) => {
                let (p, q) = (p.trim_start_matches('0'), q.trim_start_matches('0'));
                p.len().cmp(&q.len()).then_with(|| p.cmp(q))
            }
            _ => x.1.cmp(y.1),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", dir.display())))?;
    let mut out: Vec<(String, PathBuf)> = rd
        .filter_map(Result::ok)
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(|n| (n.to_string(), e.path())))
        .collect();
    out.sort_by(|a, b| natural_cmp(&a.0, &b.0));
    Ok(out)
}

/// Completed cells grouped by layer, layers in natural order and cells by
/// sparsity with the raw baseline first.
fn scan(run: &Path) -> Result<Vec<(String, Vec<CellFiles>)>, CliError> {
    if !run.is_dir() {
        return Err(CliError::Invalid(format!("run tree not found: {}", run.display())));
    }
    let mut layers = Vec::new();
    for (layer, dir) in sorted_subdirs(run)? {
        if layer == "report" {
            continue;
        }
        let mut cells = Vec::new();
        for (name, cdir) in sorted_subdirs(&dir)? {
            if name != "raw" && name.parse::<f64>().is_err() {
                continue;
            }
            let rpath = cdir.join("result.json");
            if !rpath.is_file() {
                continue;
            }
            let result: CellResult = read_json(&rpath)?;
            let dpath = cdir.join("disentangle.json");
            let disentangle = if dpath.is_file() {
                Some(read_json(&dpath)?)
            } else {
                None
            };
            cells.push(CellFiles { result, disentangle });
        }
        cells.sort_by(|a, b| match (a.result.sparsity, b.result.sparsity) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(x), Some(y)) => x.total_cmp(&y),
        });
        if !cells.is_empty() {
            layers.push((layer, cells));
        }
    }
    if layers.is_empty() {
        return Err(CliError::Invalid(format!("no completed cells under {}", run.display())));
    }
    Ok(layers)
}

fn line_points(cells: &[CellFiles], pick: impl Fn(&CellResult) -> Option<f64>) -> Vec<(f64, f64)> {
    cells
        .iter()
        .filter_map(|c| Some((c.result.sparsity?, pick(&c.result)?)))
        .collect()
}

fn baseline(cells: &[CellFiles], pick: impl Fn(&CellResult) -> Option<f64>) -> Option<f64> {
    cells.iter().find(|c| c.result.sparsity.is_none()).and_then(|c| pick(&c.result))
}

/// Line chart over sparsity, one series per layer and a dashed reference per
/// layer when its raw baseline has a value.
fn vs_sparsity(
    layers: &[(String, Vec<CellFiles>)],
    title: &str,
    y_label: &str,
    pick: impl Fn(&CellResult) -> Option<f64> + Copy,
    log_y_ratio: Option<f64>,
) -> LineChart {
    let mut series = Vec::new();
    let mut references = Vec::new();
    for (layer, cells) in layers {
        let points = line_points(cells, pick);
        if points.is_empty() {
            continue;
        }
        if let Some(y) = baseline(cells, pick) {
            references.push(Reference {
                name: format!("{layer} raw"),
                y,
                color: series.len(),
            });
        }
        series.push(Series {
            name: layer.clone(),
            points,
        });
    }
    LineChart {
        title: title.into(),
        x_label: "sparsity".into(),
        y_label: y_label.into(),
        x_categories: None,
        series,
        references,
        log_y_ratio,
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;

fn frame(i: usize) -> Frame {
    Frame {
        x: i as f64 * W,
        y: 0.0,
        w: W,
        h: H,
    }
}

fn accuracy_vs_layer(layers: &[(String, Vec<CellFiles>)]) -> LineChart {
    let names: Vec<String> = layers.iter().map(|l| l.0.clone()).collect();
    let mut levels: Vec<Option<f64>> = Vec::new();
    for c in layers.iter().flat_map(|l| &l.1) {
        if !levels.contains(&c.result.sparsity) {
            levels.push(c.result.sparsity);
        }
    }
    // None (raw) sorts first.
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite sparsities"));
    let series = levels
        .iter()
        .map(|level| Series {
            name: level.map_or_else(|| "raw".into(), |s| format!("sparsity {s}")),
            points: layers
                .iter()
                .enumerate()
                .filter_map(|(i, (_, cells))| {
                    cells
                        .iter()
                        .find(|c| c.result.sparsity == *level)
                        .map(|c| (i as f64, c.result.probe_test_acc))
                })
                .collect(),
        })
        .collect();
    LineChart {
        title: "Probe accuracy vs. layer".into(),
        x_label: "layer".into(),
        y_label: "test accuracy".into(),
        x_categories: Some(names),
        series,
        references: Vec::new(),
        log_y_ratio: None,
    }
}

fn completeness_entropy(layers: &[(String, Vec<CellFiles>)]) -> String {
    let reports: Vec<&DisentangleReport> = layers
        .iter()
        .flat_map(|(_, cells)| cells.iter().filter_map(|c| c.disentangle.as_ref()))
        .collect();
    let scatter = Scatter {
        title: "Completeness vs. entropy".into(),
        x_label: "entropy (nats)".into(),
        y_label: "completeness".into(),
        groups: reports
            .iter()
            .map(|r| Series {
                name: r.run_id.clone(),
                points: r.factors.iter().map(|f| (f.entropy_nats, f.completeness)).collect(),
            })
            .collect(),
    };
    let mut categories: Vec<String> = Family::ALL.iter().map(|f| f.as_str().to_string()).collect();
    let extra: BTreeSet<&str> = reports
        .iter()
        .flat_map(|r| r.family_counts.keys().map(String::as_str))
        .filter(|k| !categories.iter().any(|c| c == k))
        .collect();
    categories.extend(extra.into_iter().map(str::to_string));
    let bars = Bars {
        title: "Families of the 10 best-predicted factors".into(),
        y_label: "count".into(),
        series: reports
            .iter()
            .map(|r| {
                (
                    r.run_id.clone(),
                    categories
                        .iter()
                        .map(|c| r.family_counts.get(c).copied().unwrap_or(0) as f64)
                        .collect(),
                )
            })
            .collect(),
        categories,
    };
    svg::document(2.0 * W, H, &[scatter.render(frame(0)), bars.render(frame(1))])
}

pub(crate) fn report(args: &ReportArgs) -> Result<(), CliError> {
    let layers = scan(&args.run)?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join("report"));

    let mut summary = Vec::new();
    let mut base = Vec::new();
    for (layer, cells) in &layers {
        for c in cells {
            let r = &c.result;
            match r.sparsity {
                Some(s) => summary.push(SummaryRow {
                    layer: layer.clone(),
                    sparsity: s,
                    k: r.k,
                    n_latent: r.n_latent,
                    best_val_mse: r.best_val_mse,
                    test_mse: r.test_mse,
                    probe_val_acc: r.probe_val_acc,
                    probe_test_acc: r.probe_test_acc,
                    top10_r2_mean: r.top10_r2_mean,
                    top10_completeness_mean: r.top10_completeness_mean,
                }),
                None => base.push(BaselineRow {
                    layer: layer.clone(),
                    probe_val_acc: r.probe_val_acc,
                    probe_test_acc: r.probe_test_acc,
                    top10_r2_mean: r.top10_r2_mean,
                    top10_completeness_mean: r.top10_completeness_mean,
                }),
            }
        }
    }
    write_csv(&out.join("summary.csv"), &summary)?;
    write_csv(&out.join("baseline.csv"), &base)?;

    let doc = |c: &LineChart| svg::document(W, H, &[c.render(frame(0))]);
    write_file(&out.join("accuracy_vs_layer.svg"), doc(&accuracy_vs_layer(&layers)))?;
    write_file(
        &out.join("accuracy_vs_sparsity.svg"),
        doc(&vs_sparsity(
            &layers,
            "Probe accuracy vs. sparsity",
            "test accuracy",
            |r| Some(r.probe_test_acc),
            None,
        )),
    )?;
    write_file(
        &out.join("mse_vs_sparsity.svg"),
        doc(&vs_sparsity(
            &layers,
            "Reconstruction error vs. sparsity",
            "test MSE",
            |r| r.test_mse,
            Some(100.0),
        )),
    )?;
    write_file(&out.join("completeness_entropy.svg"), completeness_entropy(&layers))?;
    let r2 = vs_sparsity(&layers, "Top-10 R² vs. sparsity", "mean R²", |r| r.top10_r2_mean, None);
    let comp = vs_sparsity(
        &layers,
        "Top-10 completeness vs. sparsity",
        "mean completeness",
        |r| r.top10_completeness_mean,
        None,
    );
    write_file(
        &out.join("disentangle_vs_sparsity.svg"),
        svg::document(2.0 * W, H, &[r2.render(frame(0)), comp.render(frame(1))]),
    )?;
    println!("{}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_order() {
        let mut v = vec!["layer10", "layer2", "layer1", "raw", "layer02b"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, vec!["layer1", "layer2", "layer02b", "layer10", "raw"]);
    }
}
