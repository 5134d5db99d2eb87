//! Lasso regressions from a representation to planted factors: R² on held-out
//! rows, completeness of the coefficients and entropy of each factor.
//!
//! cargo run --release --example disentangle

use audsae::disentangle::{completeness, knn_entropy};
use audsae::synth::{SyntheticConfig, SyntheticCorpus};
use audsae::{run_disentanglement, DisentangleConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // The metrics on their own.
    println!("completeness of [1, 1, 0, 0]: {}", completeness(&[1.0, 1.0, 0.0, 0.0])?);
    let samples: Vec<f64> = (0..5000).map(|i| (i as f64 + 0.5) / 5000.0).collect();
    println!("k-NN entropy of an even grid on [0, 1]: {:.4} nats", knn_entropy(&samples, 3)?);

    let corpus = SyntheticCorpus::generate(&SyntheticConfig::default());
    let cfg = DisentangleConfig::default();
    let (report, importance) = run_disentanglement(
        &corpus.embeddings,
        &corpus.ids,
        &corpus.factors,
        &corpus.family_map,
        &cfg,
    )?;
    println!("lam policy {}, {} fit rows, {} scored", report.lam_policy, report.n_fit, report.n_eval);
    println!("{:<14} {:>6} {:>8} {:>8} {:>4}", "factor", "r2", "compl.", "entropy", "nnz");
    for f in &report.factors {
        println!(
            "{:<14} {:>6.3} {:>8.3} {:>8.3} {:>4}",
            f.name, f.r2, f.completeness, f.entropy_nats, f.nnz
        );
    }
    println!(
        "top-10 R² {:.3} +/- {:.3}, top-10 completeness {:.3} +/- {:.3}",
        report.top10_r2_mean, report.top10_r2_std, report.top10_completeness_mean, report.top10_completeness_std
    );
    println!("families of the top-10 by R²: {:?}", report.family_counts);
    println!("importance matrix {:?}", importance.values.shape());
    Ok(())
}
