//! The full command-line pipeline in-process: write a two-layer corpus, sweep
//! sparsity levels with disentanglement, then build the report.
//!
//! cargo run --release --example sweep_and_report [OUT_DIR]

use std::fs;
use std::path::PathBuf;

use audsae::cli;
use audsae::synth::{SyntheticConfig, SyntheticCorpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let keep = std::env::args().nth(1).map(PathBuf::from);
    let tmp = tempfile::tempdir()?;
    let root = keep.clone().unwrap_or_else(|| tmp.path().to_path_buf());
    let data = root.join("data");
    fs::create_dir_all(&data)?;

    let corpus = SyntheticCorpus::generate(&SyntheticConfig {
        n_samples: 1000,
        ..SyntheticConfig::default()
    });
    corpus.write_layer(&data, "layer1", &corpus.noise_layer(1), 4)?;
    corpus.write_layer(&data, "layer2", &corpus.embeddings, 4)?;
    corpus.factors.save_csv(data.join("factors.csv"))?;
    fs::write(data.join("families.json"), corpus.family_map.to_json())?;

    let run = root.join("run");
    let p = |name: &str| data.join(name).display().to_string();
    let code = cli::run([
        "audsae", "sweep",
        "--manifest", &format!("layer1={}", p("layer1.json")),
        "--manifest", &format!("layer2={}", p("layer2.json")),
        "--sparsities", "0.75,0.9,0.97",
        "--latent", "256",
        "--sae-epochs", "30",
        "--probe-epochs", "100",
        "--factors", &p("factors.csv"),
        "--family-map", &p("families.json"),
        // Regress over every utterance; the test split alone is small here.
        "--split", "all",
        "--out", &run.display().to_string(),
    ]);
    assert_eq!(code, 0, "sweep failed");
    assert_eq!(cli::run(["audsae", "report", "--run", &run.display().to_string()]), 0);

    print!("{}", fs::read_to_string(run.join("report/summary.csv"))?);
    print!("{}", fs::read_to_string(run.join("report/baseline.csv"))?);
    if keep.is_none() {
        println!("(pass a directory to keep the run tree and SVG figures)");
    }
    Ok(())
}
