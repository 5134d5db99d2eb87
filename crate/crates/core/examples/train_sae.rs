//! TopK sparse autoencoders on k-sparse data: reconstruction error against
//! sparsity, then a checkpoint round trip.
//!
//! cargo run --release --example train_sae

use audsae::data::split_indices;
use audsae::sae::{load_checkpoint, save_checkpoint, CheckpointHeader};
use audsae::synth::sparse_mixture;
use audsae::{eval_reconstruction, train_sae, SaeTrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 1200 points in R^32, each a nonnegative mix of 6 of 48 atoms.
    let (x, _) = sparse_mixture(1200, 32, 48, 6, 1);
    let (fit, val) = split_indices(x.rows(), 0.2, 0)?;
    let (x_fit, x_val) = (x.select_rows(&fit), x.select_rows(&val));

    let mut last = None;
    for sparsity in [0.75, 0.9, 0.97, 0.99] {
        let cfg = SaeTrainConfig {
            sparsity,
            n_latent: 128,
            max_epochs: 60,
            seed: 3,
            ..SaeTrainConfig::default()
        };
        let (model, report) = train_sae(&x_fit, &x_val, &cfg)?;
        println!(
            "sparsity {sparsity:<5} k {:>3}  best epoch {:>3}  val mse {:.5}",
            report.k, report.best_epoch, report.best_val_mse
        );
        last = Some((model, report, cfg));
    }

    let (model, report, cfg) = last.unwrap();
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("sae.ckpt");
    let header = CheckpointHeader {
        d_in: model.d_in(),
        n_latent: model.n_latent(),
        k: model.k,
        sparsity: cfg.sparsity,
        seed: cfg.seed,
        best_epoch: report.best_epoch,
        best_val_mse: report.best_val_mse,
    };
    save_checkpoint(&path, &model, &header)?;
    let (restored, _) = load_checkpoint(&path)?;
    assert_eq!(restored, model);
    let code = restored.encode(x_val.row(0))?;
    let active: Vec<usize> = (0..code.len()).filter(|&j| code[j] != 0.0).collect();
    println!("restored checkpoint, active latents of one input: {active:?}");
    println!("mse through the checkpoint: {:.5}", eval_reconstruction(&restored, &x_val)?);
    Ok(())
}
