//! Softmax linear probes: one layer that carries the label, one that does
//! not, ranked by test accuracy.
//!
//! cargo run --release --example linear_probe

use audsae::data::SplitData;
use audsae::probe::{layer_sweep, multi_seed_test_accuracy, LayerInput};
use audsae::synth::{SyntheticConfig, SyntheticCorpus};
use audsae::{ProbeConfig, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = SyntheticCorpus::generate(&SyntheticConfig {
        n_samples: 800,
        ..SyntheticConfig::default()
    });
    let noise = corpus.noise_layer(9);
    let splits: Vec<(&str, SplitData, SplitData)> = [("signal", &corpus.embeddings), ("noise", &noise)]
        .into_iter()
        .map(|(name, emb)| (name, corpus.split_data(emb, Split::Train), corpus.split_data(emb, Split::Test)))
        .collect();
    let inputs: Vec<LayerInput> = splits
        .iter()
        .map(|(name, train, test)| LayerInput { name, train, test })
        .collect();
    let cfg = ProbeConfig {
        max_epochs: 100,
        ..ProbeConfig::default()
    };
    let sweep = layer_sweep(&inputs, corpus.num_classes, &cfg)?;
    for row in &sweep.rows {
        println!(
            "{:<7} val {:.3}  test {:.3}  (n_train {}, n_test {})",
            row.layer, row.val_acc, row.test_acc, row.n_train, row.n_test
        );
    }
    println!("selected layer: {}", sweep.rows[sweep.selected].layer);

    let (mean, sd) = multi_seed_test_accuracy(inputs[0].train, inputs[0].test, corpus.num_classes, &cfg, &[0, 1, 2])?;
    println!("signal layer over three seeds: {mean:.3} +/- {sd:.3}");
    Ok(())
}
