//! Frame-level embeddings on disk, as an extractor would write them, loaded
//! back as mean-pooled train/test matrices.
//!
//! cargo run --example embeddings_io

use audsae::data::ColumnStats;
use audsae::synth::{SyntheticConfig, SyntheticCorpus};
use audsae::{load_tensor, mean_pool, DatasetManifest, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let corpus = SyntheticCorpus::generate(&SyntheticConfig {
        n_samples: 60,
        dim: 8,
        code_dim: 12,
        n_classes: 3,
        ..SyntheticConfig::default()
    });
    // Six frames per utterance; pooling over frames gives back the embedding.
    let manifest = corpus.write_layer(dir.path(), "layer6", &corpus.embeddings, 6)?;
    let path = dir.path().join("layer6.json");
    println!("manifest: {} entries, dim {}", manifest.entries.len(), manifest.dim);

    let first = &manifest.entries[0];
    let frames = load_tensor(manifest.resolve(first))?;
    println!("{}: frames {:?}, pooled {:?}", first.id, frames.shape(), &mean_pool(&frames)?.data()[..4]);

    let loaded = DatasetManifest::load(&path)?;
    let train = loaded.load_split(Split::Train)?;
    let test = loaded.load_split(Split::Test)?;
    println!("train {:?}, test {:?}", train.x.shape(), test.x.shape());

    // Standardize with statistics of the train split only.
    let stats = ColumnStats::compute(&train.x)?;
    let z = stats.apply(&test.x);
    println!("first standardized test row: {:?}", &z.row(0)[..4]);
    Ok(())
}
