#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use audsae::synth::{SyntheticConfig, SyntheticCorpus};

pub struct Fixture {
    pub corpus: SyntheticCorpus,
    pub manifests: Vec<PathBuf>,
    pub factors: PathBuf,
    pub family_map: PathBuf,
}

/// Small corpus on disk: one manifest per layer (the second layer is noise
/// when `layers == 2`), the factor CSV and its family map.
pub fn fixture(dir: &Path, cfg: &SyntheticConfig, layers: usize) -> Fixture {
    let corpus = SyntheticCorpus::generate(cfg);
    let mut manifests = Vec::new();
    for l in 0..layers {
        let name = format!("layer{}", l + 1);
        let emb = if l == 0 {
            corpus.embeddings.clone()
        } else {
            corpus.noise_layer(cfg.seed + l as u64)
        };
        corpus.write_layer(dir, &name, &emb, 4).unwrap();
        manifests.push(dir.join(format!("{name}.json")));
    }
    let factors = dir.join("factors.csv");
    corpus.factors.save_csv(&factors).unwrap();
    let family_map = dir.join("families.json");
    fs::write(&family_map, corpus.family_map.to_json()).unwrap();
    Fixture {
        corpus,
        manifests,
        factors,
        family_map,
    }
}

pub fn small_config() -> SyntheticConfig {
    SyntheticConfig {
        n_samples: 200,
        dim: 16,
        code_dim: 24,
        n_classes: 3,
        extra_active: 3,
        n_factors: 12,
        factor_noise: 0.05,
        test_frac: 0.2,
        seed: 11,
    }
}

pub fn audsae<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_audsae"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// File contents with every line mentioning a timestamp field removed.
pub fn without_timestamps(bytes: &[u8]) -> Vec<u8> {
    match std::str::from_utf8(bytes) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.contains("\"timestamp\""))
            .collect::<Vec<_>>()
            .join("\n")
            .into_bytes(),
        Err(_) => bytes.to_vec(),
    }
}

/// Relative path -> contents for every file under `root`.
pub fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn assert_same_tree(a: &Path, b: &Path) {
    let (ta, tb) = (tree(a), tree(b));
    let names = |t: &[(PathBuf, Vec<u8>)]| t.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
    assert_eq!(names(&ta), names(&tb));
    for ((p, x), (_, y)) in ta.iter().zip(&tb) {
        assert!(
            without_timestamps(x) == without_timestamps(y),
            "{} differs between reruns",
            p.display()
        );
    }
}
