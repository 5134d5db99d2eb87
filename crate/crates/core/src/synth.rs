//! Synthetic corpora with known structure: embeddings that are a fixed linear
//! map of sparse nonnegative codes, class labels carried by dedicated atoms,
//! and factors planted as sums of code coordinates.

use std::fs;
use std::path::Path;

use crate::data::{
    DataError, DatasetManifest, FactorFamilyMap, FactorTable, Family, ManifestEntry, Split,
    SplitData,
};
use crate::numerics::Rng;
use crate::tensor::{save_tensor, Tensor};

/// A `d x k` matrix with orthonormal rows when `d <= k`, orthonormal columns
/// otherwise (modified Gram-Schmidt on Gaussian vectors).
pub fn random_projection(d: usize, k: usize, rng: &mut Rng) -> Tensor {
    let (count, len) = if d <= k { (d, k) } else { (k, d) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut out = Tensor::zeros(d, k);
    for (a, vec) in basis.iter().enumerate() {
        for (b, &v) in vec.iter().enumerate() {
            let (i, j) = if d <= k { (a, b) } else { (b, a) };
            out.row_mut(i)[j] = v as f32;
        }
    }
    out
}

/// `m` samples `x = W c` where `W` has `n_atoms` unit-norm random columns in
/// `R^d` and each `c` has exactly `active` nonzero entries drawn from
/// `U(0.5, 1.5)`. Returns `(x, c)`.
pub fn sparse_mixture(m: usize, d: usize, n_atoms: usize, active: usize, seed: u64) -> (Tensor, Tensor) {
    let mut rng = Rng::new(seed);
    let mut atoms = vec![vec![0.0f64; d]; n_atoms];
    for a in atoms.iter_mut() {
        a.iter_mut().for_each(|v| *v = rng.normal());
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        a.iter_mut().for_each(|v| *v /= norm);
    }
    let mut x = Tensor::zeros(m, d);
    let mut c = Tensor::zeros(m, n_atoms);
    for i in 0..m {
        let perm = rng.permutation(n_atoms);
        for &j in &perm[..active.min(n_atoms)] {
            let w = rng.uniform_range(0.5, 1.5);
            c.row_mut(i)[j] = w as f32;
            for (xv, &av) in x.row_mut(i).iter_mut().zip(&atoms[j]) {
                *xv += (w * av) as f32;
            }
        }
    }
    (x, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub dim: usize,
    pub code_dim: usize,
    pub n_classes: usize,
    /// Non-class atoms active per sample, besides the class atom.
    pub extra_active: usize,
    pub n_factors: usize,
    pub factor_noise: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            dim: 64,
            code_dim: 96,
            n_classes: 5,
            extra_active: 8,
            n_factors: 12,
            factor_noise: 0.05,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    /// `[M, dim]`
    pub embeddings: Tensor,
    /// Ground-truth `[M, code_dim]` codes.
    pub codes: Tensor,
    pub factors: FactorTable,
    pub family_map: FactorFamilyMap,
    /// Number of code coordinates summed into each factor.
    pub factor_width: Vec<usize>,
    pub num_classes: usize,
}

impl SyntheticCorpus {
    /// Embeddings `x = R c` with `R` a random `dim x code_dim` map with
    /// orthonormal rows. Atom `label` is always on with weight `U(1, 2)`;
    /// `extra_active` further atoms are on with weight `U(0.5, 1.5)`.
    /// Factor `i` sums `1 + i / 2` distinct non-class atoms plus Gaussian noise.
    pub fn generate(cfg: &SyntheticConfig) -> Self {
        let mut rng = Rng::new(cfg.seed);
        let rot = random_projection(cfg.dim, cfg.code_dim, &mut rng);
        let m = cfg.n_samples;
        let free: Vec<usize> = (cfg.n_classes..cfg.code_dim).collect();
        let mut codes = Tensor::zeros(m, cfg.code_dim);
        let mut labels = Vec::with_capacity(m);
        for i in 0..m {
            let label = rng.below(cfg.n_classes as u64) as usize;
            labels.push(label);
            let row = codes.row_mut(i);
            row[label] = rng.uniform_range(1.0, 2.0) as f32;
            let mut pool = free.clone();
            rng.shuffle(&mut pool);
            for &j in &pool[..cfg.extra_active.min(pool.len())] {
                row[j] = rng.uniform_range(0.5, 1.5) as f32;
            }
        }
        let mut embeddings = Tensor::zeros(m, cfg.dim);
        for i in 0..m {
            let c = codes.row(i).to_vec();
            for (d, v) in embeddings.row_mut(i).iter_mut().enumerate() {
                *v = rot
                    .row(d)
                    .iter()
                    .zip(&c)
                    .map(|(&r, &cv)| r as f64 * cv as f64)
                    .sum::<f64>() as f32;
            }
        }

        let mut names = Vec::with_capacity(cfg.n_factors);
        let mut family_map = FactorFamilyMap::default();
        let mut members = Vec::with_capacity(cfg.n_factors);
        let mut next = 0usize;
        for f in 0..cfg.n_factors {
            let fam = Family::ALL[f % Family::ALL.len()];
            let name = format!("{}_{f}", fam.as_str());
            family_map.family_of.insert(name.clone(), fam);
            names.push(name);
            let width = 1 + f / 2;
            let atoms: Vec<usize> = (0..width).map(|w| free[(next + w) % free.len()]).collect();
            next += width;
            members.push(atoms);
        }
        let mut values = Vec::with_capacity(m * cfg.n_factors);
        for i in 0..m {
            for atoms in &members {
                let s: f64 = atoms.iter().map(|&j| codes.get(i, j) as f64).sum();
                values.push(s + cfg.factor_noise * rng.normal());
            }
        }
        let ids: Vec<String> = (0..m).map(|i| format!("utt{i:05}")).collect();
        let (_, test_idx) = crate::data::split_indices(m, cfg.test_frac, cfg.seed ^ 0x7E57)
            .expect("valid test fraction");
        let mut splits = vec![Split::Train; m];
        for i in test_idx {
            splits[i] = Split::Test;
        }
        let factors = FactorTable::new(ids.clone(), names, values).expect("synthetic factors are valid");
        Self {
            ids,
            labels,
            splits,
            embeddings,
            codes,
            factors,
            family_map,
            factor_width: members.iter().map(Vec::len).collect(),
            num_classes: cfg.n_classes,
        }
    }

    /// Same ids, labels and splits with embeddings replaced by Gaussian noise
    /// of matching scale: a layer that carries no label information.
    pub fn noise_layer(&self, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let data = self.embeddings.data();
        let sd = (data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / data.len() as f64).sqrt();
        let mut t = self.embeddings.clone();
        t.data_mut().iter_mut().for_each(|v| *v = (sd * rng.normal()) as f32);
        t
    }

    pub fn split_data(&self, embeddings: &Tensor, split: Split) -> SplitData {
        let idx: Vec<usize> = (0..self.ids.len()).filter(|&i| self.splits[i] == split).collect();
        SplitData {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            x: embeddings.select_rows(&idx),
        }
    }

    /// Factor rows for the given ids, in that order.
    pub fn factors_for(&self, ids: &[String]) -> FactorTable {
        let f = self.factors.num_factors();
        let pos: std::collections::HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut values = Vec::with_capacity(ids.len() * f);
        for id in ids {
            let i = pos[id.as_str()];
            values.extend_from_slice(&self.factors.values[i * f..(i + 1) * f]);
        }
        FactorTable::new(ids.to_vec(), self.factors.names.clone(), values).expect("subset is valid")
    }

    /// Writes one `[frames, dim]` ATNS file per utterance under
    /// `dir/<layer>/` plus `dir/<layer>.json`. Frames are the pooled vector
    /// plus deviations that cancel in pairs, so mean pooling recovers it.
    pub fn write_layer(
        &self,
        dir: &Path,
        layer: &str,
        embeddings: &Tensor,
        frames: usize,
    ) -> Result<DatasetManifest, DataError> {
        let io = |e: std::io::Error, p: &Path| DataError::Io {
            path: p.display().to_string(),
            source: e,
        };
        let sub = dir.join(layer);
        fs::create_dir_all(&sub).map_err(|e| io(e, &sub))?;
        // Deviations cancel in +/- pairs, so the count is rounded down to even.
        let frames = if frames <= 1 { 1 } else { frames & !1 };
        let d = embeddings.cols();
        let mut entries = Vec::with_capacity(self.ids.len());
        for (i, id) in self.ids.iter().enumerate() {
            let x = embeddings.row(i);
            let mut data = Vec::with_capacity(frames * d);
            for t in 0..frames {
                let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
                let amp = if frames == 1 { 0.0 } else { 0.25 * (1 + t / 2) as f32 };
                data.extend(x.iter().enumerate().map(|(j, &v)| {
                    let dev = if (j + t / 2) % 2 == 0 { amp } else { -amp };
                    v + sign * dev
                }));
            }
            let rel = format!("{layer}/{id}.atns");
            let t = Tensor::matrix(frames, d, data).expect("frame shape");
            save_tensor(dir.join(&rel), &t).map_err(|e| DataError::Embedding {
                id: id.clone(),
                source: e,
            })?;
            entries.push(ManifestEntry {
                id: id.clone(),
                path: rel,
                label: self.labels[i],
                split: self.splits[i],
            });
        }
        let mut manifest = DatasetManifest {
            dim: d,
            num_classes: self.num_classes,
            entries,
            base_dir: dir.to_path_buf(),
        };
        manifest.validate()?;
        manifest.save(dir.join(format!("{layer}.json")))?;
        manifest.base_dir = dir.to_path_buf();
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_rows_are_orthonormal() {
        let mut rng = Rng::new(1);
        let r = random_projection(8, 12, &mut rng);
        for a in 0..8 {
            for b in 0..8 {
                let dot: f64 = (0..12).map(|j| r.get(a, j) as f64 * r.get(b, j) as f64).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-5);
            }
        }
        let tall = random_projection(12, 8, &mut rng);
        let dot: f64 = (0..12).map(|i| tall.get(i, 0) as f64 * tall.get(i, 1) as f64).sum();
        assert!(dot.abs() < 1e-5);
    }

    #[test]
    fn corpus_shapes_and_determinism() {
        let cfg = SyntheticConfig {
            n_samples: 100,
            ..SyntheticConfig::default()
        };
        let a = SyntheticCorpus::generate(&cfg);
        let b = SyntheticCorpus::generate(&cfg);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.factors, b.factors);
        assert_eq!(a.embeddings.shape(), &[100, 64]);
        assert_eq!(a.factors.num_factors(), 12);
        assert_eq!(a.splits.iter().filter(|&&s| s == Split::Test).count(), 20);
        assert_eq!(a.factor_width, vec![1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6]);
        for i in 0..100 {
            let nnz = a.codes.row(i).iter().filter(|&&v| v > 0.0).count();
            assert_eq!(nnz, 1 + cfg.extra_active);
            assert!(a.codes.get(i, a.labels[i]) >= 1.0);
        }
    }

    #[test]
    fn written_layer_pools_back() {
        let cfg = SyntheticConfig {
            n_samples: 12,
            dim: 8,
            code_dim: 16,
            n_factors: 3,
            ..SyntheticConfig::default()
        };
        let c = SyntheticCorpus::generate(&cfg);
        let dir = tempfile::tempdir().unwrap();
        c.write_layer(dir.path(), "l0", &c.embeddings, 4).unwrap();
        let m = DatasetManifest::load(dir.path().join("l0.json")).unwrap();
        let train = m.load_split(Split::Train).unwrap();
        let expected = c.split_data(&c.embeddings, Split::Train);
        assert_eq!(train.ids, expected.ids);
        for (a, b) in train.x.data().iter().zip(expected.x.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let raw = crate::tensor::load_tensor(dir.path().join("l0/utt00000.atns")).unwrap();
        assert_eq!(raw.shape(), &[4, 8]);
    }
}
