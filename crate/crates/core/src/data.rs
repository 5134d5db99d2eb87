//! Dataset manifests, factor tables, family maps, pooling, splitting and
//! column standardization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Rng;
use crate::tensor::{load_tensor, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid factor table: {0}")]
    InvalidFactors(String),
    #[error("invalid family map: {0}")]
    InvalidFamilyMap(String),
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file for {id}: {source}")]
    Embedding {
        id: String,
        #[source]
        source: TensorError,
    },
    #[error("fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Pooling

/// Averages a `[T, D]` frame matrix over time. A rank-1 tensor is already
/// pooled and is returned unchanged.
pub fn mean_pool(x: &Tensor) -> Result<Tensor, DataError> {
    if x.rank() == 1 {
        return Ok(x.clone());
    }
    let (t, d) = (x.rows(), x.cols());
    if t == 0 {
        return Err(DataError::EmptyInput("mean_pool over zero frames".into()));
    }
    let mut acc = vec![0.0f64; d];
    for row in x.iter_rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    Ok(Tensor::vector(
        acc.into_iter().map(|s| (s / t as f64) as f32).collect(),
    ))
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: usize,
    pub split: Split,
}

/// Utterance-to-embedding map for one layer of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dim: usize,
    pub num_classes: usize,
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths resolve against. Not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Parses and validates a manifest from JSON text. File existence is not
    /// checked here; see [`DatasetManifest::load_pooled`].
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let m: DatasetManifest = serde_json::from_str(text).map_err(|e| DataError::Parse {
            path: "<manifest>".into(),
            msg: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let mut m = Self::from_json(&read_text(path)?).map_err(|e| match e {
            DataError::Parse { msg, .. } => DataError::Parse {
                path: path.display().to_string(),
                msg,
            },
            other => other,
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.dim == 0 || self.num_classes == 0 {
            return Err(DataError::InvalidManifest(
                "dim and num_classes must be positive".into(),
            ));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(DataError::InvalidManifest(format!(
                    "duplicate utterance id {:?}",
                    e.id
                )));
            }
            if e.label >= self.num_classes {
                return Err(DataError::InvalidManifest(format!(
                    "label {} of {:?} is not below num_classes {}",
                    e.label, e.id, self.num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Loads and mean-pools the embeddings of the given entries into an
    /// `[M, dim]` matrix, in the order given. Files load in parallel.
    pub fn load_pooled(&self, entries: &[&ManifestEntry]) -> Result<Tensor, DataError> {
        let rows: Vec<Vec<f32>> = entries
            .par_iter()
            .map(|e| {
                let raw = load_tensor(self.resolve(e)).map_err(|source| DataError::Embedding {
                    id: e.id.clone(),
                    source,
                })?;
                let pooled = mean_pool(&raw).map_err(|_| {
                    DataError::InvalidManifest(format!("embedding for {:?} has zero frames", e.id))
                })?;
                if pooled.cols() != self.dim {
                    return Err(DataError::InvalidManifest(format!(
                        "embedding for {:?} has {} columns, manifest dim is {}",
                        e.id,
                        pooled.cols(),
                        self.dim
                    )));
                }
                Ok(pooled.into_data())
            })
            .collect::<Result<_, _>>()?;
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for r in rows {
            data.extend(r);
        }
        Ok(Tensor::matrix(entries.len(), self.dim, data).expect("pooled shape"))
    }

    /// Pooled matrix, labels and ids for every entry of a split.
    pub fn load_split(&self, split: Split) -> Result<SplitData, DataError> {
        let entries: Vec<&ManifestEntry> = self.entries_in(split).collect();
        let x = self.load_pooled(&entries)?;
        Ok(SplitData {
            ids: entries.iter().map(|e| e.id.clone()).collect(),
            labels: entries.iter().map(|e| e.label).collect(),
            x,
        })
    }
}

/// Pooled rows of one split with their ids and labels.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub x: Tensor,
}

impl SplitData {
    pub fn subset(&self, idx: &[usize]) -> SplitData {
        SplitData {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            x: self.x.select_rows(idx),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Splitting

/// Seeded partition of `0..n` into `(kept, held_out)` with
/// `|held_out| = round(frac * n)`. Both halves are returned in ascending order.
pub fn split_indices(n: usize, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(DataError::BadFraction(frac));
    }
    if n == 0 {
        return Err(DataError::EmptyInput("nothing to split".into()));
    }
    let n_held = (frac * n as f64).round() as usize;
    let perm = Rng::new(seed).permutation(n);
    let mut held: Vec<usize> = perm[..n_held].to_vec();
    let mut kept: Vec<usize> = perm[n_held..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    Ok((kept, held))
}

/// Partitions the manifest's train entries into (train ids, validation ids).
pub fn split_train_val(
    manifest: &DatasetManifest,
    val_frac: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), DataError> {
    let ids: Vec<&str> = manifest
        .entries_in(Split::Train)
        .map(|e| e.id.as_str())
        .collect();
    if ids.is_empty() {
        return Err(DataError::EmptyInput("manifest has no train entries".into()));
    }
    let (kept, held) = split_indices(ids.len(), val_frac, seed)?;
    Ok((
        kept.iter().map(|&i| ids[i].to_string()).collect(),
        held.iter().map(|&i| ids[i].to_string()).collect(),
    ))
}

// ---------------------------------------------------------------------------
// Standardization

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for degenerate columns.
    pub std: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl ColumnStats {
    pub fn compute(x: &Tensor) -> Result<Self, DataError> {
        let (m, p) = (x.rows(), x.cols());
        if m < 2 {
            return Err(DataError::EmptyInput(
                "column statistics need at least two rows".into(),
            ));
        }
        let mut mean = vec![0.0f64; p];
        for row in x.iter_rows() {
            for (a, &v) in mean.iter_mut().zip(row) {
                *a += v as f64;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut var = vec![0.0f64; p];
        for row in x.iter_rows() {
            for ((a, &v), mu) in var.iter_mut().zip(row).zip(&mean) {
                let d = v as f64 - mu;
                *a += d * d;
            }
        }
        let mut std = Vec::with_capacity(p);
        let mut degenerate = Vec::with_capacity(p);
        for (v, mu) in var.iter().zip(&mean) {
            let s = (v / m as f64).sqrt();
            // Relative cutoff so rounding noise on a constant column is not
            // mistaken for signal.
            let flat = s <= 1e-12 * mu.abs().max(1.0);
            degenerate.push(flat);
            std.push(if flat { 1.0 } else { s });
        }
        Ok(Self {
            mean,
            std,
            degenerate,
        })
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = ((*v as f64 - self.mean[j]) / self.std[j]) as f32;
            }
        }
        out
    }

    pub fn invert(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v as f64 * self.std[j] + self.mean[j]) as f32;
            }
        }
        out
    }
}

/// Standardizes columns to mean 0 and population std 1, computing the
/// statistics from `x` unless `stats` is given.
pub fn standardize_columns(
    x: &Tensor,
    stats: Option<&ColumnStats>,
) -> Result<(Tensor, ColumnStats), DataError> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => ColumnStats::compute(x)?,
    };
    Ok((stats.apply(x), stats))
}

// ---------------------------------------------------------------------------
// Factor tables

/// Per-utterance acoustic descriptors, one column per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    /// Row-major `ids.len() x names.len()`.
    pub values: Vec<f64>,
}

impl FactorTable {
    pub fn new(ids: Vec<String>, names: Vec<String>, values: Vec<f64>) -> Result<Self, DataError> {
        let t = Self { ids, names, values };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.values.len() != self.ids.len() * self.names.len() {
            return Err(DataError::InvalidFactors(format!(
                "{} values for {} rows x {} factors",
                self.values.len(),
                self.ids.len(),
                self.names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &self.names {
            if !seen.insert(n) {
                return Err(DataError::InvalidFactors(format!("duplicate factor name {n:?}")));
            }
        }
        let mut seen = HashSet::new();
        for id in &self.ids {
            if !seen.insert(id) {
                return Err(DataError::InvalidFactors(format!("duplicate id {id:?}")));
            }
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let f = self.names.len();
            return Err(DataError::InvalidFactors(format!(
                "non-finite value for {:?} / {:?}",
                self.ids[i / f],
                self.names[i % f]
            )));
        }
        Ok(())
    }

    pub fn num_factors(&self) -> usize {
        self.names.len()
    }

    pub fn num_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let f = self.names.len();
        (0..self.ids.len()).map(|i| self.values[i * f + j]).collect()
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DataError> {
        let bad = |msg: String| DataError::InvalidFactors(msg);
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if headers.get(0) != Some("id") {
            return Err(bad("first column must be \"id\"".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != names.len() + 1 {
                return Err(bad(format!("row {} has {} fields", line + 2, rec.len())));
            }
            ids.push(rec[0].to_string());
            for (j, field) in rec.iter().skip(1).enumerate() {
                let field = field.trim();
                if field.is_empty() {
                    return Err(bad(format!(
                        "missing value for {:?} / {:?}",
                        &rec[0], names[j]
                    )));
                }
                let v: f64 = field.parse().map_err(|_| {
                    bad(format!("row {}: cannot parse {field:?} as a number", line + 2))
                })?;
                values.push(v);
            }
        }
        Self::new(ids, names, values)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        Self::from_csv_str(&read_text(path)?).map_err(|e| match e {
            DataError::InvalidFactors(msg) => DataError::Parse {
                path: path.display().to_string(),
                msg,
            },
            other => other,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        let f = self.names.len();
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values[i * f..(i + 1) * f].iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

// ---------------------------------------------------------------------------
// Factor families

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Pitch,
    Loudness,
    Formants,
    Mfcc,
    Rhythm,
    Spectral,
    Quality,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Pitch,
        Family::Loudness,
        Family::Formants,
        Family::Mfcc,
        Family::Rhythm,
        Family::Spectral,
        Family::Quality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Pitch => "pitch",
            Family::Loudness => "loudness",
            Family::Formants => "formants",
            Family::Mfcc => "mfcc",
            Family::Rhythm => "rhythm",
            Family::Spectral => "spectral",
            Family::Quality => "quality",
        }
    }

    /// Family of an eGeMAPS v02 functional name, by descriptor prefix.
    pub fn of_egemaps_name(name: &str) -> Option<Family> {
        let n = name.to_ascii_lowercase();
        let has = |p: &str| n.starts_with(p);
        if has("f0semitone") {
            Some(Family::Pitch)
        } else if has("loudnesspeakspersec")
            || has("voicedsegment")
            || has("meanvoicedsegment")
            || has("stddevvoicedsegment")
            || has("meanunvoicedsegment")
            || has("stddevunvoicedsegment")
        {
            Some(Family::Rhythm)
        } else if has("loudness") || has("equivalentsoundlevel") {
            Some(Family::Loudness)
        } else if has("f1") || has("f2") || has("f3") {
            Some(Family::Formants)
        } else if has("mfcc") {
            Some(Family::Mfcc)
        } else if has("alpharatio") || has("hammarberg") || has("slope") || has("spectralflux") {
            Some(Family::Spectral)
        } else if has("jitter") || has("shimmer") || has("hnr") || has("logrelf0") {
            Some(Family::Quality)
        } else {
            None
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| DataError::InvalidFamilyMap(format!("unknown family {s:?}")))
    }
}

/// The 88 eGeMAPS v02 functionals, in openSMILE output order.
pub const EGEMAPS_NAMES: [&str; 88] = [
    "F0semitoneFrom27.5Hz_sma3nz_amean",
    "F0semitoneFrom27.5Hz_sma3nz_stddevNorm",
    "F0semitoneFrom27.5Hz_sma3nz_percentile20.0",
    "F0semitoneFrom27.5Hz_sma3nz_percentile50.0",
    "F0semitoneFrom27.5Hz_sma3nz_percentile80.0",
    "F0semitoneFrom27.5Hz_sma3nz_pctlrange0-2",
    "F0semitoneFrom27.5Hz_sma3nz_meanRisingSlope",
    "F0semitoneFrom27.5Hz_sma3nz_stddevRisingSlope",
    "F0semitoneFrom27.5Hz_sma3nz_meanFallingSlope",
    "F0semitoneFrom27.5Hz_sma3nz_stddevFallingSlope",
    "loudness_sma3_amean",
    "loudness_sma3_stddevNorm",
    "loudness_sma3_percentile20.0",
    "loudness_sma3_percentile50.0",
    "loudness_sma3_percentile80.0",
    "loudness_sma3_pctlrange0-2",
    "loudness_sma3_meanRisingSlope",
    "loudness_sma3_stddevRisingSlope",
    "loudness_sma3_meanFallingSlope",
    "loudness_sma3_stddevFallingSlope",
    "spectralFlux_sma3_amean",
    "spectralFlux_sma3_stddevNorm",
    "mfcc1_sma3_amean",
    "mfcc1_sma3_stddevNorm",
    "mfcc2_sma3_amean",
    "mfcc2_sma3_stddevNorm",
    "mfcc3_sma3_amean",
    "mfcc3_sma3_stddevNorm",
    "mfcc4_sma3_amean",
    "mfcc4_sma3_stddevNorm",
    "jitterLocal_sma3nz_amean",
    "jitterLocal_sma3nz_stddevNorm",
    "shimmerLocaldB_sma3nz_amean",
    "shimmerLocaldB_sma3nz_stddevNorm",
    "HNRdBACF_sma3nz_amean",
    "HNRdBACF_sma3nz_stddevNorm",
    "logRelF0-H1-H2_sma3nz_amean",
    "logRelF0-H1-H2_sma3nz_stddevNorm",
    "logRelF0-H1-A3_sma3nz_amean",
    "logRelF0-H1-A3_sma3nz_stddevNorm",
    "F1frequency_sma3nz_amean",
    "F1frequency_sma3nz_stddevNorm",
    "F1bandwidth_sma3nz_amean",
    "F1bandwidth_sma3nz_stddevNorm",
    "F1amplitudeLogRelF0_sma3nz_amean",
    "F1amplitudeLogRelF0_sma3nz_stddevNorm",
    "F2frequency_sma3nz_amean",
    "F2frequency_sma3nz_stddevNorm",
    "F2bandwidth_sma3nz_amean",
    "F2bandwidth_sma3nz_stddevNorm",
    "F2amplitudeLogRelF0_sma3nz_amean",
    "F2amplitudeLogRelF0_sma3nz_stddevNorm",
    "F3frequency_sma3nz_amean",
    "F3frequency_sma3nz_stddevNorm",
    "F3bandwidth_sma3nz_amean",
    "F3bandwidth_sma3nz_stddevNorm",
    "F3amplitudeLogRelF0_sma3nz_amean",
    "F3amplitudeLogRelF0_sma3nz_stddevNorm",
    "alphaRatioV_sma3nz_amean",
    "alphaRatioV_sma3nz_stddevNorm",
    "hammarbergIndexV_sma3nz_amean",
    "hammarbergIndexV_sma3nz_stddevNorm",
    "slopeV0-500_sma3nz_amean",
    "slopeV0-500_sma3nz_stddevNorm",
    "slopeV500-1500_sma3nz_amean",
    "slopeV500-1500_sma3nz_stddevNorm",
    "spectralFluxV_sma3nz_amean",
    "spectralFluxV_sma3nz_stddevNorm",
    "mfcc1V_sma3nz_amean",
    "mfcc1V_sma3nz_stddevNorm",
    "mfcc2V_sma3nz_amean",
    "mfcc2V_sma3nz_stddevNorm",
    "mfcc3V_sma3nz_amean",
    "mfcc3V_sma3nz_stddevNorm",
    "mfcc4V_sma3nz_amean",
    "mfcc4V_sma3nz_stddevNorm",
    "alphaRatioUV_sma3nz_amean",
    "hammarbergIndexUV_sma3nz_amean",
    "slopeUV0-500_sma3nz_amean",
    "slopeUV500-1500_sma3nz_amean",
    "spectralFluxUV_sma3nz_amean",
    "loudnessPeaksPerSec",
    "VoicedSegmentsPerSec",
    "MeanVoicedSegmentLengthSec",
    "StddevVoicedSegmentLengthSec",
    "MeanUnvoicedSegmentLength",
    "StddevUnvoicedSegmentLength",
    "equivalentSoundLevel_dBp",
];

/// Factor name to family assignment. Names absent from the map resolve to
/// "other" and are reported.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorFamilyMap {
    pub family_of: BTreeMap<String, Family>,
}

/// Family of a factor after resolution against a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assigned {
    Known(Family),
    Other,
}

impl Assigned {
    pub fn as_str(self) -> &'static str {
        match self {
            Assigned::Known(f) => f.as_str(),
            Assigned::Other => "other",
        }
    }
}

impl FactorFamilyMap {
    /// The default map over the 88 eGeMAPS names.
    pub fn egemaps() -> Self {
        let family_of = EGEMAPS_NAMES
            .iter()
            .map(|n| {
                let fam = Family::of_egemaps_name(n).expect("every eGeMAPS name has a family");
                (n.to_string(), fam)
            })
            .collect();
        Self { family_of }
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let raw: HashMap<String, String> = serde_json::from_str(text)
            .map_err(|e| DataError::InvalidFamilyMap(e.to_string()))?;
        let family_of = raw
            .into_iter()
            .map(|(k, v)| Ok((k, v.parse::<Family>()?)))
            .collect::<Result<_, DataError>>()?;
        Ok(Self { family_of })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        Self::from_json(&read_text(path)?).map_err(|e| match e {
            DataError::InvalidFamilyMap(msg) => DataError::Parse {
                path: path.display().to_string(),
                msg,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let m: BTreeMap<&str, &str> = self
            .family_of
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        serde_json::to_string_pretty(&m).expect("map serializes")
    }

    /// Assigns every factor of `names` a family; returns the assignments and
    /// the names that fell through to "other".
    pub fn resolve(&self, names: &[String]) -> (Vec<Assigned>, Vec<String>) {
        let mut unmapped = Vec::new();
        let assigned = names
            .iter()
            .map(|n| match self.family_of.get(n) {
                Some(&f) => Assigned::Known(f),
                None => {
                    unmapped.push(n.clone());
                    Assigned::Other
                }
            })
            .collect();
        (assigned, unmapped)
    }
}
