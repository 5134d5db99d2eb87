//! Command-line front end: argument parsing, run-directory layout, sweeps and
//! reports. [`run`] is the whole program and can be called in-process.
//!
//! Run tree written by `sweep`:
//!
//! ```text
//! <out>/sweep.csv
//! <out>/probe.csv
//! <out>/<layer>/raw/{config.json, probe.json, disentangle.json, result.json}
//! <out>/<layer>/<sparsity>/{config.json, sae.ckpt, probe.json, disentangle.json, importance.atns, result.json}
//! ```
//!
//! `result.json` is written last and marks a cell as complete.

mod args;
mod commands;
mod report;
mod svg;
mod sweep;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use thiserror::Error;

pub use args::{Cli, Command};
pub use sweep::{cell_seed, parse_sparsities, CellResult, RAW_CELL_BASE};

use crate::data::{DataError, DatasetManifest, Split, SplitData};
use crate::disentangle::DisentangleError;
use crate::probe::ProbeError;
use crate::sae::SaeError;
use crate::tensor::TensorError;

/// Exit status: 0 success, 1 internal failure, 2 invalid input.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<SaeError> for CliError {
    fn from(e: SaeError) -> Self {
        match e {
            SaeError::TrainingDiverged { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<DisentangleError> for CliError {
    fn from(e: DisentangleError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// status; diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let result = match cli.command {
        Command::Probe(a) => commands::probe(&a),
        Command::SaeTrain(a) => commands::sae_train(&a),
        Command::SaeEval(a) => commands::sae_eval(&a),
        Command::Sweep(a) => sweep::sweep(&a),
        Command::Disentangle(a) => commands::disentangle(&a),
        Command::Report(a) => report::report(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // A second call in the same process (tests) keeps the first logger.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// A layer named on the command line: `NAME=PATH` or just `PATH`.
#[derive(Debug, Clone)]
pub(crate) struct LayerSpec {
    pub name: String,
    pub path: PathBuf,
}

impl LayerSpec {
    pub fn parse(arg: &str) -> Result<Self, CliError> {
        let (name, path) = match arg.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(arg);
                let stem = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| CliError::Invalid(format!("cannot name a layer after {arg:?}")))?
                    .to_string();
                (stem, p)
            }
        };
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." || name == "report" {
            return Err(CliError::Invalid(format!("invalid layer name {name:?}")));
        }
        Ok(Self { name, path })
    }

    pub fn load(&self) -> Result<DatasetManifest, CliError> {
        if !self.path.is_file() {
            return Err(CliError::Invalid(format!(
                "manifest not found: {}",
                self.path.display()
            )));
        }
        Ok(DatasetManifest::load(&self.path)?)
    }
}

pub(crate) fn parse_layers(args: &[String]) -> Result<Vec<LayerSpec>, CliError> {
    let layers = args.iter().map(|a| LayerSpec::parse(a)).collect::<Result<Vec<_>, _>>()?;
    for (i, l) in layers.iter().enumerate() {
        if layers[..i].iter().any(|o| o.name == l.name) {
            return Err(CliError::Invalid(format!("layer {:?} given twice", l.name)));
        }
    }
    Ok(layers)
}

pub(crate) fn load_choice(m: &DatasetManifest, choice: args::SplitChoice) -> Result<SplitData, CliError> {
    Ok(match choice {
        args::SplitChoice::Train => m.load_split(Split::Train)?,
        args::SplitChoice::Test => m.load_split(Split::Test)?,
        args::SplitChoice::All => {
            let entries: Vec<_> = m.entries.iter().collect();
            SplitData {
                ids: entries.iter().map(|e| e.id.clone()).collect(),
                labels: entries.iter().map(|e| e.label).collect(),
                x: m.load_pooled(&entries)?,
            }
        }
    })
}

/// ISO-8601 UTC, second resolution. The only nondeterministic output field.
pub(crate) fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Directory name of a sparsity level: shortest round-trip decimal.
pub(crate) fn sparsity_dir(s: f64) -> String {
    format!("{s}")
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    // Write then rename so an interrupted run never leaves a half file that
    // looks complete.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("cannot parse {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_spec_forms() {
        let l = LayerSpec::parse("l6=/data/x.json").unwrap();
        assert_eq!((l.name.as_str(), l.path.as_path()), ("l6", Path::new("/data/x.json")));
        let l = LayerSpec::parse("/data/layer3.json").unwrap();
        assert_eq!(l.name, "layer3");
        assert!(LayerSpec::parse("a/b=x.json").is_err());
        assert!(LayerSpec::parse("=x.json").is_err());
        assert!(parse_layers(&["a=x.json".into(), "a=y.json".into()]).is_err());
    }

    #[test]
    fn sparsity_dir_names() {
        assert_eq!(sparsity_dir(0.75), "0.75");
        assert_eq!(sparsity_dir(0.9), "0.9");
        assert_eq!(sparsity_dir(0.975), "0.975");
    }

    #[test]
    fn help_exits_zero_and_bad_flags_two() {
        assert_eq!(run(["audsae", "--help"]), 0);
        assert_eq!(run(["audsae", "sweep", "--bogus"]), 2);
        assert_eq!(run(["audsae"]), 2);
    }
}
