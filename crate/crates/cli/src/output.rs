//! Output directory bookkeeping and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const CONFIG_FILE: &str = "config.resolved.toml";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Collects the files of one run and their digests, in write order.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
    seeds: Vec<(String, u64)>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            seeds: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(bss_core::BssError::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Records a seed that the run derived or used.
    pub fn seed(&mut self, label: &str, value: u64) {
        self.seeds.push((label.to_string(), value));
    }

    /// Writes the resolved config and the manifest; call last.
    pub fn finish(mut self, command: &str, config: &ExperimentConfig, model_hash: &str) -> Result<(), CliError> {
        let config_text = config.to_toml();
        self.write(CONFIG_FILE, config_text.as_bytes())?;
        let mut m = String::new();
        let _ = writeln!(m, "command: {command}");
        let _ = writeln!(m, "bss_version: {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "config: {CONFIG_FILE}");
        let _ = writeln!(m, "config_sha256: {}", config.hash());
        let _ = writeln!(m, "model_sha256: {model_hash}");
        for (label, value) in &self.seeds {
            let _ = writeln!(m, "seed.{label}: {value}");
        }
        let _ = writeln!(m, "rerun: bss {command} --config {CONFIG_FILE} --out <dir>");
        let _ = writeln!(m, "outputs:");
        for (name, digest) in &self.files {
            let _ = writeln!(m, "  {digest}  {name}");
        }
        fs::write(self.dir.join(MANIFEST_FILE), m)?;
        Ok(())
    }
}

/// `t,value` rows with round-trip precision.
pub fn series_csv(times: impl IntoIterator<Item = f64>, values: &[f64]) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in times.into_iter().zip(values) {
        let _ = writeln!(out, "{},{}", bss_core::io::fmt17(t), bss_core::io::fmt17(*v));
    }
    out
}
