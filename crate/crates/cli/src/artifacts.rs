//! Artifact files and the run manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use smjd_core::config::LoadedConfig;
use smjd_core::{Error, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: String,
    /// SHA-256 of the config bytes followed by the model file bytes.
    pub config_sha256: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub version: String,
    pub outputs: Vec<String>,
    pub exit_code: u8,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(command: &str, loaded: &LoadedConfig, seed: u64, threads: Option<usize>) -> Self {
        Self {
            command: command.to_string(),
            config: loaded.path.display().to_string(),
            config_sha256: hex::encode(Sha256::digest(&loaded.raw)),
            seed,
            threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            exit_code: 0,
            error: None,
            wall_time_s: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json_file(&dir.join("manifest.json"), self)
    }

    /// Writes `value` as pretty JSON to `dir/name` and records the file.
    pub fn json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        write_json_file(&dir.join(name), value)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Creates `dir/name`, hands a buffered writer to `body` and records the file.
    pub fn file<F>(&mut self, dir: &Path, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = dir.join(name);
        let io_err = |e| Error::Io {
            path: path.display().to_string(),
            source: e,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
