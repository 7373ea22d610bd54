//! `run_config.json` and `run_manifest.json` written next to every
//! subcommand's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::config::RunConfig;
use crate::CliError;

pub const CONFIG_FILE: &str = "run_config.json";
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    seed: u64,
    config_sha256: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(firesr::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Every regular file at or below `root`, sorted by path.
fn files_under(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            io_err(&path, e.into())
        })?;
        if entry.file_type().is_file() {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

fn digest(path: &Path, shown: String) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(FileDigest {
        path: shown,
        sha256: sha256_hex(&bytes),
    })
}

/// Collects what a run read and where it writes.
pub struct RunRecord {
    command: &'static str,
    out: PathBuf,
    inputs: Vec<PathBuf>,
}

impl RunRecord {
    /// Create the output directory and echo the effective config into it.
    pub fn start(command: &'static str, cfg: &RunConfig) -> Result<Self, CliError> {
        let out = cfg.out_dir()?.to_path_buf();
        fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        let path = out.join(CONFIG_FILE);
        fs::write(&path, cfg.to_json()).map_err(|e| io_err(&path, e))?;
        Ok(Self {
            command,
            out,
            inputs: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// Record a file or directory that the run reads.
    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    /// Hash inputs and everything under the output directory.
    pub fn finish(self, cfg: &RunConfig) -> Result<(), CliError> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            for f in files_under(p)? {
                inputs.push(digest(&f, f.display().to_string())?);
            }
        }
        let mut outputs = Vec::new();
        for f in files_under(&self.out)? {
            let rel = f.strip_prefix(&self.out).unwrap_or(&f);
            if rel == Path::new(MANIFEST_FILE) || rel == Path::new(CONFIG_FILE) {
                continue;
            }
            // Forward slashes keep the manifest identical across platforms.
            let shown = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            outputs.push(digest(&f, shown)?);
        }
        let manifest = RunManifest {
            command: self.command,
            seed: cfg.seed,
            config_sha256: sha256_hex(cfg.to_json().as_bytes()),
            inputs,
            outputs,
        };
        let path = self.out.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}
