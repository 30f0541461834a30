//! Output directories and their run manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use clickroles_core::io::write_file;
use clickroles_core::{Error, Result};

use crate::settings::Settings;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    /// Wall-clock time of the run; the only field that varies between
    /// identical runs.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Option<RunManifest>> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((hex::encode(h.finalize()), total))
}

/// One subcommand invocation writing into one output directory.
pub struct Run {
    pub subcommand: &'static str,
    pub out: PathBuf,
    pub seed: u64,
    pub settings: Settings,
    inputs: Vec<InputDigest>,
    outputs: BTreeSet<String>,
}

impl Run {
    /// Prepares `out`. A directory holding another subcommand's manifest is
    /// refused; files listed by an earlier run of the same subcommand are
    /// removed so the new manifest stays complete.
    pub fn start(subcommand: &'static str, out: &Path, seed: u64, settings: Settings) -> Result<Run> {
        if out.exists() {
            if let Some(prev) = RunManifest::read(out)? {
                if prev.subcommand != subcommand {
                    return Err(Error::Data(format!(
                        "{} already holds output of `{}`; use a separate --out directory",
                        out.display(),
                        prev.subcommand
                    )));
                }
                for f in &prev.outputs {
                    let p = out.join(f);
                    if p.is_file() {
                        std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                    }
                }
            }
        }
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Run {
            subcommand,
            out: out.to_path_buf(),
            seed,
            settings,
            inputs: Vec::new(),
            outputs: BTreeSet::new(),
        })
    }

    /// Registers an input file and returns its path.
    pub fn input(&mut self, path: &Path) -> Result<PathBuf> {
        let (sha256, bytes) = sha256_file(path)?;
        let entry = InputDigest {
            path: path.display().to_string(),
            sha256,
            bytes,
        };
        if !self.inputs.contains(&entry) {
            self.inputs.push(entry);
        }
        Ok(path.to_path_buf())
    }

    pub fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_file(&path, body)?;
        self.outputs.insert(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, |w| w.write_all(text.as_bytes()))
    }

    pub fn finish(self) -> Result<RunManifest> {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = RunManifest {
            tool: "clickroles".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: self.subcommand.into(),
            seed: self.seed,
            config: self.settings.resolved,
            inputs: self.inputs,
            outputs: self.outputs.into_iter().collect(),
            created_unix,
        };
        let path = self.out.join(MANIFEST);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_file(&path, |w| writeln!(w, "{json}"))?;
        Ok(manifest)
    }
}
