//! Run manifests: provenance for every artifact of a `simulate` run.
//!
//! `manifest.txt` uses the same `key = value` layout as the config file.
//! The run id is derived from the hash of the stored config, so a given
//! (config, seed) always lands in the same directory with the same bytes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Source of the manifest timestamps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    System,
    /// Fixed Unix time, for byte-reproducible manifests.
    Fixed(u64),
}

impl Clock {
    /// `Fixed` when `SOURCE_DATE_EPOCH` holds a valid Unix time, `System` otherwise.
    pub fn from_env() -> Self {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .map_or(Clock::System, Clock::Fixed)
    }

    pub fn now(&self) -> u64 {
        match self {
            Clock::Fixed(t) => *t,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `run-` followed by the first 12 hex digits of the config hash.
pub fn run_id_for(config_hash: &str) -> String {
    format!("run-{}", &config_hash[..12])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub artifacts: Vec<Artifact>,
    pub version: String,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = format!(
            "run_id = {}\nconfig_hash = {}\nseed = {}\nmodel = {}\nstarted_unix = {}\nfinished_unix = {}\nversion = {}\n",
            self.run_id, self.config_hash, self.seed, self.model, self.started_unix, self.finished_unix, self.version
        );
        for (i, a) in self.artifacts.iter().enumerate() {
            s.push_str(&format!("artifact.{i}.path = {}\nartifact.{i}.sha256 = {}\n", a.path, a.sha256));
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                column: "line".into(),
                message: "expected `key = value`".into(),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k).cloned().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: 0,
                column: k.to_string(),
                message: "missing manifest field".into(),
            })
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: 0,
                column: k.to_string(),
                message: "not an integer".into(),
            })
        };
        let mut artifacts = Vec::new();
        while let (Some(p), Some(h)) = (
            map.get(&format!("artifact.{}.path", artifacts.len())),
            map.get(&format!("artifact.{}.sha256", artifacts.len())),
        ) {
            artifacts.push(Artifact {
                path: p.clone(),
                sha256: h.clone(),
            });
        }
        Ok(RunManifest {
            run_id: get("run_id")?,
            config_hash: get("config_hash")?,
            seed: num("seed")?,
            model: get("model")?,
            started_unix: num("started_unix")?,
            finished_unix: num("finished_unix")?,
            artifacts,
            version: get("version")?,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text, &path)
    }

    /// Checks the stored config and every artifact against their hashes.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let check = |rel: &str, expected: &str| -> Result<()> {
            let p: PathBuf = dir.join(rel);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let got = sha256_hex(&bytes);
            if got != expected {
                return Err(Error::data(format!(
                    "{} does not match its recorded hash ({got} != {expected})",
                    p.display()
                )));
            }
            Ok(())
        };
        check(CONFIG_FILE, &self.config_hash)?;
        if run_id_for(&self.config_hash) != self.run_id {
            return Err(Error::data(format!("run id {} does not match the config hash", self.run_id)));
        }
        for a in &self.artifacts {
            check(&a.path, &a.sha256)?;
        }
        Ok(())
    }
}
