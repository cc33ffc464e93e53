//! Run manifests: everything needed to rerun a subcommand and check that
//! the data outputs came out byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Command;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: Command,
    /// SHA-256 of `config`.
    pub config_hash: String,
    /// Hash of the physical scene, as written into data file headers.
    pub scene_hash: String,
    /// Fully resolved configuration, overrides and flags applied.
    pub config: String,
    pub seed: u64,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_NAME), text)?;
        Ok(())
    }

    /// Inputs whose content no longer matches the recorded hash.
    pub fn changed_inputs(&self) -> Vec<&Path> {
        self.inputs
            .iter()
            .filter(|r| sha256_file(&r.path).map_or(true, |h| h != r.sha256))
            .map(|r| r.path.as_path())
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{CalibrateArgs, Command};

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "abc").unwrap();
        let m = RunManifest {
            tool_version: "0.1.0".into(),
            command: Command::Calibrate(CalibrateArgs { json: true, out: Some(dir.path().into()) }),
            config_hash: sha256_hex(b"x"),
            scene_hash: "00".into(),
            config: "[sim]\nseed = 3\n".into(),
            seed: 3,
            inputs: vec![FileRecord::of(&input).unwrap()],
            outputs: Vec::new(),
            wall_seconds: 0.25,
        };
        m.save(dir.path()).unwrap();
        let back = RunManifest::load(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.inputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert!(back.changed_inputs().is_empty());
        fs::write(&input, "abd").unwrap();
        assert_eq!(back.changed_inputs(), vec![input.as_path()]);
    }
}
