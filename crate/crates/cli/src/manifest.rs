//! `run-manifest.json`: the effective config plus digests of every input
//! and output. No timestamps or host details, so identical runs produce
//! identical manifests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_SCHEMA: &str = "ecgnet.run-manifest/1";
pub const MANIFEST_FILE: &str = "run-manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    /// Digest of `path`, recorded under `label`.
    pub fn of(path: &Path, label: impl Into<String>) -> CliResult<Self> {
        let data = fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(FileDigest {
            path: label.into(),
            bytes: data.len() as u64,
            sha256: hex(&Sha256::digest(&data)),
        })
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub subcommand: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: config.subcommand.clone(),
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(FileDigest::of(path, path.display().to_string())?);
        Ok(())
    }

    /// Records `out_dir/name`.
    pub fn add_output(&mut self, out_dir: &Path, name: &str) -> CliResult<()> {
        self.outputs.push(FileDigest::of(&out_dir.join(name), name)?);
        Ok(())
    }

    pub fn write(&mut self, out_dir: &Path) -> CliResult<()> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let path = out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(CliError::data(format!(
                "{}: schema {:?}, expected {MANIFEST_SCHEMA:?}",
                path.display(),
                m.schema
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        fs::write(&p, b"abc").unwrap();
        let d = FileDigest::of(&p, "abc").unwrap();
        assert_eq!(d.bytes, 3);
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "b").unwrap();
        fs::write(dir.path().join("a.txt"), "a").unwrap();
        let mut cfg = RunConfig::default();
        cfg.subcommand = "inspect".into();
        let mut m = RunManifest::new(&cfg);
        m.add_output(dir.path(), "b.txt").unwrap();
        m.add_output(dir.path(), "a.txt").unwrap();
        m.summary = serde_json::json!({"k": 1});
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.outputs[0].path, "a.txt");
    }
}
