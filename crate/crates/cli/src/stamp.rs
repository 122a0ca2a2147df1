//! Stage stamps and atomic artifact writes.
//!
//! A stage writes its outputs as `<name>.partial` and renames them only once
//! every output is complete, then records `stamps/<stage>.json` with the
//! tool version, config checksum, input checksum and the SHA-256 of each
//! output. A later run skips the stage when all of those still match.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::TOOL_VERSION;

pub const PARTIAL_SUFFIX: &str = ".partial";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(PARTIAL_SUFFIX);
    PathBuf::from(s)
}

/// Accumulates labelled input digests into one checksum.
#[derive(Debug, Default, Clone)]
pub struct InputDigest {
    parts: BTreeMap<String, String>,
}

impl InputDigest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&mut self, label: &str, value: &str) -> &mut Self {
        self.parts
            .insert(label.to_string(), sha256_hex(value.as_bytes()));
        self
    }

    pub fn file(&mut self, label: &str, path: &Path) -> anyhow::Result<&mut Self> {
        self.parts.insert(label.to_string(), sha256_file(path)?);
        Ok(self)
    }

    pub fn finish(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.parts {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: String,
    pub tool_version: String,
    pub config_checksum: String,
    pub input_checksum: String,
    /// Output path relative to the output directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl Stamp {
    pub fn path(out_dir: &Path, stage: &str) -> PathBuf {
        out_dir
            .join("stamps")
            .join(format!("{}.json", stage.replace(':', "-")))
    }

    pub fn read(out_dir: &Path, stage: &str) -> Option<Stamp> {
        let raw = fs::read_to_string(Self::path(out_dir, stage)).ok()?;
        serde_json::from_str(&raw).ok()
    }

    /// True when this stamp vouches for the current inputs and every
    /// recorded output is still on disk unchanged.
    pub fn is_current(&self, out_dir: &Path, config_checksum: &str, input_checksum: &str) -> bool {
        self.tool_version == TOOL_VERSION
            && self.config_checksum == config_checksum
            && self.input_checksum == input_checksum
            && self
                .outputs
                .iter()
                .all(|(rel, sum)| sha256_file(&out_dir.join(rel)).is_ok_and(|s| &s == sum))
    }
}

/// Collects a stage's outputs as `.partial` files and publishes them
/// together.
pub struct StageWriter<'a> {
    out_dir: &'a Path,
    stage: String,
    config_checksum: String,
    input_checksum: String,
    outputs: BTreeMap<String, String>,
}

impl<'a> StageWriter<'a> {
    pub fn new(
        out_dir: &'a Path,
        stage: &str,
        config_checksum: &str,
        input_checksum: &str,
    ) -> Self {
        StageWriter {
            out_dir,
            stage: stage.to_string(),
            config_checksum: config_checksum.to_string(),
            input_checksum: input_checksum.to_string(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn target(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    /// Where an output is staged before publication.
    pub fn staging(&self, rel: &str) -> PathBuf {
        partial_path(&self.target(rel))
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let staging = self.staging(rel);
        if let Some(dir) = staging.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&staging, bytes).with_context(|| format!("writing {}", staging.display()))?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Registers an output that was already written to its staging path by
    /// someone else.
    pub fn adopt(&mut self, rel: &str) -> anyhow::Result<()> {
        let sum = sha256_file(&self.staging(rel))?;
        self.outputs.insert(rel.to_string(), sum);
        Ok(())
    }

    /// Renames every staged output into place and writes the stamp.
    pub fn commit(self) -> anyhow::Result<Stamp> {
        for rel in self.outputs.keys() {
            let target = self.target(rel);
            fs::rename(partial_path(&target), &target)
                .with_context(|| format!("publishing {}", target.display()))?;
        }
        let stamp = Stamp {
            stage: self.stage,
            tool_version: TOOL_VERSION.to_string(),
            config_checksum: self.config_checksum,
            input_checksum: self.input_checksum,
            outputs: self.outputs,
        };
        let path = Stamp::path(self.out_dir, &stamp.stage);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut body = serde_json::to_string_pretty(&stamp)?;
        body.push('\n');
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(stamp)
    }
}
