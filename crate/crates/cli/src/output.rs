//! Output directories that record what they wrote, so a failed command can
//! remove its partial results, and the manifest that hashes them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{runtime_err, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output root, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxySummary {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Input name to content hash.
    pub inputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub settings: serde_json::Value,
    pub proxy: Vec<ProxySummary>,
    pub outputs: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            settings: serde_json::Value::Null,
            proxy: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> std::result::Result<Self, String> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_NAME)).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }

    /// Rehash every listed output under `dir`.
    pub fn verify(&self, dir: &Path) -> std::result::Result<(), String> {
        for entry in &self.outputs {
            let bytes = std::fs::read(dir.join(&entry.path)).map_err(|e| format!("{}: {e}", entry.path))?;
            if sha256_hex(&bytes) != entry.sha256 || bytes.len() as u64 != entry.bytes {
                return Err(format!("{}: content does not match manifest", entry.path));
            }
        }
        Ok(())
    }
}

/// Writes under one root and remembers every file and directory it created.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    entries: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        let mut out = Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            dirs: Vec::new(),
            entries: Vec::new(),
        };
        out.ensure_dir_abs(root)?;
        // The root itself survives a rollback.
        out.dirs.clear();
        Ok(out)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn ensure_dir_abs(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.is_dir() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        for d in missing.into_iter().rev() {
            std::fs::create_dir(&d).map_err(runtime_err("write"))?;
            self.dirs.push(d);
        }
        Ok(())
    }

    pub fn ensure_dir(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        self.ensure_dir_abs(&p)?;
        Ok(p)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<FileEntry> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            self.ensure_dir_abs(parent)?;
        }
        std::fs::write(&p, bytes).map_err(runtime_err("write"))?;
        self.files.push(p);
        let entry = FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        self.entries.push(entry.clone());
        Ok(entry)
    }

    /// Record a file some other writer put under the root.
    pub fn register(&mut self, rel: &str) -> Result<FileEntry> {
        let p = self.path(rel);
        self.files.push(p.clone());
        let bytes = std::fs::read(&p).map_err(runtime_err("write"))?;
        let entry = FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        };
        self.entries.push(entry.clone());
        Ok(entry)
    }

    pub fn entries(&self) -> &[FileEntry] {
        &self.entries
    }

    /// Write the manifest listing everything written so far.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.outputs = self.entries.clone();
        let text = serde_json::to_string_pretty(&manifest).map_err(runtime_err("manifest"))?;
        self.write(MANIFEST_NAME, text.as_bytes())?;
        Ok(manifest)
    }

    /// Delete everything this writer created.
    pub fn rollback(self) {
        for f in self.files.iter().rev() {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rollback_removes_only_created_paths() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join("keep.txt"), b"x").unwrap();
        let mut out = OutputDir::create(tmp.path()).unwrap();
        out.write("a/b/c.bin", b"123").unwrap();
        out.write("top.txt", b"t").unwrap();
        out.rollback();
        let left: Vec<_> = std::fs::read_dir(tmp.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(left, vec![std::ffi::OsString::from("keep.txt")]);
    }

    #[test]
    fn manifest_verifies_and_detects_tampering() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(tmp.path()).unwrap();
        out.write("x/data.bin", &[1, 2, 3]).unwrap();
        let m = out.finish(RunManifest::new("test")).unwrap();
        assert_eq!(m.outputs.len(), 1);
        let loaded = RunManifest::load(tmp.path()).unwrap();
        assert_eq!(loaded, m);
        loaded.verify(tmp.path()).unwrap();
        std::fs::write(tmp.path().join("x/data.bin"), [1, 2, 4]).unwrap();
        assert!(loaded.verify(tmp.path()).is_err());
    }
}
