//! Atomic result files and per-run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FileEntry {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    config_sha256: String,
    seed: Option<u64>,
    outputs: Vec<FileEntry>,
}

/// Collects the files one command writes and records them in `manifest.json`.
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl RunOutput {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(FileEntry { file: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Records a file written by other means (for example a policy file).
    pub fn record(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.dir.join(name))?;
        self.files.push(FileEntry { file: name.to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    pub fn finish<C: Serialize>(self, command: &str, config: &C, seed: Option<u64>) -> Result<PathBuf> {
        let config_json = serde_json::to_vec(config)?;
        let manifest = Manifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(&config_json),
            seed,
            outputs: self.files,
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        let path = self.dir.join("manifest.json");
        write_atomic(&path, s.as_bytes())?;
        Ok(path)
    }
}

/// Formats a float for CSV output; infinities are written as `inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// JSON cannot hold infinities; they become `null`.
pub fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}
