//! Output manifests: every file under a run directory with its sha256, plus the
//! hash of the resolved config that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
/// Wall-clock timings; listed in the manifest but never hashed.
pub const TIMING_FILE: &str = "timing.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: String,
    #[serde(default)]
    pub nondeterministic: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        toml::from_str(&text).map_err(|e| LabError::Data(format!("malformed manifest: {e}")))
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walked paths live under the root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.push(rel);
        }
    }
    Ok(())
}

/// Hashes every file under `dir` (except the manifest and timing files) and
/// writes `manifest.toml` alongside them.
pub fn write_manifest(dir: &Path, config_text: &str) -> Result<Manifest> {
    let mut paths = Vec::new();
    collect(dir, dir, &mut paths)?;
    paths.sort();
    let mut files = Vec::new();
    let mut nondeterministic = Vec::new();
    for p in paths {
        if p == MANIFEST_FILE {
            continue;
        }
        if p == TIMING_FILE {
            nondeterministic.push(p);
            continue;
        }
        let bytes = std::fs::read(dir.join(&p))?;
        files.push(ManifestEntry {
            path: p,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        config_hash: sha256_hex(config_text.as_bytes()),
        config: config_text.to_string(),
        nondeterministic,
        files,
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| LabError::Config(format!("cannot render manifest: {e}")))?;
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_sorted_files_and_skips_timing() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("b")).unwrap();
        std::fs::write(dir.path().join("b/x.csv"), "1\n").unwrap();
        std::fs::write(dir.path().join("a.csv"), "2\n").unwrap();
        std::fs::write(dir.path().join(TIMING_FILE), "t = 1\n").unwrap();
        let m = write_manifest(dir.path(), "seed = 1\n").unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["a.csv", "b/x.csv"]);
        assert_eq!(m.nondeterministic, [TIMING_FILE]);
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
        // rewriting is stable
        assert_eq!(write_manifest(dir.path(), "seed = 1\n").unwrap(), m);
    }
}
