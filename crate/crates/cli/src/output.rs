use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use memsolve::config::RunConfig;
use memsolve::report::sha256_hex;
use serde::Serialize;

/// Artifacts of one run. Every file written through `write` is hashed into
/// the manifest.
pub struct RunOutput {
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a [String],
    seed: u64,
    config: &'a RunConfig,
    /// File name to SHA-256 of its contents.
    artifacts: &'a BTreeMap<String, String>,
}

impl RunOutput {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(RunOutput {
            dir: dir.to_path_buf(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json`; the manifest does not list itself.
    pub fn finish(self, command: &[String], cfg: &RunConfig) -> anyhow::Result<()> {
        let manifest = Manifest {
            command,
            seed: cfg.seed(),
            config: cfg,
            artifacts: &self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}
