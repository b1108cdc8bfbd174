use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, ExperimentError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Provenance of one run. Everything except `stages` is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of `config` rendered as TOML.
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub datasets: BTreeMap<String, String>,
    pub test_fingerprint: String,
    pub rejected_rows: usize,
    pub stages: Vec<StageTiming>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config.to_toml().as_bytes()),
            config: config.clone(),
            datasets: BTreeMap::new(),
            test_fingerprint: String::new(),
            rejected_rows: 0,
            stages: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Runs `f`, recording its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming { stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn config_matches(&self) -> bool {
        self.config_sha256 == sha256_hex(self.config.to_toml().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::data("report", format!("{}: {e}", path.display())))
    }
}

/// Files are written under temporary names and renamed into place on
/// [`commit`](Self::commit); dropping an uncommitted stage deletes them.
pub struct OutputStage {
    dir: PathBuf,
    staged: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl OutputStage {
    pub fn new(dir: &Path) -> Result<Self, ExperimentError> {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), staged: Vec::new(), committed: false })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), ExperimentError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp-{}", std::process::id()));
        fs::write(&tmp, bytes).map_err(|e| ExperimentError::Io(format!("{}: {e}", tmp.display())))?;
        self.staged.retain(|(_, t)| t != &target);
        self.staged.push((tmp, target));
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.staged
            .iter()
            .map(|(_, t)| t.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect()
    }

    /// Renames staged files into place, then writes the manifest last.
    pub fn commit(mut self, manifest: &mut RunManifest) -> Result<(), ExperimentError> {
        manifest.artifacts = self.names();
        manifest.artifacts.push("manifest.json".into());
        let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|e| ExperimentError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.write("manifest.json", &bytes)?;
        for (tmp, target) in &self.staged {
            fs::rename(tmp, target).map_err(|e| ExperimentError::Io(format!("{}: {e}", target.display())))?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for OutputStage {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.staged {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}
