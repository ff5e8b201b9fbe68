//! A run directory: artifacts plus `manifest.json` recording each file's
//! checksum and the stage that wrote it.

use std::path::{Path, PathBuf};

use rankood::tensor_io::{self, ManifestEntry, MatrixFormat};
use rankood::toy_trainer::ModelParams;
use rankood::{DatasetManifest, LogitMatrix, SplitTag};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

pub struct Workspace {
    root: PathBuf,
    manifest: DatasetManifest,
}

impl Workspace {
    /// Starts a fresh manifest. Used by the first stage only.
    pub fn create(root: &Path, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| rankood::Error::Io { path: root.to_path_buf(), source: e })?;
        Ok(Workspace { root: root.to_path_buf(), manifest: DatasetManifest::new(seed, "") })
    }

    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        if !path.is_file() {
            return Err(CliError::Dependency { path, producer: "synth", reason: "missing" });
        }
        Ok(Workspace { root: root.to_path_buf(), manifest: DatasetManifest::load(&path)? })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    /// Absolute path of `rel` after checking it against the manifest.
    pub fn require(&self, rel: &str, producer: &'static str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        let dep = |reason| CliError::Dependency { path: path.clone(), producer, reason };
        let entry = self.manifest.get(Path::new(rel)).ok_or_else(|| dep("not in the manifest"))?;
        if !path.is_file() {
            return Err(dep("missing"));
        }
        if tensor_io::file_checksum(&path)? != entry.checksum {
            return Err(dep("stale (checksum mismatch)"));
        }
        Ok(path)
    }

    pub fn read_logits(&self, rel: &str, producer: &'static str, split: SplitTag) -> Result<LogitMatrix> {
        let path = self.require(rel, producer)?;
        Ok(tensor_io::read_logits(&path, MatrixFormat::Binary, split)?)
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str, producer: &'static str) -> Result<T> {
        Ok(tensor_io::read_json(&self.require(rel, producer)?)?)
    }

    pub fn read_text(&self, rel: &str, producer: &'static str) -> Result<String> {
        let path = self.require(rel, producer)?;
        std::fs::read_to_string(&path).map_err(|e| rankood::Error::Io { path, source: e }.into())
    }

    pub fn read_model(&self, dir: &str, producer: &'static str) -> Result<ModelParams> {
        let prefix = format!("{dir}/");
        let files: Vec<String> = self
            .manifest
            .entries
            .iter()
            .map(|e| e.path.to_string_lossy().into_owned())
            .filter(|p| p.starts_with(&prefix))
            .collect();
        if files.is_empty() {
            return Err(CliError::Dependency { path: self.root.join(dir), producer, reason: "missing" });
        }
        for f in &files {
            self.require(f, producer)?;
        }
        Ok(ModelParams::load(&self.root.join(dir))?)
    }

    fn record(&mut self, rel: &str, checksum: String, producer: &str, meta: Option<&LogitMatrix>) -> Result<()> {
        self.manifest.upsert(ManifestEntry {
            path: PathBuf::from(rel),
            split_tag: meta.map(LogitMatrix::split),
            n_samples: meta.map(|m| m.rows() as u64),
            n_classes: None,
            checksum,
            producer: producer.to_string(),
        })?;
        Ok(())
    }

    pub fn write_logits(&mut self, rel: &str, m: &LogitMatrix, producer: &str) -> Result<()> {
        let sum = tensor_io::write_logits(m, &self.root.join(rel), MatrixFormat::Binary)?;
        self.record(rel, sum, producer, Some(m))
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T, producer: &str) -> Result<()> {
        let sum = tensor_io::write_json(value, &self.root.join(rel))?;
        self.record(rel, sum, producer, None)
    }

    pub fn write_text(&mut self, rel: &str, text: &str, producer: &str) -> Result<()> {
        let sum = tensor_io::write_text(text, &self.root.join(rel))?;
        self.record(rel, sum, producer, None)
    }

    pub fn write_model(&mut self, dir: &str, model: &ModelParams, producer: &str) -> Result<()> {
        for (name, sum) in model.save(&self.root.join(dir))? {
            self.record(&format!("{dir}/{name}"), sum, producer, None)?;
        }
        Ok(())
    }

    /// Echoes the resolved configuration into the stage's output directory.
    pub fn write_config(&mut self, dir: &str, cfg: &PipelineConfig, producer: &str) -> Result<()> {
        self.write_json(&format!("{dir}/config.json"), cfg, producer)
    }

    pub fn save(&self) -> Result<()> {
        self.manifest.save(&self.root.join(MANIFEST))?;
        Ok(())
    }
}
