//! Read-only registry of trained models loaded from a directory.
//!
//! A model's id is its file name without the `.json` extension. The
//! directory is scanned at startup, on every listing, and when an unknown
//! id is requested, so models dropped in while the service runs are found.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::Serialize;

use fafscreen_core::svm::SvmModel;

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub kernel: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_factor: Option<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    pub standardize: bool,
    pub n_support_vectors: usize,
    pub dim: usize,
    pub class_counts: ClassCounts,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassCounts {
    pub diseased: usize,
    pub healthy: usize,
}

impl ModelInfo {
    fn new(model_id: &str, model: &SvmModel) -> Self {
        let (diseased, healthy) = model.class_counts();
        Self {
            model_id: model_id.to_string(),
            kernel: model.kernel().name(),
            scale_factor: model.kernel().scale_factor(),
            c: model.c(),
            standardize: model.standardizer().is_some(),
            n_support_vectors: model.support_vectors().len(),
            dim: model.dim(),
            class_counts: ClassCounts { diseased, healthy },
        }
    }
}

/// Model ids are plain file stems: no separators, no leading dot.
pub fn valid_model_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

#[derive(Debug, Default)]
pub struct ModelRegistry {
    dir: Option<PathBuf>,
    models: RwLock<BTreeMap<String, Arc<SvmModel>>>,
}

impl ModelRegistry {
    pub fn new(dir: Option<PathBuf>) -> Self {
        let registry = Self {
            dir,
            models: RwLock::default(),
        };
        registry.rescan();
        registry
    }

    /// Registers an in-memory model, e.g. for tests or demos.
    pub fn insert(&self, id: &str, model: SvmModel) {
        self.models
            .write()
            .expect("model lock")
            .insert(id.to_string(), Arc::new(model));
    }

    /// Loads every readable `*.json` model in the directory. Files that do
    /// not parse as models are skipped.
    pub fn rescan(&self) {
        let Some(dir) = &self.dir else { return };
        let Ok(entries) = fs::read_dir(dir) else { return };
        let mut found = Vec::new();
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if !valid_model_id(id) {
                continue;
            }
            if let Some(model) = load(&path) {
                found.push((id.to_string(), model));
            }
        }
        let mut models = self.models.write().expect("model lock");
        for (id, model) in found {
            models.insert(id, Arc::new(model));
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<SvmModel>> {
        if let Some(m) = self.models.read().expect("model lock").get(id) {
            return Some(m.clone());
        }
        if !valid_model_id(id) {
            return None;
        }
        let path = self.dir.as_ref()?.join(format!("{id}.json"));
        let model = Arc::new(load(&path)?);
        self.models
            .write()
            .expect("model lock")
            .insert(id.to_string(), model.clone());
        Some(model)
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.rescan();
        self.models
            .read()
            .expect("model lock")
            .iter()
            .map(|(id, m)| ModelInfo::new(id, m))
            .collect()
    }
}

fn load(path: &Path) -> Option<SvmModel> {
    let bytes = fs::read(path).ok()?;
    SvmModel::from_json_bytes(&bytes).ok()
}
