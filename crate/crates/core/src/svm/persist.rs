//! Versioned JSON model files.
//!
//! Floats are written with 17 significant digits so a save/load cycle
//! reproduces every value bit for bit.

use serde::{Deserialize, Serialize};

use super::{KernelSpec, Standardizer, SvmError, SvmModel};
use crate::numfmt;

pub const MODEL_FORMAT_VERSION: u32 = 1;

const RBF_FORM: &str = "exp(-||x-z||^2 / (2 * scale_factor^2))";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    kernel: String,
    scale_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rbf_form: Option<String>,
    #[serde(rename = "C")]
    c: f64,
    standardize_means: Option<Vec<f64>>,
    standardize_stds: Option<Vec<f64>>,
    support_vectors: Vec<Vec<f64>>,
    dual_coefs: Vec<f64>,
    bias: f64,
    /// `[n_diseased, n_healthy]`.
    class_counts: [usize; 2],
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

impl SvmModel {
    pub fn to_json_bytes(&self) -> Result<Vec<u8>, SvmError> {
        let (means, stds) = match &self.standardizer {
            Some(s) => (Some(s.means.clone()), Some(s.stds.clone())),
            None => (None, None),
        };
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            kernel: self.kernel.name().to_string(),
            scale_factor: self.kernel.scale_factor(),
            rbf_form: self.kernel.scale_factor().map(|_| RBF_FORM.to_string()),
            c: self.c,
            standardize_means: means,
            standardize_stds: stds,
            support_vectors: self.support_vectors.clone(),
            dual_coefs: self.dual_coefs.clone(),
            bias: self.bias,
            class_counts: [self.class_counts.0, self.class_counts.1],
        };
        numfmt::to_json_vec_pretty(&file).map_err(|e| SvmError::ModelFormat(e.to_string()))
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, SvmError> {
        let schema = |e: serde_json::Error| SvmError::ModelFormat(e.to_string());
        let probe: VersionProbe = serde_json::from_slice(bytes).map_err(schema)?;
        if probe.version != MODEL_FORMAT_VERSION {
            return Err(SvmError::VersionMismatch {
                found: probe.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_slice(bytes).map_err(schema)?;
        let kernel = match (file.kernel.as_str(), file.scale_factor) {
            ("linear", None) => KernelSpec::Linear,
            ("rbf", Some(sf)) => KernelSpec::rbf(sf)?,
            (k, sf) => {
                return Err(SvmError::ModelFormat(format!(
                    "inconsistent kernel '{k}' with scale_factor {sf:?}"
                )))
            }
        };
        let standardizer = match (file.standardize_means, file.standardize_stds) {
            (Some(means), Some(stds)) => Some(Standardizer { means, stds }),
            (None, None) => None,
            _ => {
                return Err(SvmError::ModelFormat(
                    "standardize_means and standardize_stds must both be present or absent".into(),
                ))
            }
        };
        SvmModel::from_parts(
            kernel,
            file.c,
            file.support_vectors,
            file.dual_coefs,
            file.bias,
            standardizer,
            (file.class_counts[0], file.class_counts[1]),
        )
    }
}
