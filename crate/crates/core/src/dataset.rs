//! Labelled feature samples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatasetError {
    #[error("sample {id}: label {label} inconsistent with disease {disease}")]
    LabelDiseaseMismatch {
        id: String,
        label: Label,
        disease: Disease,
    },
    #[error("sample {id}: expected {expected} features, got {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("sample {0}: non-finite feature")]
    NonFinite(String),
}

/// Class label: diseased is +1, healthy is −1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+1")]
    Diseased,
    #[serde(rename = "-1")]
    Healthy,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Diseased => 1.0,
            Label::Healthy => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Self {
        if v >= 0.0 {
            Label::Diseased
        } else {
            Label::Healthy
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Diseased => "+1",
            Label::Healthy => "-1",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "1" | "+1" => Ok(Label::Diseased),
            "-1" => Ok(Label::Healthy),
            other => Err(format!("label must be +1 or -1, got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Disease {
    /// Stargardt disease.
    Stgd,
    /// Choroidal neovascular membrane.
    Cnvm,
    /// Central serous chorioretinopathy.
    Cscr,
    None,
}

impl Disease {
    pub const DISEASES: [Disease; 3] = [Disease::Stgd, Disease::Cnvm, Disease::Cscr];

    pub fn label(self) -> Label {
        if self == Disease::None {
            Label::Healthy
        } else {
            Label::Diseased
        }
    }
}

impl fmt::Display for Disease {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Disease::Stgd => "STGD",
            Disease::Cnvm => "CNVM",
            Disease::Cscr => "CSCR",
            Disease::None => "NONE",
        })
    }
}

impl FromStr for Disease {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "STGD" => Ok(Disease::Stgd),
            "CNVM" => Ok(Disease::Cnvm),
            "CSCR" => Ok(Disease::Cscr),
            "NONE" | "" => Ok(Disease::None),
            other => Err(format!("unknown disease tag '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Label,
    pub disease: Disease,
}

impl LabeledSample {
    pub fn new(
        id: impl Into<String>,
        features: Vec<f64>,
        label: Label,
        disease: Disease,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        if disease.label() != label {
            return Err(DatasetError::LabelDiseaseMismatch { id, label, disease });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite(id));
        }
        Ok(Self {
            id,
            features,
            label,
            disease,
        })
    }

    /// Sample without a subtype; diseased samples are tagged STGD.
    pub fn with_label(id: impl Into<String>, features: Vec<f64>, label: Label) -> Self {
        let disease = match label {
            Label::Healthy => Disease::None,
            Label::Diseased => Disease::Stgd,
        };
        Self {
            id: id.into(),
            features,
            label,
            disease,
        }
    }
}

/// An ordered collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self, DatasetError> {
        if let Some(first) = samples.first() {
            let dim = first.features.len();
            for s in &samples {
                if s.features.len() != dim {
                    return Err(DatasetError::DimensionMismatch {
                        id: s.id.clone(),
                        expected: dim,
                        found: s.features.len(),
                    });
                }
                if s.features.iter().any(|v| !v.is_finite()) {
                    return Err(DatasetError::NonFinite(s.id.clone()));
                }
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    /// `(n_diseased, n_healthy)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let diseased = self
            .samples
            .iter()
            .filter(|s| s.label == Label::Diseased)
            .count();
        (diseased, self.samples.len() - diseased)
    }

    /// Samples at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Healthy samples plus those tagged with `disease`.
    pub fn restrict_to_disease(&self, disease: Disease) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .filter(|s| s.disease == Disease::None || s.disease == disease)
                .cloned()
                .collect(),
        }
    }
}

impl FromIterator<LabeledSample> for Result<Dataset, DatasetError> {
    fn from_iter<I: IntoIterator<Item = LabeledSample>>(iter: I) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}
