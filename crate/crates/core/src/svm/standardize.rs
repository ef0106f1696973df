use serde::{Deserialize, Serialize};

use super::SvmError;
use crate::dataset::Dataset;

/// Per-feature z-score parameters fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Training mean and population standard deviation of every feature.
    /// A zero standard deviation is recorded as 1.
    pub fn fit(train: &Dataset) -> Result<Self, SvmError> {
        let dim = train.dim().ok_or(SvmError::EmptyDataset)?;
        let n = train.len() as f64;
        let mut means = vec![0.0; dim];
        for s in train.samples() {
            for (m, v) in means.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![0.0; dim];
        for s in train.samples() {
            for ((acc, v), m) in stds.iter_mut().zip(&s.features).zip(&means) {
                let d = v - m;
                *acc += d * d;
            }
        }
        for sd in &mut stds {
            *sd = (*sd / n).sqrt();
            if *sd == 0.0 {
                *sd = 1.0;
            }
        }
        Ok(Self { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, LabeledSample};

    fn ds(rows: &[&[f64]]) -> Dataset {
        Dataset::new(
            rows.iter()
                .enumerate()
                .map(|(i, r)| LabeledSample::with_label(i.to_string(), r.to_vec(), Label::Healthy))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_sample() {
        let s = Standardizer::fit(&ds(&[&[3.0, -1.5]])).unwrap();
        assert_eq!(s.means, vec![3.0, -1.5]);
        assert_eq!(s.stds, vec![1.0, 1.0]);
    }

    #[test]
    fn two_samples() {
        let s = Standardizer::fit(&ds(&[&[0.0, 5.0], &[2.0, 5.0]])).unwrap();
        assert_eq!(s.means, vec![1.0, 5.0]);
        assert_eq!(s.stds, vec![1.0, 1.0]);
        assert_eq!(s.transform(&[2.0, 7.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            Standardizer::fit(&Dataset::default()),
            Err(SvmError::EmptyDataset)
        ));
    }
}
