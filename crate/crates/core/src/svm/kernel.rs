use serde::{Deserialize, Serialize};

use super::SvmError;

/// Kernel function. For RBF the scale factor is the Gaussian width σ:
/// `K(x, z) = exp(−‖x − z‖² / (2·σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { scale_factor: f64 },
}

impl KernelSpec {
    pub fn rbf(scale_factor: f64) -> Result<Self, SvmError> {
        let k = KernelSpec::Rbf { scale_factor };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { scale_factor } if scale_factor.is_finite() && scale_factor > 0.0 => {
                Ok(())
            }
            KernelSpec::Rbf { scale_factor } => Err(SvmError::InvalidConfig(format!(
                "RBF scale factor must be positive and finite, got {scale_factor}"
            ))),
        }
    }

    pub fn scale_factor(&self) -> Option<f64> {
        match *self {
            KernelSpec::Linear => None,
            KernelSpec::Rbf { scale_factor } => Some(scale_factor),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64, SvmError> {
        if x.len() != z.len() {
            return Err(SvmError::DimensionMismatch {
                expected: x.len(),
                found: z.len(),
            });
        }
        Ok(self.eval_unchecked(x, z))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { scale_factor } => {
                let d2: f64 = x
                    .iter()
                    .zip(z)
                    .map(|(a, b)| {
                        let d = a - b;
                        d * d
                    })
                    .sum();
                (-d2 / (2.0 * scale_factor * scale_factor)).exp()
            }
        }
    }

    /// Full symmetric Gram matrix, row-major.
    pub(crate) fn gram(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let n = rows.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(&rows[i], &rows[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}
