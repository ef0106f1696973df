//! Soft-margin support vector classification over the dual problem.
//!
//! Training solves
//!
//! ```text
//! max_α  Σᵢ αᵢ − ½ Σᵢ Σⱼ αᵢ αⱼ yᵢ yⱼ K(xᵢ, xⱼ)   s.t.  Σᵢ αᵢ yᵢ = 0,  0 ≤ αᵢ ≤ C
//! ```
//!
//! with SMO, and returns a model holding only the support vectors
//! (`αᵢ > 0`) with coefficients `αᵢ yᵢ`. The decision function is
//! `f(x) = Σᵢ αᵢ yᵢ K(xᵢ, x) + b`; positive values lean diseased.

mod kernel;
mod persist;
mod smo;
mod standardize;

use thiserror::Error;

pub use kernel::KernelSpec;
pub use persist::MODEL_FORMAT_VERSION;
pub use standardize::Standardizer;

use crate::dataset::{Dataset, Label};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training data must contain both classes (diseased: {diseased}, healthy: {healthy})")]
    SingleClass { diseased: usize, healthy: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("solver did not satisfy KKT conditions after {iterations} iterations (max violation {max_violation:e})")]
    NotConverged {
        iterations: usize,
        max_violation: f64,
        model: Box<SvmModel>,
    },
    #[error("model has zero weight norm; no decision boundary")]
    DegenerateModel,
    #[error("model format: {0}")]
    ModelFormat(String),
    #[error("unsupported model version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    /// Box constraint C.
    pub c: f64,
    /// Allowed slack on each KKT condition `yᵢ f(xᵢ) ⋚ 1`.
    pub kkt_tolerance: f64,
    /// Upper bound on SMO pair updates.
    pub max_passes: usize,
    pub standardize: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Linear,
            c: 1.0,
            kkt_tolerance: 1e-3,
            max_passes: 1_000_000,
            standardize: true,
        }
    }
}

impl SvmConfig {
    pub fn linear(c: f64) -> Self {
        Self {
            kernel: KernelSpec::Linear,
            c,
            ..Self::default()
        }
    }

    pub fn rbf(scale_factor: f64, c: f64) -> Self {
        Self {
            kernel: KernelSpec::Rbf { scale_factor },
            c,
            ..Self::default()
        }
    }

    pub fn with_standardize(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.kkt_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        self.kernel.validate()?;
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SvmError::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !(self.kkt_tolerance.is_finite() && self.kkt_tolerance > 0.0) {
            return Err(SvmError::InvalidConfig(format!(
                "kkt_tolerance must be positive, got {}",
                self.kkt_tolerance
            )));
        }
        if self.max_passes == 0 {
            return Err(SvmError::InvalidConfig("max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// A trained classifier. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: KernelSpec,
    c: f64,
    support_vectors: Vec<Vec<f64>>,
    dual_coefs: Vec<f64>,
    bias: f64,
    standardizer: Option<Standardizer>,
    /// `(n_diseased, n_healthy)` of the training set.
    class_counts: (usize, usize),
    weight_norm: f64,
}

impl SvmModel {
    /// Assembles a model from its parts, checking structural invariants.
    pub fn from_parts(
        kernel: KernelSpec,
        c: f64,
        support_vectors: Vec<Vec<f64>>,
        dual_coefs: Vec<f64>,
        bias: f64,
        standardizer: Option<Standardizer>,
        class_counts: (usize, usize),
    ) -> Result<Self, SvmError> {
        kernel.validate()?;
        let bad = |m: &str| Err(SvmError::ModelFormat(m.to_string()));
        if !(c.is_finite() && c > 0.0) {
            return bad("C must be positive");
        }
        if support_vectors.is_empty() || support_vectors.len() != dual_coefs.len() {
            return bad("support_vectors and dual_coefs must have equal non-zero length");
        }
        let dim = support_vectors[0].len();
        if dim == 0 || support_vectors.iter().any(|sv| sv.len() != dim) {
            return bad("support vectors must share a positive dimension");
        }
        let finite = support_vectors.iter().flatten().all(|v| v.is_finite())
            && dual_coefs.iter().all(|v| v.is_finite())
            && bias.is_finite();
        if !finite {
            return bad("non-finite value");
        }
        if dual_coefs.iter().any(|a| a.abs() > c) {
            return bad("|dual coefficient| exceeds C");
        }
        if let Some(s) = &standardizer {
            if s.means.len() != dim || s.stds.len() != dim {
                return bad("standardization length differs from feature dimension");
            }
            if s.means.iter().chain(&s.stds).any(|v| !v.is_finite())
                || s.stds.iter().any(|&v| v <= 0.0)
            {
                return bad("standardization parameters must be finite with positive stds");
            }
        }
        let mut model = Self {
            kernel,
            c,
            support_vectors,
            dual_coefs,
            bias,
            standardizer,
            class_counts,
            weight_norm: 0.0,
        };
        model.weight_norm = model.compute_weight_norm();
        Ok(model)
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    /// `αᵢyᵢ` per support vector.
    pub fn dual_coefs(&self) -> &[f64] {
        &self.dual_coefs
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        self.class_counts
    }

    pub fn dim(&self) -> usize {
        self.support_vectors[0].len()
    }

    fn compute_weight_norm(&self) -> f64 {
        let n = self.support_vectors.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.dual_coefs[i]
                    * self.dual_coefs[j]
                    * self
                        .kernel
                        .eval_unchecked(&self.support_vectors[i], &self.support_vectors[j]);
            }
        }
        acc.max(0.0).sqrt()
    }

    /// Dual objective `Σαᵢ − ½‖w‖²`.
    pub fn dual_objective(&self) -> f64 {
        let sum_alpha: f64 = self.dual_coefs.iter().map(|a| a.abs()).sum();
        sum_alpha - 0.5 * self.weight_norm * self.weight_norm
    }

    /// Explicit weight vector, linear kernel only (in standardized space
    /// when the model standardizes).
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != KernelSpec::Linear {
            return None;
        }
        let mut w = vec![0.0; self.dim()];
        for (sv, a) in self.support_vectors.iter().zip(&self.dual_coefs) {
            for (wk, v) in w.iter_mut().zip(sv) {
                *wk += a * v;
            }
        }
        Some(w)
    }

    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(match &self.standardizer {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        })
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64, SvmError> {
        let x = self.prepare(x)?;
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, a)| a * self.kernel.eval_unchecked(sv, &x))
            .sum();
        Ok(s + self.bias)
    }

    /// Sign of the decision value; an exact zero is classified diseased.
    pub fn classify(&self, x: &[f64]) -> Result<Label, SvmError> {
        Ok(Label::from_sign(self.decision_value(x)?))
    }

    /// `‖w‖` in the kernel feature space.
    pub fn rkhs_weight_norm(&self) -> Result<f64, SvmError> {
        if self.weight_norm > 0.0 && self.weight_norm.is_finite() {
            Ok(self.weight_norm)
        } else {
            Err(SvmError::DegenerateModel)
        }
    }

    /// `−f(x)/‖w‖`: positive on the healthy side, negative on the diseased side.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64, SvmError> {
        let norm = self.rkhs_weight_norm()?;
        Ok(-self.decision_value(x)? / norm)
    }
}

/// A trained model together with the full multiplier vector.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: SvmModel,
    /// `αᵢ` for every training sample, in dataset order.
    pub alphas: Vec<f64>,
    pub iterations: usize,
}

/// KKT audit of a multiplier vector against its training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktAudit {
    /// Largest violation of the margin conditions.
    pub max_violation: f64,
    /// `|Σ αᵢ yᵢ|`.
    pub equality_residual: f64,
    /// Whether every `αᵢ` lies in `[0, C]`.
    pub box_feasible: bool,
}

impl KktAudit {
    pub fn passes(&self, tol: f64) -> bool {
        self.box_feasible && self.max_violation <= tol && self.equality_residual <= 10.0 * tol
    }
}

/// Recomputes `yᵢ f(xᵢ)` from scratch and measures the worst violation of
/// `αᵢ = 0 ⇒ yf ≥ 1`, `αᵢ = C ⇒ yf ≤ 1`, `0 < αᵢ < C ⇒ yf = 1`.
pub fn kkt_audit(training: &Training, data: &Dataset) -> KktAudit {
    let model = &training.model;
    let c = model.c;
    let mut max_violation: f64 = 0.0;
    let mut eq = 0.0;
    let mut box_feasible = true;
    for (s, &a) in data.samples().iter().zip(&training.alphas) {
        let y = s.label.sign();
        eq += a * y;
        box_feasible &= (0.0..=c).contains(&a);
        let margin = y * model.decision_value(&s.features).unwrap_or(f64::NAN);
        let v = if a == 0.0 {
            1.0 - margin
        } else if a == c {
            margin - 1.0
        } else {
            (margin - 1.0).abs()
        };
        max_violation = if v.is_nan() { f64::INFINITY } else { max_violation.max(v) };
    }
    KktAudit {
        max_violation,
        equality_residual: f64::abs(eq),
        box_feasible,
    }
}

/// Trains a classifier. The returned model satisfies the KKT conditions
/// within `cfg.kkt_tolerance`; otherwise [`SvmError::NotConverged`] carries
/// the best model found.
pub fn train(data: &Dataset, cfg: &SvmConfig) -> Result<SvmModel, SvmError> {
    train_detailed(data, cfg).map(|t| t.model)
}

pub fn train_detailed(data: &Dataset, cfg: &SvmConfig) -> Result<Training, SvmError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(SvmError::EmptyDataset);
    }
    let (diseased, healthy) = data.class_counts();
    if diseased == 0 || healthy == 0 {
        return Err(SvmError::SingleClass { diseased, healthy });
    }
    if data
        .samples()
        .iter()
        .any(|s| s.features.iter().any(|v| !v.is_finite()))
    {
        return Err(SvmError::NonFinite);
    }
    let standardizer = if cfg.standardize {
        Some(Standardizer::fit(data)?)
    } else {
        None
    };
    let rows: Vec<Vec<f64>> = data
        .samples()
        .iter()
        .map(|s| match &standardizer {
            Some(st) => st.transform(&s.features),
            None => s.features.clone(),
        })
        .collect();
    let y: Vec<f64> = data.samples().iter().map(|s| s.label.sign()).collect();
    let gram = cfg.kernel.gram(&rows);

    // a pair gap below tol keeps every margin condition within tol for any
    // bias in the feasible interval; half of it absorbs round-off
    let problem = smo::SmoProblem {
        gram: &gram,
        y: &y,
        c: cfg.c,
        eps: cfg.kkt_tolerance / 2.0,
        max_iterations: cfg.max_passes,
    };
    let out = problem.solve();

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for ((row, &a), &yi) in rows.iter().zip(&out.alphas).zip(&y) {
        if a > 0.0 {
            support_vectors.push(row.clone());
            dual_coefs.push(a * yi);
        }
    }
    if support_vectors.is_empty() {
        // unreachable for two-class data: the first update moves a pair off zero
        return Err(SvmError::DegenerateModel);
    }
    let model = SvmModel::from_parts(
        cfg.kernel,
        cfg.c,
        support_vectors,
        dual_coefs,
        out.bias,
        standardizer,
        (diseased, healthy),
    )?;
    let training = Training {
        model,
        alphas: out.alphas,
        iterations: out.iterations,
    };
    let audit = kkt_audit(&training, data);
    if !out.converged || !audit.passes(cfg.kkt_tolerance) {
        return Err(SvmError::NotConverged {
            iterations: out.iterations,
            max_violation: audit.max_violation,
            model: Box::new(training.model),
        });
    }
    Ok(training)
}
