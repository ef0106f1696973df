//! Monte Carlo cross-validation.
//!
//! Each iteration draws an independent stratified train/test split,
//! trains on the training part and scores both parts. Iteration `k` uses
//! the ChaCha8 stream `k` of the generator seeded with the base seed, so
//! the outcome does not depend on scheduling. Iterations run on the
//! current rayon pool and are aggregated in index order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Dataset, Label};
use crate::svm::{self, KernelSpec, SvmConfig, SvmError, SvmModel};

/// Iteration count used when none is requested.
pub const DEFAULT_ITERATIONS: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MccvError {
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("class {label} has {count} samples; a split needs at least 2 per class")]
    ClassTooSmall { label: Label, count: usize },
    #[error("iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: SvmError,
    },
    #[error("confusion matrix: no samples of actual class {0}")]
    MissingClass(Label),
    #[error("{0}")]
    Svm(#[from] SvmError),
}

impl MccvError {
    /// The training error behind this failure, if any.
    pub fn svm_error(&self) -> Option<&SvmError> {
        match self {
            MccvError::Training { source, .. } | MccvError::Svm(source) => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub iterations: usize,
    pub base_seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, iterations: usize, base_seed: u64) -> Result<Self, MccvError> {
        let s = Self {
            train_fraction,
            iterations,
            base_seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MccvError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(MccvError::InvalidSplit(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.iterations == 0 {
            return Err(MccvError::InvalidSplit("iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Training count for a class of `n` samples: `round(fraction·n)`,
/// half away from zero, clamped to `[1, n − 1]`.
pub fn class_train_count(n: usize, fraction: f64) -> usize {
    let k = (fraction * n as f64).round() as usize;
    k.clamp(1, n.saturating_sub(1).max(1))
}

/// Generator for iteration `k`.
pub fn iteration_rng(base_seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(iteration as u64);
    rng
}

/// Index partition of a dataset; both sides keep dataset order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn datasets(&self, data: &Dataset) -> (Dataset, Dataset) {
        (data.subset(&self.train), data.subset(&self.test))
    }
}

fn check_class_sizes(data: &Dataset) -> Result<(), MccvError> {
    let (d, h) = data.class_counts();
    for (label, count) in [(Label::Diseased, d), (Label::Healthy, h)] {
        if count < 2 {
            return Err(MccvError::ClassTooSmall { label, count });
        }
    }
    Ok(())
}

/// Draws a stratified split: per class, a uniformly random subset of
/// [`class_train_count`] samples goes to training.
pub fn stratified_indices(
    data: &Dataset,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Split, MccvError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(MccvError::InvalidSplit(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    check_class_sizes(data)?;
    let mut in_train = vec![false; data.len()];
    for label in [Label::Diseased, Label::Healthy] {
        let mut members: Vec<usize> = data
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        let k = class_train_count(members.len(), fraction);
        members.shuffle(rng);
        for &i in &members[..k] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| in_train[i]);
    Ok(Split { train, test })
}

pub fn stratified_split(
    data: &Dataset,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, Dataset), MccvError> {
    Ok(stratified_indices(data, fraction, rng)?.datasets(data))
}

/// Counts of (actual, predicted) outcomes; diseased is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub true_diseased: usize,
    pub missed_diseased: usize,
    pub false_diseased: usize,
    pub true_healthy: usize,
}

impl ConfusionCounts {
    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Diseased, Label::Diseased) => self.true_diseased += 1,
            (Label::Diseased, Label::Healthy) => self.missed_diseased += 1,
            (Label::Healthy, Label::Diseased) => self.false_diseased += 1,
            (Label::Healthy, Label::Healthy) => self.true_healthy += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_diseased + self.missed_diseased + self.false_diseased + self.true_healthy
    }

    pub fn accuracy_percent(&self) -> f64 {
        100.0 * (self.true_diseased + self.true_healthy) as f64 / self.total() as f64
    }

    pub fn normalized(&self) -> Result<ConfusionMatrix, MccvError> {
        let diseased = self.true_diseased + self.missed_diseased;
        let healthy = self.false_diseased + self.true_healthy;
        if diseased == 0 {
            return Err(MccvError::MissingClass(Label::Diseased));
        }
        if healthy == 0 {
            return Err(MccvError::MissingClass(Label::Healthy));
        }
        let pct = |num: usize, den: usize| 100.0 * num as f64 / den as f64;
        let (dd, hh) = (pct(self.true_diseased, diseased), pct(self.true_healthy, healthy));
        // complements keep each column summing to exactly 100
        Ok(ConfusionMatrix {
            cells: [[dd, 100.0 - hh], [100.0 - dd, hh]],
        })
    }
}

/// Column-normalized percentages: `cells[predicted][actual]`, with index 0
/// diseased and 1 healthy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub cells: [[f64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn column_sums(&self) -> [f64; 2] {
        [
            self.cells[0][0] + self.cells[1][0],
            self.cells[0][1] + self.cells[1][1],
        ]
    }
}

pub fn confusion_from_predictions(pairs: &[(Label, Label)]) -> Result<ConfusionMatrix, MccvError> {
    let mut counts = ConfusionCounts::default();
    for &(actual, predicted) in pairs {
        counts.record(actual, predicted);
    }
    counts.normalized()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub test_confusion: ConfusionCounts,
    pub n_support_vectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MccvReport {
    pub train_fraction: f64,
    pub iterations: usize,
    pub base_seed: u64,
    pub kernel: KernelSpec,
    #[serde(rename = "C")]
    pub c: f64,
    pub train_acc_mean: f64,
    pub train_acc_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub confusion_mean: ConfusionMatrix,
    pub confusion_std: [[f64; 2]; 2],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<IterationRecord>,
}

impl MccvReport {
    /// Same report without the per-iteration records.
    pub fn summary(&self) -> MccvReport {
        MccvReport {
            records: Vec::new(),
            ..self.clone()
        }
    }
}

/// Mean and population standard deviation, summed in slice order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// What an iteration sees: its index, split and trained model.
pub struct IterationContext<'a> {
    pub iteration: usize,
    pub data: &'a Dataset,
    pub split: &'a Split,
    pub model: &'a SvmModel,
}

/// Runs `split.iterations` independent train/evaluate rounds, mapping each
/// through `visit`, and returns the results in iteration order. On failure
/// the error of the lowest failing iteration is reported.
pub fn run_iterations<T, F>(
    data: &Dataset,
    cfg: &SvmConfig,
    split: &SplitSpec,
    visit: F,
) -> Result<Vec<T>, MccvError>
where
    T: Send,
    F: Fn(&IterationContext<'_>) -> T + Sync,
{
    split.validate()?;
    cfg.validate()?;
    check_class_sizes(data)?;
    let results: Vec<Result<T, MccvError>> = (0..split.iterations)
        .into_par_iter()
        .map(|iteration| {
            let mut rng = iteration_rng(split.base_seed, iteration);
            let parts = stratified_indices(data, split.train_fraction, &mut rng)?;
            let train = data.subset(&parts.train);
            let model = svm::train(&train, cfg)
                .map_err(|source| MccvError::Training { iteration, source })?;
            Ok(visit(&IterationContext {
                iteration,
                data,
                split: &parts,
                model: &model,
            }))
        })
        .collect();
    results.into_iter().collect()
}

fn score(model: &SvmModel, data: &Dataset, indices: &[usize]) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for &i in indices {
        let s = &data.samples()[i];
        // dimensions were checked at training time
        let predicted = model.classify(&s.features).expect("feature dimension");
        counts.record(s.label, predicted);
    }
    counts
}

/// Scores one iteration.
pub fn iteration_record(ctx: &IterationContext<'_>) -> IterationRecord {
    let train = score(ctx.model, ctx.data, &ctx.split.train);
    let test = score(ctx.model, ctx.data, &ctx.split.test);
    IterationRecord {
        iteration: ctx.iteration,
        train_accuracy: train.accuracy_percent(),
        test_accuracy: test.accuracy_percent(),
        test_confusion: test,
        n_support_vectors: ctx.model.support_vectors().len(),
    }
}

/// Aggregates iteration records into a report.
pub fn summarize(
    records: Vec<IterationRecord>,
    cfg: &SvmConfig,
    split: &SplitSpec,
) -> Result<MccvReport, MccvError> {
    let train: Vec<f64> = records.iter().map(|r| r.train_accuracy).collect();
    let test: Vec<f64> = records.iter().map(|r| r.test_accuracy).collect();
    let (train_acc_mean, train_acc_std) = mean_std(&train);
    let (test_acc_mean, test_acc_std) = mean_std(&test);
    let matrices = records
        .iter()
        .map(|r| r.test_confusion.normalized())
        .collect::<Result<Vec<_>, _>>()?;
    let mut confusion_mean = [[0.0; 2]; 2];
    let mut confusion_std = [[0.0; 2]; 2];
    for (p, (mean_row, std_row)) in confusion_mean.iter_mut().zip(&mut confusion_std).enumerate() {
        for (a, (m, s)) in mean_row.iter_mut().zip(std_row.iter_mut()).enumerate() {
            let cell: Vec<f64> = matrices.iter().map(|mat| mat.cells[p][a]).collect();
            (*m, *s) = mean_std(&cell);
        }
    }
    Ok(MccvReport {
        train_fraction: split.train_fraction,
        iterations: split.iterations,
        base_seed: split.base_seed,
        kernel: cfg.kernel,
        c: cfg.c,
        train_acc_mean,
        train_acc_std,
        test_acc_mean,
        test_acc_std,
        confusion_mean: ConfusionMatrix {
            cells: confusion_mean,
        },
        confusion_std,
        records,
    })
}

pub fn run_mccv(data: &Dataset, cfg: &SvmConfig, split: &SplitSpec) -> Result<MccvReport, MccvError> {
    let records = run_iterations(data, cfg, split, iteration_record)?;
    summarize(records, cfg, split)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scale_factor: f64,
    pub train_acc_mean: f64,
    pub train_acc_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub train_fraction: f64,
    pub rows: Vec<SweepRow>,
    /// Scale factor with the highest mean test accuracy; ties go to the
    /// smallest.
    pub best_scale_factor: f64,
    #[serde(skip)]
    pub reports: Vec<MccvReport>,
}

impl SweepResult {
    pub fn best_report(&self) -> &MccvReport {
        let i = self
            .rows
            .iter()
            .position(|r| r.scale_factor == self.best_scale_factor)
            .expect("best row present");
        &self.reports[i]
    }
}

/// RBF cross-validation at each scale factor. C, tolerance and
/// standardization come from `base`; its kernel is replaced.
pub fn scale_factor_sweep(
    data: &Dataset,
    sf_values: &[f64],
    split: &SplitSpec,
    base: &SvmConfig,
) -> Result<SweepResult, MccvError> {
    if sf_values.is_empty() {
        return Err(MccvError::InvalidSplit("scale factor list is empty".into()));
    }
    let mut rows = Vec::with_capacity(sf_values.len());
    let mut reports = Vec::with_capacity(sf_values.len());
    for &sf in sf_values {
        let cfg = SvmConfig {
            kernel: KernelSpec::rbf(sf)?,
            ..base.clone()
        };
        let report = run_mccv(data, &cfg, split)?;
        rows.push(SweepRow {
            scale_factor: sf,
            train_acc_mean: report.train_acc_mean,
            train_acc_std: report.train_acc_std,
            test_acc_mean: report.test_acc_mean,
            test_acc_std: report.test_acc_std,
        });
        reports.push(report);
    }
    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.test_acc_mean > best.test_acc_mean
            || (r.test_acc_mean == best.test_acc_mean && r.scale_factor < best.scale_factor)
        {
            best = r;
        }
    }
    Ok(SweepResult {
        train_fraction: split.train_fraction,
        best_scale_factor: best.scale_factor,
        rows,
        reports,
    })
}

/// Accuracy mean/std pair in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracySummary {
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

impl From<&MccvReport> for AccuracySummary {
    fn from(r: &MccvReport) -> Self {
        Self {
            train_mean: r.train_acc_mean,
            train_std: r.train_acc_std,
            test_mean: r.test_acc_mean,
            test_std: r.test_acc_std,
        }
    }
}

/// Relative gains of the RBF classifier over the linear one, in percent:
/// mean gains `(rbf − linear)/linear`, spread gains `(linear − rbf)/linear`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gains {
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

impl Gains {
    pub fn between(linear: &AccuracySummary, rbf: &AccuracySummary) -> Self {
        let rel = |num: f64, den: f64| 100.0 * num / den;
        Self {
            train_mean: rel(rbf.train_mean - linear.train_mean, linear.train_mean),
            train_std: rel(linear.train_std - rbf.train_std, linear.train_std),
            test_mean: rel(rbf.test_mean - linear.test_mean, linear.test_mean),
            test_std: rel(linear.test_std - rbf.test_std, linear.test_std),
        }
    }
}

/// One row of the split-ratio comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub train_fraction: f64,
    pub linear: Option<AccuracySummary>,
    pub scale_factor: Option<f64>,
    pub rbf: Option<AccuracySummary>,
    pub gains: Option<Gains>,
}

pub const RATIO_TABLE_HEADER: [&str; 15] = [
    "split",
    "linear_train_mean",
    "linear_train_std",
    "linear_test_mean",
    "linear_test_std",
    "sf",
    "rbf_train_mean",
    "rbf_train_std",
    "rbf_test_mean",
    "rbf_test_std",
    "gain_train_mean",
    "gain_train_std",
    "gain_test_mean",
    "gain_test_std",
    "train_fraction",
];

impl RatioRow {
    /// Split label in `train:test` percent form, e.g. `80:20`.
    pub fn split_label(&self) -> String {
        let train = (self.train_fraction * 100.0).round() as i64;
        format!("{}:{}", train, 100 - train)
    }

    pub fn csv_record(&self) -> Vec<String> {
        let f = crate::numfmt::fmt_f64;
        let acc = |a: &Option<AccuracySummary>| -> Vec<String> {
            match a {
                Some(a) => vec![f(a.train_mean), f(a.train_std), f(a.test_mean), f(a.test_std)],
                None => vec![String::new(); 4],
            }
        };
        let mut rec = vec![self.split_label()];
        rec.extend(acc(&self.linear));
        rec.push(self.scale_factor.map(f).unwrap_or_default());
        rec.extend(acc(&self.rbf));
        match &self.gains {
            Some(g) => rec.extend([f(g.train_mean), f(g.train_std), f(g.test_mean), f(g.test_std)]),
            None => rec.extend(vec![String::new(); 4]),
        }
        rec.push(f(self.train_fraction));
        rec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;

    fn labelled(n_healthy: usize, n_diseased: usize) -> Dataset {
        let mut v = Vec::new();
        for i in 0..n_healthy {
            v.push(LabeledSample::with_label(format!("h{i}"), vec![-1.0 - i as f64 * 0.01], Label::Healthy));
        }
        for i in 0..n_diseased {
            v.push(LabeledSample::with_label(format!("d{i}"), vec![1.0 + i as f64 * 0.01], Label::Diseased));
        }
        Dataset::new(v).unwrap()
    }

    #[test]
    fn clamp_round_counts() {
        assert_eq!(class_train_count(61, 0.8), 49);
        assert_eq!(class_train_count(79, 0.8), 63);
        assert_eq!(class_train_count(4, 0.5), 2);
        assert_eq!(class_train_count(10, 0.05), 1);
        assert_eq!(class_train_count(10, 0.99), 9);
        // half away from zero
        assert_eq!(class_train_count(5, 0.5), 3);
        assert_eq!(class_train_count(3, 0.5), 2);
    }

    #[test]
    fn paper_cohort_split_sizes() {
        let data = labelled(61, 79);
        let mut rng = iteration_rng(7, 0);
        let (train, test) = stratified_split(&data, 0.8, &mut rng).unwrap();
        assert_eq!(train.class_counts(), (63, 49));
        assert_eq!(test.class_counts(), (16, 12));
    }

    #[test]
    fn even_split() {
        let data = labelled(4, 4);
        let (train, test) = stratified_split(&data, 0.5, &mut iteration_rng(1, 3)).unwrap();
        assert_eq!(train.class_counts(), (2, 2));
        assert_eq!(test.class_counts(), (2, 2));
    }

    #[test]
    fn tiny_class_rejected() {
        let data = labelled(1, 5);
        assert_eq!(
            stratified_split(&data, 0.5, &mut iteration_rng(1, 0)).unwrap_err(),
            MccvError::ClassTooSmall {
                label: Label::Healthy,
                count: 1
            }
        );
    }

    #[test]
    fn confusion_examples() {
        use Label::*;
        let all_right = confusion_from_predictions(&[(Diseased, Diseased), (Healthy, Healthy)]).unwrap();
        assert_eq!(all_right.cells, [[100.0, 0.0], [0.0, 100.0]]);

        let missed = confusion_from_predictions(&[(Diseased, Healthy), (Healthy, Healthy)]).unwrap();
        assert_eq!([missed.cells[0][0], missed.cells[1][0]], [0.0, 100.0]);

        let mut pairs = vec![(Diseased, Diseased); 9];
        pairs.push((Diseased, Healthy));
        pairs.extend(vec![(Healthy, Healthy); 8]);
        pairs.extend(vec![(Healthy, Diseased); 2]);
        let m = confusion_from_predictions(&pairs).unwrap();
        assert_eq!(m.cells, [[90.0, 20.0], [10.0, 80.0]]);

        assert_eq!(
            confusion_from_predictions(&[(Healthy, Healthy)]),
            Err(MccvError::MissingClass(Diseased))
        );
    }

    #[test]
    fn separable_single_iteration() {
        let data = labelled(6, 6);
        let split = SplitSpec::new(0.5, 1, 11).unwrap();
        let report = run_mccv(&data, &SvmConfig::linear(100.0), &split).unwrap();
        assert_eq!(report.train_acc_mean, 100.0);
        assert_eq!(report.train_acc_std, 0.0);
        assert_eq!(report.test_acc_std, 0.0);
        assert_eq!(report.records.len(), 1);
    }

    #[test]
    fn split_spec_validation() {
        assert!(SplitSpec::new(0.0, 1, 0).is_err());
        assert!(SplitSpec::new(1.0, 1, 0).is_err());
        assert!(SplitSpec::new(0.5, 0, 0).is_err());
    }

    #[test]
    fn sweep_single_and_ties() {
        // perfectly separable: every scale factor reaches 100% test accuracy
        let data = labelled(6, 6);
        let split = SplitSpec::new(0.5, 3, 5).unwrap();
        let cfg = SvmConfig::linear(10.0);
        let one = scale_factor_sweep(&data, &[2.0], &split, &cfg).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert_eq!(one.best_scale_factor, 2.0);
        let tie = scale_factor_sweep(&data, &[3.0, 1.5], &split, &cfg).unwrap();
        assert_eq!(tie.rows[0].test_acc_mean, tie.rows[1].test_acc_mean);
        assert_eq!(tie.best_scale_factor, 1.5);
        assert!(scale_factor_sweep(&data, &[], &split, &cfg).is_err());
    }

    #[test]
    fn gains_follow_header_formula() {
        let lin = AccuracySummary { train_mean: 80.0, train_std: 4.0, test_mean: 75.0, test_std: 5.0 };
        let rbf = AccuracySummary { train_mean: 88.0, train_std: 3.0, test_mean: 78.0, test_std: 6.0 };
        let g = Gains::between(&lin, &rbf);
        assert!((g.train_mean - 10.0).abs() < 1e-12);
        assert!((g.train_std - 25.0).abs() < 1e-12);
        assert!((g.test_mean - 4.0).abs() < 1e-12);
        assert!((g.test_std + 20.0).abs() < 1e-12);
    }

    #[test]
    fn split_label() {
        let row = RatioRow { train_fraction: 0.8, linear: None, scale_factor: None, rbf: None, gains: None };
        assert_eq!(row.split_label(), "80:20");
        assert_eq!(row.csv_record().len(), RATIO_TABLE_HEADER.len());
    }
}
