//! Class separation measured on decision-boundary distances.
//!
//! For every cross-validation iteration the trained boundary is fixed and
//! the signed distance `−f(x)/‖w‖` of every sample is recorded, tagged with
//! whether the sample was in that iteration's training or test part.
//! Pooled distance histograms of the two classes are compared with the
//! Hellinger dissimilarity `H = (1 − Σ √(p·q))^½`, which the Chernoff bound
//! at `s = ½` ties to the error rate through `H < √(1 − Pe)`.

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Dataset, Disease, Label};
use crate::mccv::{self, MccvError, MccvReport, SplitSpec};
use crate::svm::{SvmConfig, SvmError, SvmModel};

/// Histogram resolution used when none is requested.
pub const DEFAULT_BINS: usize = 64;
/// Default trend threshold, in signed-distance units per visit.
pub const DEFAULT_TREND_EPSILON: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeparationError {
    #[error("histogram needs at least one value")]
    EmptyHistogram,
    #[error("value {0} outside histogram range")]
    OutOfRange(f64),
    #[error("bin edges must be finite and strictly increasing, with at least two edges")]
    InvalidEdges,
    #[error("histograms have different bin edges")]
    MismatchedEdges,
    #[error("all pooled {0} distances are equal; cannot bin")]
    DegenerateRange(Membership),
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("trajectory needs at least 2 visits, got {0}")]
    TooFewVisits(usize),
    #[error(transparent)]
    Mccv(#[from] MccvError),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Train,
    Test,
}

impl std::fmt::Display for Membership {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Membership::Train => "train",
            Membership::Test => "test",
        })
    }
}

/// Mean and population std computed on the sorted values, so the result
/// does not depend on the order the values arrived in.
pub fn order_free_mean_std(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    mccv::mean_std(&sorted)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleDistances {
    pub id: String,
    pub label: Label,
    pub disease: Disease,
    pub mean: f64,
    pub std: f64,
    /// Signed distance per iteration.
    #[serde(skip)]
    pub distances: Vec<f64>,
    /// Whether the sample was in the training part, per iteration.
    #[serde(skip)]
    pub in_train: Vec<bool>,
}

/// Per-sample signed-distance statistics over all iterations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceProfile {
    pub train_fraction: f64,
    pub iterations: usize,
    pub samples: Vec<SampleDistances>,
}

impl DistanceProfile {
    /// All distances of `label` samples recorded while in `membership`.
    pub fn pooled(&self, membership: Membership, label: Label) -> Vec<f64> {
        let want_train = membership == Membership::Train;
        self.samples
            .iter()
            .filter(|s| s.label == label)
            .flat_map(|s| {
                s.distances
                    .iter()
                    .zip(&s.in_train)
                    .filter(move |(_, &t)| t == want_train)
                    .map(|(&d, _)| d)
            })
            .collect()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let f = crate::numfmt::fmt_f64;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample_id", "class", "disease", "mean_dist", "std_dist"])
            .expect("in-memory write");
        for s in &self.samples {
            w.write_record([
                s.id.clone(),
                s.label.to_string(),
                s.disease.to_string(),
                f(s.mean),
                f(s.std),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Cross-validation report and distance profile from the same iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationRun {
    pub report: MccvReport,
    pub profile: DistanceProfile,
}

pub fn analyze_split(
    data: &Dataset,
    cfg: &SvmConfig,
    split: &SplitSpec,
) -> Result<SeparationRun, SeparationError> {
    let per_iteration = mccv::run_iterations(data, cfg, split, |ctx| {
        let mut in_train = vec![false; data.len()];
        for &i in &ctx.split.train {
            in_train[i] = true;
        }
        let distances: Result<Vec<f64>, SvmError> = data
            .samples()
            .iter()
            .map(|s| ctx.model.signed_distance(&s.features))
            .collect();
        (mccv::iteration_record(ctx), distances, in_train)
    })?;
    let n = data.len();
    let mut dist_by_sample = vec![Vec::with_capacity(split.iterations); n];
    let mut train_by_sample = vec![Vec::with_capacity(split.iterations); n];
    let mut records = Vec::with_capacity(split.iterations);
    for (record, distances, in_train) in per_iteration {
        let distances = distances.map_err(|source| MccvError::Training {
            iteration: record.iteration,
            source,
        })?;
        for i in 0..n {
            dist_by_sample[i].push(distances[i]);
            train_by_sample[i].push(in_train[i]);
        }
        records.push(record);
    }
    let samples = data
        .samples()
        .iter()
        .zip(dist_by_sample.into_iter().zip(train_by_sample))
        .map(|(s, (distances, in_train))| {
            let (mean, std) = order_free_mean_std(&distances);
            SampleDistances {
                id: s.id.clone(),
                label: s.label,
                disease: s.disease,
                mean,
                std,
                distances,
                in_train,
            }
        })
        .collect();
    Ok(SeparationRun {
        report: mccv::summarize(records, cfg, split)?,
        profile: DistanceProfile {
            train_fraction: split.train_fraction,
            iterations: split.iterations,
            samples,
        },
    })
}

pub fn distance_profile(
    data: &Dataset,
    cfg: &SvmConfig,
    split: &SplitSpec,
) -> Result<DistanceProfile, SeparationError> {
    Ok(analyze_split(data, cfg, split)?.profile)
}

/// Normalized histogram over fixed bin edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub probs: Vec<f64>,
}

fn check_edges(edges: &[f64]) -> Result<(), SeparationError> {
    if edges.len() < 2
        || edges.iter().any(|e| !e.is_finite())
        || edges.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(SeparationError::InvalidEdges);
    }
    Ok(())
}

/// `bins` equal-width bins spanning `[lo, hi]`; the last edge is `hi`
/// exactly.
pub fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>, SeparationError> {
    if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(SeparationError::InvalidEdges);
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    check_edges(&edges)?;
    Ok(edges)
}

/// Bin `i` holds values in `[edges[i], edges[i+1])`; the last bin also
/// holds its right edge.
pub fn build_histogram(values: &[f64], edges: &[f64]) -> Result<Histogram, SeparationError> {
    check_edges(edges)?;
    if values.is_empty() {
        return Err(SeparationError::EmptyHistogram);
    }
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            return Err(SeparationError::OutOfRange(v));
        }
        let bin = (edges.partition_point(|&e| e <= v) - 1).min(bins - 1);
        counts[bin] += 1;
    }
    let total = values.len() as f64;
    Ok(Histogram {
        bin_edges: edges.to_vec(),
        probs: counts.iter().map(|&c| c as f64 / total).collect(),
    })
}

/// Hellinger dissimilarity, clamped to `[0, 1]`.
pub fn hellinger(p: &Histogram, q: &Histogram) -> Result<f64, SeparationError> {
    if p.bin_edges != q.bin_edges || p.probs.len() != q.probs.len() {
        return Err(SeparationError::MismatchedEdges);
    }
    let affinity: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a * b).sqrt())
        .sum();
    Ok((1.0 - affinity).clamp(0.0, 1.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChernoffCheck {
    pub holds: bool,
    pub violated: bool,
    /// `√(1 − Pe) − H`.
    pub margin: f64,
}

/// Checks the strict bound `H < √(1 − Pe)`.
pub fn chernoff_check(h: f64, pe: f64) -> Result<ChernoffCheck, SeparationError> {
    if !(0.0..=1.0).contains(&h) {
        return Err(SeparationError::InvalidProbability(format!("H = {h} outside [0, 1]")));
    }
    if !(0.0..1.0).contains(&pe) {
        return Err(SeparationError::InvalidProbability(format!("Pe = {pe} outside [0, 1)")));
    }
    let margin = (1.0 - pe).sqrt() - h;
    let holds = margin > 0.0;
    Ok(ChernoffCheck {
        holds,
        violated: !holds,
        margin,
    })
}

/// Hellinger and accuracy figures for one membership group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupSeparation {
    pub hellinger: f64,
    pub error_rate: f64,
    /// `√(1 − Pe)`.
    pub root_accuracy: f64,
    /// `H / √(1 − Pe)`.
    pub fraction: f64,
    pub chernoff: ChernoffCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HdPoint {
    pub train_fraction: f64,
    pub train: GroupSeparation,
    pub test: GroupSeparation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HdCurve {
    pub bins: usize,
    pub points: Vec<HdPoint>,
}

impl HdCurve {
    /// Number of Chernoff violations across all points and groups.
    pub fn violations(&self) -> usize {
        self.points
            .iter()
            .flat_map(|p| [p.train.chernoff.holds, p.test.chernoff.holds])
            .filter(|holds| !holds)
            .count()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let f = crate::numfmt::fmt_f64;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "train_fraction",
            "h_train",
            "h_test",
            "root_acc_train",
            "root_acc_test",
            "fraction_train",
            "fraction_test",
            "chernoff_margin_train",
            "chernoff_margin_test",
        ])
        .expect("in-memory write");
        for p in &self.points {
            w.write_record([
                f(p.train_fraction),
                f(p.train.hellinger),
                f(p.test.hellinger),
                f(p.train.root_accuracy),
                f(p.test.root_accuracy),
                f(p.train.fraction),
                f(p.test.fraction),
                f(p.train.chernoff.margin),
                f(p.test.chernoff.margin),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Separation of one membership group: healthy distances form `p`,
/// diseased distances `q`, binned on shared equal-width edges spanning the
/// pooled range.
pub fn group_separation(
    profile: &DistanceProfile,
    membership: Membership,
    mean_accuracy_percent: f64,
    bins: usize,
) -> Result<GroupSeparation, SeparationError> {
    let healthy = profile.pooled(membership, Label::Healthy);
    let diseased = profile.pooled(membership, Label::Diseased);
    let (lo, hi) = healthy
        .iter()
        .chain(&diseased)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo < hi) {
        return Err(SeparationError::DegenerateRange(membership));
    }
    let edges = equal_width_edges(lo, hi, bins)?;
    let p = build_histogram(&healthy, &edges)?;
    let q = build_histogram(&diseased, &edges)?;
    let h = hellinger(&p, &q)?;
    let error_rate = (1.0 - mean_accuracy_percent / 100.0).clamp(0.0, 1.0);
    let chernoff = chernoff_check(h, error_rate)?;
    let root_accuracy = (1.0 - error_rate).sqrt();
    Ok(GroupSeparation {
        hellinger: h,
        error_rate,
        root_accuracy,
        fraction: h / root_accuracy,
        chernoff,
    })
}

pub fn hd_point(run: &SeparationRun, bins: usize) -> Result<HdPoint, SeparationError> {
    Ok(HdPoint {
        train_fraction: run.profile.train_fraction,
        train: group_separation(&run.profile, Membership::Train, run.report.train_acc_mean, bins)?,
        test: group_separation(&run.profile, Membership::Test, run.report.test_acc_mean, bins)?,
    })
}

/// Hellinger-versus-split-ratio curve.
pub fn hd_curve(
    data: &Dataset,
    cfg: &SvmConfig,
    ratios: &[f64],
    iterations: usize,
    base_seed: u64,
    bins: usize,
) -> Result<HdCurve, SeparationError> {
    let points = ratios
        .iter()
        .map(|&ratio| {
            let split = SplitSpec::new(ratio, iterations, base_seed)?;
            hd_point(&analyze_split(data, cfg, &split)?, bins)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HdCurve { bins, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Trend {
    Improving,
    Worsening,
    Stable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub distances: Vec<f64>,
    /// Least-squares slope of distance against visit index.
    pub slope: f64,
    pub trend: Trend,
}

/// Least-squares slope of `values` against `0, 1, 2, …`.
pub fn index_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = values.iter().sum::<f64>() / n;
    let (num, den) = values
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(num, den), (i, &y)| {
            let dx = i as f64 - x_mean;
            (num + dx * (y - y_mean), den + dx * dx)
        });
    num / den
}

/// Classifies a distance series. Distances grow toward the healthy side,
/// so a slope above `epsilon` is improvement wherever the series starts.
pub fn trend_of(distances: &[f64], epsilon: f64) -> Result<Trajectory, SeparationError> {
    if distances.len() < 2 {
        return Err(SeparationError::TooFewVisits(distances.len()));
    }
    let slope = index_slope(distances);
    let trend = if slope > epsilon {
        Trend::Improving
    } else if slope < -epsilon {
        Trend::Worsening
    } else {
        Trend::Stable
    };
    Ok(Trajectory {
        distances: distances.to_vec(),
        slope,
        trend,
    })
}

/// Signed distances of successive visits and their trend.
pub fn monitor_trajectory(
    model: &SvmModel,
    visits: &[Vec<f64>],
    epsilon: f64,
) -> Result<Trajectory, SeparationError> {
    if visits.len() < 2 {
        return Err(SeparationError::TooFewVisits(visits.len()));
    }
    let distances = visits
        .iter()
        .map(|v| model.signed_distance(v))
        .collect::<Result<Vec<_>, _>>()?;
    trend_of(&distances, epsilon)
}
