//! `fafscreen`: the screening pipeline from the command line.
//!
//! Every subcommand is a pure function of its flags and input files;
//! randomized steps take `--seed`, defaulting to
//! [`fafscreen_core::synth::DEFAULT_SEED`]. `--threads` sizes the worker
//! pool without changing any output.
//!
//! Failures print one JSON line `{"error": kind, "message": …}` to stderr
//! and exit with 2 (usage), 3 (data) or 4 (solver did not converge).

pub mod commands;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fafscreen_core::dataset::Disease;
use fafscreen_core::grid::{Eye, GridSpec};
use fafscreen_core::mccv::DEFAULT_ITERATIONS;
use fafscreen_core::separation::{DEFAULT_BINS, DEFAULT_TREND_EPSILON};
use fafscreen_core::svm::{KernelSpec, SvmConfig};
use fafscreen_core::synth::DEFAULT_SEED;

pub use error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "fafscreen", version, about = "Screen FAF images from ETDRS sector statistics")]
pub struct Cli {
    /// Worker threads for parallel steps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the 18 sector features of one image.
    Features(FeaturesArgs),
    /// Compute a feature table for every image in a manifest.
    FeaturizeManifest(FeaturizeManifestArgs),
    /// Train a classifier on a feature table.
    Train(TrainArgs),
    /// Classify feature rows with a saved model.
    Predict(PredictArgs),
    /// Cross-validated accuracy by split ratio, linear versus RBF.
    Mccv(MccvArgs),
    /// Cross-validated accuracy across RBF scale factors.
    SweepSf(SweepSfArgs),
    /// Signed-distance profile, Hellinger curve and Chernoff report.
    Analyze(AnalyzeArgs),
    /// Signed-distance trajectory of successive visits.
    Monitor(MonitorArgs),
    /// Generate a labelled synthetic cohort.
    Synth(SynthArgs),
    /// Run the HTTP screening service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    Linear,
    Rbf,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Fovea x coordinate in pixels.
    #[arg(long, allow_negative_numbers = true)]
    pub cx: f64,
    /// Fovea y coordinate in pixels.
    #[arg(long, allow_negative_numbers = true)]
    pub cy: f64,
    /// Central-field radius.
    #[arg(long)]
    pub r1: f64,
    /// Inner-ring outer radius.
    #[arg(long)]
    pub r2: f64,
    /// Outer-ring outer radius.
    #[arg(long)]
    pub r3: f64,
    /// Eye side: OD or OS.
    #[arg(long)]
    pub laterality: Eye,
    /// Put the nasal side of an OD eye on the image left.
    #[arg(long)]
    pub invert_nasal: bool,
}

impl GridArgs {
    pub fn spec(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.cx, self.cy, self.r1, self.r2, self.r3, self.laterality)
            .map(|g| g.with_inverted_nasal(self.invert_nasal))
            .map_err(|e| CliError::usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct FeaturesArgs {
    /// PGM or PNG image.
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Row id (default: image file stem).
    #[arg(long)]
    pub id: Option<String>,
    /// Disease tag; adds label and disease columns to the row.
    #[arg(long)]
    pub disease: Option<Disease>,
    /// Append the row to this CSV (created with a header if missing)
    /// instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FeaturizeManifestArgs {
    /// Manifest CSV: filename,label,disease,cx,cy,r1,r2,r3,laterality.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding the images (default: the manifest's directory).
    #[arg(long)]
    pub image_dir: Option<PathBuf>,
    /// Output feature table.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Feature table CSV.
    #[arg(long)]
    pub features: PathBuf,
    /// Keep only healthy eyes and this disease.
    #[arg(long)]
    pub only_disease: Option<Disease>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Box constraint.
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    /// Z-score features with training-set statistics.
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub standardize: bool,
    /// Allowed slack on each KKT condition.
    #[arg(long, default_value_t = SvmConfig::default().kkt_tolerance)]
    pub tolerance: f64,
    /// Upper bound on solver pair updates.
    #[arg(long, default_value_t = SvmConfig::default().max_passes)]
    pub max_passes: usize,
}

impl SolverArgs {
    pub fn config(&self, kernel: KernelSpec) -> SvmConfig {
        SvmConfig {
            kernel,
            c: self.c,
            kkt_tolerance: self.tolerance,
            max_passes: self.max_passes,
            standardize: self.standardize,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// Cross-validation iterations per configuration.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    /// Base seed of the split generator.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

fn default_ratios() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = KernelArg::Linear)]
    pub kernel: KernelArg,
    /// RBF scale factor (kernel width).
    #[arg(long)]
    pub sf: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Model JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Feature rows: a feature table, `id` plus the 18 features, or `id`
    /// plus any numeric columns matching the model.
    #[arg(long)]
    pub features: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MccvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Training fractions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = default_ratios())]
    pub ratios: Vec<f64>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, value_enum, default_value_t = KernelChoice::Both)]
    pub kernel: KernelChoice,
    /// Fixed RBF scale factor; without it each ratio uses the best of
    /// `--sf-list`.
    #[arg(long)]
    pub sf: Option<f64>,
    /// Scale factors searched when `--sf` is not given.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 3.0, 4.0, 5.0])]
    pub sf_list: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory for `ratio_table.csv` and `confusion.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepSfArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Scale factors, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0])]
    pub sf_list: Vec<f64>,
    /// Training fraction.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,
    /// RBF scale factor.
    #[arg(long)]
    pub sf: Option<f64>,
    /// Training fractions of the Hellinger curve, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = default_ratios())]
    pub ratios: Vec<f64>,
    /// Training fraction of the per-sample distance profile.
    #[arg(long, default_value_t = 0.8)]
    pub profile_ratio: f64,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Histogram bins for the Hellinger dissimilarity.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory for `distance_profile.csv`, `hd_curve.csv` and
    /// `chernoff.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MonitorArgs {
    /// Model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Feature rows of successive visits, oldest first.
    #[arg(long)]
    pub visits: PathBuf,
    /// Slope threshold per visit for a trend.
    #[arg(long, default_value_t = DEFAULT_TREND_EPSILON)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Generator parameters as JSON; missing fields take their defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Overrides the seed in the parameters.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the images and `manifest.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the cohort's feature table here.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Data directory for sessions (and models unless `--models` is set).
    #[arg(long)]
    pub data: PathBuf,
    /// Model directory.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Built UI assets to serve.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

/// Runs a parsed command line, writing results to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let mut out = Vec::new();
    pool.install(|| commands::dispatch(cli.command, &mut out))?;
    stdout
        .write_all(&out)
        .and_then(|()| stdout.flush())
        .map_err(|e| CliError::data(format!("stdout: {e}")))
}
