//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use fafscreen_core::dataset::{Dataset, LabeledSample};
use fafscreen_core::grid::compute_features;
use fafscreen_core::image::load_image;
use fafscreen_core::io::{
    read_feature_rows, read_features, read_manifest, read_vectors, write_feature_rows, write_features, IoError,
};
use fafscreen_core::mccv::{
    run_mccv, scale_factor_sweep, AccuracySummary, Gains, MccvReport, RatioRow, SplitSpec, SweepRow,
    RATIO_TABLE_HEADER,
};
use fafscreen_core::numfmt::{fmt_f64, to_json_vec_pretty};
use fafscreen_core::separation::{analyze_split, hd_point, monitor_trajectory, HdCurve, HdPoint, Trend};
use fafscreen_core::svm::{train, KernelSpec, SvmModel};
use fafscreen_core::synth::{featurize, generate_dataset, write_dataset, SynthParams};
use fafscreen_service::ServiceConfig;

use crate::error::CliError;
use crate::{
    AnalyzeArgs, Command, DataArgs, FeaturesArgs, FeaturizeManifestArgs, KernelArg, KernelChoice, MccvArgs,
    MonitorArgs, PredictArgs, ServeArgs, SweepSfArgs, SynthArgs, TrainArgs,
};

pub const RATIO_TABLE_FILE: &str = "ratio_table.csv";
pub const CONFUSION_FILE: &str = "confusion.json";
pub const PROFILE_FILE: &str = "distance_profile.csv";
pub const HD_CURVE_FILE: &str = "hd_curve.csv";
pub const CHERNOFF_FILE: &str = "chernoff.json";

pub fn dispatch(command: Command, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    match command {
        Command::Features(a) => features(a, stdout),
        Command::FeaturizeManifest(a) => featurize_manifest(a, stdout),
        Command::Train(a) => train_model(a, stdout),
        Command::Predict(a) => predict(a, stdout),
        Command::Mccv(a) => mccv(a, stdout),
        Command::SweepSf(a) => sweep_sf(a, stdout),
        Command::Analyze(a) => analyze(a, stdout),
        Command::Monitor(a) => monitor(a, stdout),
        Command::Synth(a) => synth(a, stdout),
        Command::Serve(a) => serve(a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::data(e.to_string()).in_file(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::data(e.to_string()).in_file(parent))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::data(e.to_string()).in_file(path))
}

fn emit(stdout: &mut Vec<u8>, bytes: &[u8]) -> Result<(), CliError> {
    stdout
        .write_all(bytes)
        .and_then(|()| stdout.flush())
        .map_err(|e| CliError::data(format!("stdout: {e}")))
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    Ok(to_json_vec_pretty(value)?)
}

fn load_dataset(args: &DataArgs) -> Result<Dataset, CliError> {
    let data = read_features(&read(&args.features)?).map_err(|e| CliError::from(e).in_file(&args.features))?;
    Ok(match args.only_disease {
        Some(d) => data.restrict_to_disease(d),
        None => data,
    })
}

fn load_model(path: &Path) -> Result<SvmModel, CliError> {
    SvmModel::from_json_bytes(&read(path)?).map_err(|e| CliError::from(e).in_file(path))
}

/// Feature rows in any of the accepted layouts, in file order.
fn load_rows(path: &Path) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let bytes = read(path)?;
    match read_feature_rows(&bytes) {
        Err(IoError::HeaderMismatch { .. }) => read_vectors(&bytes),
        other => other,
    }
    .map_err(|e| CliError::from(e).in_file(path))
}

fn kernel(kind: KernelArg, sf: Option<f64>) -> Result<KernelSpec, CliError> {
    match (kind, sf) {
        (KernelArg::Linear, None) => Ok(KernelSpec::Linear),
        (KernelArg::Linear, Some(_)) => Err(CliError::usage("--sf applies only to --kernel rbf")),
        (KernelArg::Rbf, Some(sf)) => KernelSpec::rbf(sf).map_err(|e| CliError::usage(e.to_string())),
        (KernelArg::Rbf, None) => Err(CliError::usage("--kernel rbf needs --sf")),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn features(args: FeaturesArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    let grid = args.grid.spec()?;
    let image = load_image(&read(&args.image)?, None)
        .map_err(|e| CliError::from(e).in_file(&args.image))?
        .with_laterality(grid.laterality.into());
    let fv = compute_features(&image, &grid).map_err(|e| CliError::from(e).in_file(&args.image))?;
    let id = args.id.unwrap_or_else(|| stem(&args.image));
    let table = match args.disease {
        Some(disease) => {
            let sample = LabeledSample::new(id, fv.0.to_vec(), disease.label(), disease)
                .map_err(|e| CliError::data(e.to_string()))?;
            write_features(&Dataset::new(vec![sample]).map_err(|e| CliError::data(e.to_string()))?)?
        }
        None => write_feature_rows(&[(id, fv)])?,
    };
    let Some(out) = args.out else {
        return emit(stdout, &table);
    };
    let split = table.iter().position(|&b| b == b'\n').expect("header line") + 1;
    let (header, row) = table.split_at(split);
    let existing = match fs::read(&out) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(CliError::data(e.to_string()).in_file(&out)),
    };
    let mut bytes = existing;
    if bytes.is_empty() {
        bytes.extend_from_slice(header);
    } else {
        if !bytes.starts_with(header) {
            return Err(CliError::data("existing header differs from the row's columns").in_file(&out));
        }
        if !bytes.ends_with(b"\n") {
            bytes.push(b'\n');
        }
    }
    bytes.extend_from_slice(row);
    // Reject duplicates before touching the file.
    match args.disease {
        Some(_) => read_features(&bytes).map(|_| ()),
        None => read_feature_rows(&bytes).map(|_| ()),
    }
    .map_err(|e| CliError::from(e).in_file(&out))?;
    write(&out, &bytes)
}

fn featurize_manifest(args: FeaturizeManifestArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    let rows = read_manifest(&read(&args.manifest)?).map_err(|e| CliError::from(e).in_file(&args.manifest))?;
    let dir = args.image_dir.clone().unwrap_or_else(|| {
        args.manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    let samples = rows
        .par_iter()
        .map(|row| {
            let path = dir.join(&row.filename);
            let image = load_image(&read(&path)?, None)
                .map_err(|e| CliError::from(e).in_file(&path))?
                .with_laterality(row.grid.laterality.into());
            let fv = compute_features(&image, &row.grid).map_err(|e| CliError::from(e).in_file(&path))?;
            LabeledSample::new(stem(Path::new(&row.filename)), fv.0.to_vec(), row.label, row.disease)
                .map_err(|e| CliError::data(e.to_string()).in_file(&path))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let data = Dataset::new(samples).map_err(|e| CliError::data(e.to_string()))?;
    write(&args.out, &write_features(&data)?)?;
    emit(stdout, format!("{} rows written to {}\n", data.len(), args.out.display()).as_bytes())
}

#[derive(Serialize)]
struct TrainSummary {
    kernel: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale_factor: Option<f64>,
    #[serde(rename = "C")]
    c: f64,
    standardize: bool,
    n_samples: usize,
    n_support_vectors: usize,
    bias: f64,
    train_accuracy: f64,
}

fn train_model(args: TrainArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let cfg = args.solver.config(kernel(args.kernel, args.sf)?);
    let model = train(&data, &cfg)?;
    let correct = data
        .samples()
        .iter()
        .filter(|s| model.classify(&s.features).map(|l| l == s.label).unwrap_or(false))
        .count();
    write(&args.out, &model.to_json_bytes()?)?;
    let summary = TrainSummary {
        kernel: model.kernel().name(),
        scale_factor: model.kernel().scale_factor(),
        c: model.c(),
        standardize: model.standardizer().is_some(),
        n_samples: data.len(),
        n_support_vectors: model.support_vectors().len(),
        bias: model.bias(),
        train_accuracy: 100.0 * correct as f64 / data.len() as f64,
    };
    emit(stdout, &json(&summary)?)
}

fn predict(args: PredictArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let rows = load_rows(&args.features)?;
    let mut w = csv_writer();
    w.write_record(["id", "label", "decision_value", "signed_distance"])
        .expect("in-memory write");
    for (id, x) in &rows {
        let f = model.decision_value(x).map_err(|e| CliError::from(e).in_file(&args.features))?;
        let d = model.signed_distance(x)?;
        let label = model.classify(x)?;
        w.write_record([id.clone(), label.to_string(), fmt_f64(f), fmt_f64(d)])
            .expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    match args.out {
        Some(path) => write(&path, &bytes),
        None => emit(stdout, &bytes),
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

#[derive(Serialize)]
struct RatioConfusion {
    train_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    linear: Option<MccvReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rbf: Option<MccvReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rbf_sweep: Option<Vec<SweepRow>>,
}

#[derive(Serialize)]
struct ConfusionReport {
    n_samples: usize,
    class_counts: ClassCounts,
    ratios: Vec<RatioConfusion>,
}

#[derive(Serialize)]
struct ClassCounts {
    diseased: usize,
    healthy: usize,
}

fn class_counts(data: &Dataset) -> ClassCounts {
    let (diseased, healthy) = data.class_counts();
    ClassCounts { diseased, healthy }
}

fn mccv(args: MccvArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let want_linear = args.kernel != KernelChoice::Rbf;
    let want_rbf = args.kernel != KernelChoice::Linear;
    if args.sf.is_some() && !want_rbf {
        return Err(CliError::usage("--sf applies only to the rbf kernel"));
    }
    if let Some(sf) = args.sf {
        KernelSpec::rbf(sf).map_err(|e| CliError::usage(e.to_string()))?;
    }
    let mut table = csv_writer();
    table.write_record(RATIO_TABLE_HEADER).expect("in-memory write");
    let mut ratios = Vec::with_capacity(args.ratios.len());
    for &ratio in &args.ratios {
        let split = SplitSpec::new(ratio, args.split.iterations, args.split.seed)?;
        let linear = if want_linear {
            Some(run_mccv(&data, &args.solver.config(KernelSpec::Linear), &split)?)
        } else {
            None
        };
        let (rbf, sweep) = match (want_rbf, args.sf) {
            (false, _) => (None, None),
            (true, Some(sf)) => {
                let cfg = args.solver.config(KernelSpec::rbf(sf)?);
                (Some(run_mccv(&data, &cfg, &split)?), None)
            }
            (true, None) => {
                let base = args.solver.config(KernelSpec::Linear);
                let sweep = scale_factor_sweep(&data, &args.sf_list, &split, &base)?;
                (Some(sweep.best_report().clone()), Some(sweep.rows))
            }
        };
        let linear_acc = linear.as_ref().map(AccuracySummary::from);
        let rbf_acc = rbf.as_ref().map(AccuracySummary::from);
        let row = RatioRow {
            train_fraction: ratio,
            linear: linear_acc,
            scale_factor: rbf.as_ref().and_then(|r| r.kernel.scale_factor()),
            rbf: rbf_acc,
            gains: linear_acc.zip(rbf_acc).map(|(l, r)| Gains::between(&l, &r)),
        };
        table.write_record(row.csv_record()).expect("in-memory write");
        ratios.push(RatioConfusion {
            train_fraction: ratio,
            linear: linear.map(|r| r.summary()),
            rbf: rbf.map(|r| r.summary()),
            rbf_sweep: sweep,
        });
    }
    let table = table.into_inner().expect("in-memory flush");
    let report = ConfusionReport {
        n_samples: data.len(),
        class_counts: class_counts(&data),
        ratios,
    };
    write(&args.out.join(RATIO_TABLE_FILE), &table)?;
    write(&args.out.join(CONFUSION_FILE), &json(&report)?)?;
    emit(stdout, &table)
}

fn sweep_sf(args: SweepSfArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let split = SplitSpec::new(args.ratio, args.split.iterations, args.split.seed)?;
    let sweep = scale_factor_sweep(&data, &args.sf_list, &split, &args.solver.config(KernelSpec::Linear))?;
    let mut w = csv_writer();
    w.write_record(["scale_factor", "train_acc_mean", "train_acc_std", "test_acc_mean", "test_acc_std", "best"])
        .expect("in-memory write");
    for r in &sweep.rows {
        w.write_record([
            fmt_f64(r.scale_factor),
            fmt_f64(r.train_acc_mean),
            fmt_f64(r.train_acc_std),
            fmt_f64(r.test_acc_mean),
            fmt_f64(r.test_acc_std),
            u8::from(r.scale_factor == sweep.best_scale_factor).to_string(),
        ])
        .expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    match args.out {
        Some(path) => write(&path, &bytes),
        None => emit(stdout, &bytes),
    }
}

#[derive(Serialize)]
struct ChernoffReport {
    kernel: KernelSpec,
    #[serde(rename = "C")]
    c: f64,
    iterations: usize,
    base_seed: u64,
    bins: usize,
    n_samples: usize,
    class_counts: ClassCounts,
    /// Points where `H < √(1 − Pe)` fails, counting train and test groups.
    violations: usize,
    points: Vec<HdPoint>,
}

fn analyze(args: AnalyzeArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let cfg = args.solver.config(kernel(args.kernel, args.sf)?);
    if args.bins == 0 {
        return Err(CliError::usage("--bins must be at least 1"));
    }
    let run_at = |ratio: f64| -> Result<_, CliError> {
        let split = SplitSpec::new(ratio, args.split.iterations, args.split.seed)?;
        Ok(analyze_split(&data, &cfg, &split)?)
    };
    let mut profile = None;
    let mut points = Vec::with_capacity(args.ratios.len());
    for &ratio in &args.ratios {
        let run = run_at(ratio)?;
        points.push(hd_point(&run, args.bins)?);
        if ratio == args.profile_ratio && profile.is_none() {
            profile = Some(run.profile);
        }
    }
    let profile = match profile {
        Some(p) => p,
        None => run_at(args.profile_ratio)?.profile,
    };
    let curve = HdCurve {
        bins: args.bins,
        points,
    };
    let report = ChernoffReport {
        kernel: cfg.kernel,
        c: cfg.c,
        iterations: args.split.iterations,
        base_seed: args.split.seed,
        bins: args.bins,
        n_samples: data.len(),
        class_counts: class_counts(&data),
        violations: curve.violations(),
        points: curve.points.clone(),
    };
    let report = json(&report)?;
    write(&args.out.join(PROFILE_FILE), &profile.to_csv())?;
    write(&args.out.join(HD_CURVE_FILE), &curve.to_csv())?;
    write(&args.out.join(CHERNOFF_FILE), &report)?;
    emit(stdout, &report)
}

#[derive(Serialize)]
struct Visit {
    id: String,
    signed_distance: f64,
}

#[derive(Serialize)]
struct MonitorReport {
    visits: Vec<Visit>,
    slope: f64,
    epsilon: f64,
    trend: Trend,
}

fn monitor(args: MonitorArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    if !(args.epsilon.is_finite() && args.epsilon >= 0.0) {
        return Err(CliError::usage("--epsilon must be a non-negative number"));
    }
    let model = load_model(&args.model)?;
    let rows = load_rows(&args.visits)?;
    let vectors: Vec<Vec<f64>> = rows.iter().map(|(_, v)| v.clone()).collect();
    let trajectory =
        monitor_trajectory(&model, &vectors, args.epsilon).map_err(|e| CliError::from(e).in_file(&args.visits))?;
    let report = MonitorReport {
        visits: rows
            .into_iter()
            .zip(&trajectory.distances)
            .map(|((id, _), &signed_distance)| Visit { id, signed_distance })
            .collect(),
        slope: trajectory.slope,
        epsilon: args.epsilon,
        trend: trajectory.trend,
    };
    emit(stdout, &json(&report)?)
}

fn synth(args: SynthArgs, stdout: &mut Vec<u8>) -> Result<(), CliError> {
    let mut params: SynthParams = match &args.params {
        Some(path) => serde_json::from_slice(&read(path)?).map_err(|e| CliError::from(e).in_file(path))?,
        None => SynthParams::default(),
    };
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    let images = generate_dataset(&params)?;
    write_dataset(&args.out, &images)?;
    if let Some(path) = &args.features {
        write(path, &write_features(&featurize(&images)?)?)?;
    }
    emit(
        stdout,
        format!("{} images written to {}\n", images.len(), args.out.display()).as_bytes(),
    )
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = ServiceConfig {
        data_dir: args.data,
        models_dir: args.models,
        static_dir: args.static_dir,
    };
    let addr = std::net::SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::data(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    runtime
        .block_on(fafscreen_service::serve(config, addr))
        .map_err(|e| CliError::data(e.to_string()))
}
