//! Runs the full pipeline on a generated cohort and prints the headline
//! figures: scale-factor sweep, accuracy by split ratio, and Hellinger
//! separation for the full and the STGD-only datasets.
//!
//! Usage: `synthetic_benchmark [iterations] [params.json]`

use std::time::Instant;

use fafscreen_core::dataset::Disease;
use fafscreen_core::mccv::{run_mccv, scale_factor_sweep, SplitSpec};
use fafscreen_core::separation::{hd_curve, DEFAULT_BINS};
use fafscreen_core::svm::SvmConfig;
use fafscreen_core::synth::{featurize, generate_dataset, SynthParams, BENCHMARK_C, DEFAULT_SEED};

const RATIOS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const SCALE_FACTORS: [f64; 5] = [1.0, 2.0, 2.75, 4.0, 5.0];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let iterations: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let params: SynthParams = match args.get(2) {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => SynthParams::default(),
    };
    let start = Instant::now();
    let data = featurize(&generate_dataset(&params)?)?;
    println!("generated {} images in {:.1?}", data.len(), start.elapsed());

    let split = SplitSpec::new(0.8, iterations, DEFAULT_SEED)?;
    let sfs: Vec<f64> = match std::env::var("SCALE_FACTORS") {
        Ok(list) => list.split(',').map(|v| v.parse()).collect::<Result<_, _>>()?,
        Err(_) => SCALE_FACTORS.to_vec(),
    };
    let c: f64 = std::env::var("C").map(|v| v.parse()).unwrap_or(Ok(BENCHMARK_C))?;
    let sweep = scale_factor_sweep(&data, &sfs, &split, &SvmConfig::rbf(1.0, c))?;
    for r in &sweep.rows {
        println!(
            "sf {:>5}: train {:6.2} ({:5.2})  test {:6.2} ({:5.2})",
            r.scale_factor, r.train_acc_mean, r.train_acc_std, r.test_acc_mean, r.test_acc_std
        );
    }
    let hd_sf: f64 = match std::env::var("HD_SF") {
        Ok(v) => v.parse()?,
        Err(_) => sweep.best_scale_factor,
    };
    let cfg = SvmConfig::rbf(hd_sf, c);
    println!("best sf {}", sweep.best_scale_factor);

    let linear = run_mccv(&data, &SvmConfig::linear(c), &split)?;
    println!("linear 80:20 test {:6.2}", linear.test_acc_mean);
    for ratio in [0.1, 0.8] {
        let r = run_mccv(&data, &cfg, &SplitSpec::new(ratio, iterations, DEFAULT_SEED)?)?;
        println!("rbf {ratio}: test {:6.2} ({:5.2})", r.test_acc_mean, r.test_acc_std);
    }

    let reduced = data.restrict_to_disease(Disease::Stgd);
    let full = hd_curve(&data, &cfg, &RATIOS, iterations, DEFAULT_SEED, DEFAULT_BINS)?;
    let stgd = hd_curve(&reduced, &cfg, &RATIOS, iterations, DEFAULT_SEED, DEFAULT_BINS)?;
    println!("ratio  H_train H_test (full) | H_train H_test (STGD) | frac_train frac_test (full)");
    for (f, s) in full.points.iter().zip(&stgd.points) {
        println!(
            "{:.1}    {:.4}  {:.4}        | {:.4}  {:.4}        | {:.4}  {:.4}",
            f.train_fraction,
            f.train.hellinger,
            f.test.hellinger,
            s.train.hellinger,
            s.test.hellinger,
            f.train.fraction,
            f.test.fraction
        );
    }
    if std::env::var("VERBOSE").is_ok() {
        for (f, s) in full.points.iter().zip(&stgd.points) {
            println!("{:.1} full train {:?}\n    full test {:?}\n    stgd train {:?}\n    stgd test {:?}", f.train_fraction, f.train, f.test, s.train, s.test);
        }
    }
    println!(
        "chernoff violations: full {}, STGD {}",
        full.violations(),
        stgd.violations()
    );
    println!("total {:.1?}", start.elapsed());
    Ok(())
}
