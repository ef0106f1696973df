//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fafscreen_core::dataset::{Dataset, Disease, Label, LabeledSample};
use fafscreen_core::grid::{
    compute_features, sector_moments, sector_pixel_counts, Eye, GridSpec, SectorId,
    NUM_SECTORS,
};
use fafscreen_core::image::FafImage;
use fafscreen_core::io::{read_features, write_features};
use fafscreen_core::mccv::{
    class_train_count, iteration_rng, run_mccv, scale_factor_sweep, stratified_indices,
    MccvReport, SplitSpec,
};
use fafscreen_core::numfmt::to_json_vec;
use fafscreen_core::separation::{build_histogram, hd_curve, hellinger, Histogram, DEFAULT_BINS};
use fafscreen_core::svm::{kkt_audit, train_detailed, KernelSpec, KktAudit, SvmConfig, SvmModel};
use fafscreen_core::synth::{featurize, generate_dataset, SynthParams, BENCHMARK_C, DEFAULT_SEED};

const RATIOS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const SCALE_FACTORS: [f64; 5] = [1.0, 2.0, 2.75, 4.0, 5.0];

type Outcome = Result<String, String>;

/// Models trained anywhere in the suite, audited by the KKT criterion.
#[derive(Default)]
struct Audits {
    entries: Vec<(String, KktAudit, f64)>,
}

impl Audits {
    fn fit(&mut self, what: &str, data: &Dataset, cfg: &SvmConfig) -> Result<SvmModel, String> {
        let t = train_detailed(data, cfg).map_err(|e| format!("{what}: {e}"))?;
        self.entries
            .push((what.to_string(), kkt_audit(&t, data), cfg.kkt_tolerance));
        Ok(t.model)
    }
}

fn sample(id: usize, x: &[f64], label: Label) -> LabeledSample {
    LabeledSample::with_label(format!("s{id}"), x.to_vec(), label)
}

// ---------------------------------------------------------------------------
// Reference dual solver: accelerated projected gradient on
// min ½αᵀQα − 1ᵀα  s.t. 0 ≤ α ≤ C, yᵀα = 0.

fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c))
            .collect()
    };
    let residual = |a: &[f64]| a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>();
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    // residual is non-increasing in lambda
    while hi - lo > 1e-15 * bound {
        let mid = 0.5 * (lo + hi);
        if residual(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

struct OracleSolution {
    alphas: Vec<f64>,
    objective: f64,
    bias: f64,
}

fn oracle_solve(gram: &[Vec<f64>], y: &[f64], c: f64) -> OracleSolution {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * gram[i][j]).collect())
        .collect();
    let lipschitz = q
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(1e-12, f64::max);
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q[i][j] * a[j]).sum::<f64>() - 1.0)
            .collect()
    };
    let primal = |a: &[f64]| -> f64 {
        let quad: f64 = (0..n)
            .map(|i| (0..n).map(|j| a[i] * q[i][j] * a[j]).sum::<f64>())
            .sum();
        0.5 * quad - a.iter().sum::<f64>()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = primal(&x);
    for iteration in 0..200_000 {
        if iteration % 64 == 0 {
            // stationarity: a projected gradient step from x leaves it in place
            let g = grad(&x);
            let probe: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi / lipschitz).collect();
            let moved = project(&probe, y, c)
                .iter()
                .zip(&x)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if moved < 1e-9 * c {
                break;
            }
        }
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lipschitz).collect();
        let next = project(&step, y, c);
        let value = primal(&next);
        if value > best {
            // restart momentum when the objective goes up
            t = 1.0;
            z = x.clone();
            continue;
        }
        best = value;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = next;
        t = t_next;
    }
    // bias: average over free multipliers, else midpoint of the feasible interval
    let f0: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| x[j] * y[j] * gram[j][i]).sum())
        .collect();
    let free_tol = 1e-6 * c;
    let free: Vec<f64> = (0..n)
        .filter(|&i| x[i] > free_tol && x[i] < c - free_tol)
        .map(|i| y[i] - f0[i])
        .collect();
    let bias = if free.is_empty() {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let r = y[i] - f0[i];
            let at_lower = x[i] <= free_tol;
            // y=+1 at 0 or y=−1 at C bounds b from below, and vice versa
            if (y[i] > 0.0) == at_lower {
                lo = lo.max(r);
            } else {
                hi = hi.min(r);
            }
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    OracleSolution {
        alphas: x.clone(),
        objective: -primal(&x),
        bias,
    }
}

struct OracleCase {
    points: Vec<Vec<f64>>,
    labels: Vec<Label>,
    kernel: KernelSpec,
    c: f64,
}

fn oracle_cases() -> Vec<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..200)
        .map(|case| {
            let n = rng.random_range(2..=8usize);
            let dim = rng.random_range(1..=3usize);
            let c = [0.5, 1.0, 10.0][case % 3];
            let kernel = if case % 2 == 0 {
                KernelSpec::Linear
            } else {
                KernelSpec::Rbf {
                    scale_factor: [0.5, 1.0, 2.0][(case / 2) % 3],
                }
            };
            let mut labels: Vec<Label> = (0..n)
                .map(|_| if rng.random_bool(0.5) { Label::Diseased } else { Label::Healthy })
                .collect();
            labels[0] = Label::Diseased;
            labels[1] = Label::Healthy;
            let points = labels
                .iter()
                .map(|l| {
                    let shift = 0.8 * l.sign();
                    (0..dim).map(|_| rng.random_range(-1.5..1.5) + shift).collect()
                })
                .collect();
            OracleCase {
                points,
                labels,
                kernel,
                c,
            }
        })
        .collect()
}

/// Sign convention shared with the classifier: a decision value on the
/// boundary is diseased. Values within round-off of zero count as zero.
fn label_with_ties(f: f64, scale: f64) -> Label {
    if f.abs() <= 1e-12 * scale {
        Label::Diseased
    } else {
        Label::from_sign(f)
    }
}

fn solver_oracle(audits: &mut Audits) -> Outcome {
    use rayon::prelude::*;

    let start = Instant::now();
    let cases = oracle_cases();
    let solved: Vec<(Dataset, SvmConfig, OracleSolution)> = cases
        .par_iter()
        .map(|case| {
            let data = Dataset::new(
                case.points
                    .iter()
                    .zip(&case.labels)
                    .enumerate()
                    .map(|(i, (x, &l))| sample(i, x, l))
                    .collect(),
            )
            .expect("finite points");
            let cfg = SvmConfig {
                kernel: case.kernel,
                c: case.c,
                ..SvmConfig::default()
            }
            .with_standardize(false);
            let gram: Vec<Vec<f64>> = case
                .points
                .iter()
                .map(|a| case.points.iter().map(|b| case.kernel.eval(a, b).unwrap()).collect())
                .collect();
            let y: Vec<f64> = case.labels.iter().map(|l| l.sign()).collect();
            let reference = oracle_solve(&gram, &y, case.c);
            (data, cfg, reference)
        })
        .collect();

    let mut worst_gap = 0.0f64;
    let mut mismatches = Vec::new();
    let mut probes = 0usize;
    for (k, (case, (data, cfg, reference))) in cases.iter().zip(&solved).enumerate() {
        let model = audits.fit(&format!("oracle case {k}"), data, cfg)?;
        worst_gap = worst_gap.max((model.dual_objective() - reference.objective).abs());
        let dim = case.points[0].len();
        let y: Vec<f64> = case.labels.iter().map(|l| l.sign()).collect();
        let scale = reference.alphas.iter().sum::<f64>() + reference.bias.abs();
        for gy in 0..5 {
            for gx in 0..5 {
                let mut x = vec![0.0; dim];
                x[0] = -2.0 + gx as f64;
                if dim > 1 {
                    x[1] = -2.0 + gy as f64;
                } else {
                    x[0] += 0.2 * gy as f64;
                }
                let f_ref: f64 = case
                    .points
                    .iter()
                    .zip(&reference.alphas)
                    .zip(&y)
                    .map(|((p, a), yi)| a * yi * case.kernel.eval(p, &x).unwrap())
                    .sum::<f64>()
                    + reference.bias;
                let f = model.decision_value(&x).map_err(|e| e.to_string())?;
                probes += 1;
                if label_with_ties(f, scale) != label_with_ties(f_ref, scale) {
                    mismatches.push(format!("case {k} probe {x:?}: f_ref={f_ref:e}, f={f:e}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "200 datasets, max |Δ dual objective| = {worst_gap:.2e}, {} of {probes} probe predictions differ, {elapsed:.1?}",
        mismatches.len()
    );
    if worst_gap <= 1e-4 && mismatches.is_empty() && elapsed < Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", mismatches.join("; ")))
    }
}

fn analytic_case(audits: &mut Audits) -> Outcome {
    let data = Dataset::new(vec![
        sample(0, &[1.0, 1.0], Label::Diseased),
        sample(1, &[-1.0, -1.0], Label::Healthy),
    ])
    .map_err(|e| e.to_string())?;
    let cfg = SvmConfig::linear(1.0).with_standardize(false);
    let model = audits.fit("two-point", &data, &cfg)?;
    let w = model.linear_weights().ok_or("no weights")?;
    let b = model.bias();
    let d_pos = model.signed_distance(&[1.0, 1.0]).map_err(|e| e.to_string())?;
    let d_neg = model.signed_distance(&[-1.0, -1.0]).map_err(|e| e.to_string())?;
    let ok = (w[0] - 0.5).abs() < 1e-6
        && (w[1] - 0.5).abs() < 1e-6
        && b.abs() < 1e-6
        && (d_pos + SQRT_2).abs() < 1e-6
        && (d_neg - SQRT_2).abs() < 1e-6;
    let detail = format!("w = {w:?}, b = {b:e}, distances {d_pos} / {d_neg}");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn xor_rbf(audits: &mut Audits) -> Outcome {
    let corners = [
        ([0.0, 0.0], Label::Healthy),
        ([1.0, 1.0], Label::Healthy),
        ([0.0, 1.0], Label::Diseased),
        ([1.0, 0.0], Label::Diseased),
    ];
    let data = Dataset::new(
        corners
            .iter()
            .enumerate()
            .map(|(i, (x, l))| sample(i, x, *l))
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let model = audits.fit("xor", &data, &SvmConfig::rbf(1.0, 100.0))?;
    let correct = data
        .samples()
        .iter()
        .filter(|s| model.classify(&s.features).ok() == Some(s.label))
        .count();
    let detail = format!("{correct}/4 training points correct");
    if correct == 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Features

fn random_image(rng: &mut ChaCha8Rng, max: u16) -> FafImage {
    let w = rng.random_range(40..120usize);
    let h = rng.random_range(40..120usize);
    let px = (0..w * h).map(|_| rng.random_range(0..=max)).collect();
    FafImage::new(w, h, u16::MAX, px).unwrap()
}

fn random_grid(rng: &mut ChaCha8Rng, img: &FafImage) -> GridSpec {
    let r3 = rng.random_range(12.0..0.45 * img.width().min(img.height()) as f64);
    let r2 = r3 * rng.random_range(0.4..0.8);
    let r1 = r2 * rng.random_range(0.2..0.6);
    let cx = img.width() as f64 * rng.random_range(0.35..0.65);
    let cy = img.height() as f64 * rng.random_range(0.35..0.65);
    let eye = if rng.random_bool(0.5) { Eye::Od } else { Eye::Os };
    GridSpec::new(cx, cy, r1, r2, r3, eye)
        .unwrap()
        .with_inverted_nasal(rng.random_bool(0.2))
}

fn brute_force_features(img: &FafImage, grid: &GridSpec) -> Option<[f64; 18]> {
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); NUM_SECTORS];
    for y in 0..img.height() {
        for x in 0..img.width() {
            if let Some(s) = grid.sector_of(x as i64, y as i64) {
                values[s.index()].push(img.pixel_at(x, y).unwrap() as f64);
            }
        }
    }
    let mut out = [0.0; 18];
    for (k, v) in values.iter().enumerate() {
        if v.is_empty() {
            return None;
        }
        // exact integer arithmetic: pixel sums fit comfortably in f64/u128
        let n = v.len() as u128;
        let sum: u128 = v.iter().map(|&p| p as u128).sum();
        let sum_sq: u128 = v.iter().map(|&p| (p as u128) * (p as u128)).sum();
        out[2 * k] = sum as f64 / n as f64;
        let nf = n as f64;
        out[2 * k + 1] = ((n * sum_sq - sum * sum) as f64 / (nf * nf)).sqrt();
    }
    Some(out)
}

fn map_pixels(img: &FafImage, f: impl Fn(u16) -> u16) -> FafImage {
    let px = img.pixels().iter().map(|&p| f(p)).collect();
    FafImage::new(img.width(), img.height(), img.max_value(), px).unwrap()
}

fn close_ulps(a: f64, b: f64, ulps: u32) -> bool {
    a == b || (a - b).abs() <= ulps as f64 * f64::EPSILON * a.abs().max(b.abs())
}

fn feature_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    let mut pairs = 0;
    while pairs < 50 {
        let img = random_image(&mut rng, 1000);
        let grid = random_grid(&mut rng, &img);
        let Some(expected) = brute_force_features(&img, &grid) else {
            continue;
        };
        pairs += 1;
        let got = compute_features(&img, &grid).map_err(|e| e.to_string())?;
        if got.0 != expected {
            failures.push(format!("pair {pairs}: features differ from brute force"));
        }

        // shift: integer moments move exactly, std unchanged bit for bit
        let c = rng.random_range(1..500u16);
        let shifted = map_pixels(&img, |p| p + c);
        let (m0, m1) = (sector_moments(&img, &grid), sector_moments(&shifted, &grid));
        let fs = compute_features(&shifted, &grid).unwrap();
        for k in 0..NUM_SECTORS {
            let exact = m1[k].sum == m0[k].sum + c as u64 * m0[k].count
                && m1[k].scaled_variance() == m0[k].scaled_variance();
            if !exact
                || fs.0[2 * k + 1] != got.0[2 * k + 1]
                || !close_ulps(fs.0[2 * k], got.0[2 * k] + c as f64, 1)
            {
                failures.push(format!("pair {pairs}: shift by {c} breaks sector {k}"));
            }
        }

        // scale: integer moments scale exactly by k and k²
        let kf = rng.random_range(0..40u16);
        let scaled = map_pixels(&img, |p| p * kf);
        let m2 = sector_moments(&scaled, &grid);
        let fk = compute_features(&scaled, &grid).unwrap();
        let k64 = kf as u128;
        for s in 0..NUM_SECTORS {
            let exact = m2[s].sum as u128 == m0[s].sum as u128 * k64
                && m2[s].scaled_variance() == m0[s].scaled_variance() * k64 * k64;
            if !exact
                || !close_ulps(fk.0[2 * s], got.0[2 * s] * kf as f64, 1)
                || !close_ulps(fk.0[2 * s + 1], got.0[2 * s + 1] * kf as f64, 2)
            {
                failures.push(format!("pair {pairs}: scale by {kf} breaks sector {s}"));
            }
        }

        // laterality swap: exchanges temporal and nasal statistics only
        let swapped = GridSpec {
            laterality: grid.laterality.other(),
            ..grid
        };
        let fw = compute_features(&img, &swapped).unwrap();
        for s in SectorId::ALL {
            let partner = match s {
                SectorId::Tim => SectorId::Nim,
                SectorId::Nim => SectorId::Tim,
                SectorId::Tom => SectorId::Nom,
                SectorId::Nom => SectorId::Tom,
                other => other,
            };
            if fw.mean(s) != got.mean(partner) || fw.std(s) != got.std(partner) {
                failures.push(format!("pair {pairs}: laterality swap breaks {s}"));
            }
        }
    }
    if failures.is_empty() {
        Ok("50 random (image, grid) pairs: brute force, shift, scale and laterality swap exact".into())
    } else {
        Err(failures.join("; "))
    }
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let r1: f64 = rng.random_range(50.0..80.0);
        let r2 = r1 * rng.random_range(2.0..3.0);
        let r3 = r2 * rng.random_range(1.5..2.0);
        let size = (2.0 * r3).ceil() as usize + 4;
        let c = size as f64 / 2.0;
        let grid = GridSpec::new(
            c + rng.random_range(-0.5..0.5),
            c + rng.random_range(-0.5..0.5),
            r1,
            r2,
            r3,
            Eye::Od,
        )
        .unwrap();
        let counts = sector_pixel_counts(size, size, &grid);
        for s in SectorId::ALL {
            let area = match s {
                SectorId::Csf => PI * r1 * r1,
                SectorId::Tim | SectorId::Sim | SectorId::Nim | SectorId::Iim => {
                    PI * (r2 * r2 - r1 * r1) / 4.0
                }
                _ => PI * (r3 * r3 - r2 * r2) / 4.0,
            };
            worst = worst.max((counts[s.index()] as f64 - area).abs() / area);
        }
    }
    let detail = format!("worst relative deviation {:.4}% over 10 grids", 100.0 * worst);
    if worst <= 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Synthetic cohort

fn cohort() -> Dataset {
    featurize(&generate_dataset(&SynthParams::default()).expect("default cohort"))
        .expect("features")
}

fn report_bytes(report: &MccvReport) -> Vec<u8> {
    to_json_vec(report).expect("serializable report")
}

fn mccv_determinism(data: &Dataset, reports: &mut Vec<MccvReport>) -> Outcome {
    let cfg = SvmConfig::rbf(2.75, BENCHMARK_C);
    let split = SplitSpec::new(0.8, 100, DEFAULT_SEED).map_err(|e| e.to_string())?;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_mccv(data, &cfg, &split))
            .map_err(|e| e.to_string())
    };
    let single = run(1)?;
    let multi = run(8)?;
    let identical = report_bytes(&single) == report_bytes(&multi);
    let (nd, nh) = data.class_counts();
    let formula = (class_train_count(nh, 0.8), class_train_count(nd, 0.8));
    let drawn = stratified_indices(data, 0.8, &mut iteration_rng(DEFAULT_SEED, 0))
        .map_err(|e| e.to_string())?;
    let train_counts = data.subset(&drawn.train).class_counts();
    reports.push(single);
    reports.push(multi);
    let detail = format!(
        "1 vs 8 threads byte-identical: {identical}; train counts healthy/diseased {}/{} (drawn {}/{})",
        formula.0, formula.1, train_counts.1, train_counts.0
    );
    if identical && formula == (49, 63) && train_counts == (63, 49) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Synthetic {
    outcome: Outcome,
    reports: Vec<MccvReport>,
}

fn synthetic_end_to_end(data: &Dataset) -> Synthetic {
    let start = Instant::now();
    let mut reports = Vec::new();
    let outcome = (|| -> Outcome {
        let e = |err: &dyn std::fmt::Display| err.to_string();
        let (nd, nh) = data.class_counts();
        let split = SplitSpec::new(0.8, 200, DEFAULT_SEED).map_err(|x| e(&x))?;
        let sweep = scale_factor_sweep(data, &SCALE_FACTORS, &split, &SvmConfig::rbf(1.0, BENCHMARK_C))
            .map_err(|x| e(&x))?;
        let best = sweep.best_report().clone();
        reports.extend(sweep.reports.iter().cloned());
        let cfg = SvmConfig::rbf(sweep.best_scale_factor, BENCHMARK_C);
        let low = run_mccv(data, &cfg, &SplitSpec::new(0.1, 200, DEFAULT_SEED).map_err(|x| e(&x))?)
            .map_err(|x| e(&x))?;
        reports.push(low.clone());

        let full = hd_curve(data, &cfg, &RATIOS, 200, DEFAULT_SEED, DEFAULT_BINS).map_err(|x| e(&x))?;
        let reduced_data = data.restrict_to_disease(Disease::Stgd);
        let reduced = hd_curve(&reduced_data, &cfg, &RATIOS, 200, DEFAULT_SEED, DEFAULT_BINS)
            .map_err(|x| e(&x))?;
        let reduced_wins = full.points.iter().zip(&reduced.points).all(|(f, r)| {
            r.test.hellinger > f.test.hellinger && r.train.hellinger > f.train.hellinger
        });
        let worst_gap = full
            .points
            .iter()
            .zip(&reduced.points)
            .map(|(f, r)| r.test.hellinger - f.test.hellinger)
            .fold(f64::INFINITY, f64::min);
        let elapsed = start.elapsed();

        let checks = [
            (nh == 61 && nd == 79, format!("cohort {nh} healthy + {nd} diseased")),
            (
                best.test_acc_mean >= 85.0,
                format!(
                    "best SF {} test accuracy {:.2}%",
                    sweep.best_scale_factor, best.test_acc_mean
                ),
            ),
            (
                best.test_acc_mean >= low.test_acc_mean,
                format!("80:20 {:.2}% vs 10:90 {:.2}%", best.test_acc_mean, low.test_acc_mean),
            ),
            (
                reduced_wins,
                format!("STGD-only minus full test HD, smallest gap {worst_gap:.4}"),
            ),
            (
                full.violations() == 0,
                format!(
                    "Chernoff violations {} (STGD-only curve, informational: {})",
                    full.violations(),
                    reduced.violations()
                ),
            ),
            (elapsed < Duration::from_secs(300), format!("{elapsed:.1?}")),
        ];
        let detail = checks
            .iter()
            .map(|(_, d)| d.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        if checks.iter().all(|(ok, _)| *ok) {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    Synthetic { outcome, reports }
}

fn confusion_columns(reports: &[MccvReport]) -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for r in reports {
        let mut matrices = vec![r.confusion_mean];
        for rec in &r.records {
            matrices.push(rec.test_confusion.normalized().map_err(|e| e.to_string())?);
        }
        for m in matrices {
            for s in m.column_sums() {
                worst = worst.max((s - 100.0).abs());
            }
            checked += 1;
        }
    }
    let detail = format!("{checked} matrices from {} runs, worst |sum − 100| = {worst:e}", reports.len());
    if checked > 0 && worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hellinger_cases() -> Outcome {
    let hist = |probs: Vec<f64>| Histogram {
        bin_edges: (0..=probs.len()).map(|i| i as f64).collect(),
        probs,
    };
    let e = |x: fafscreen_core::separation::SeparationError| x.to_string();
    let same = hellinger(&hist(vec![0.25, 0.5, 0.25]), &hist(vec![0.25, 0.5, 0.25])).map_err(e)?;
    let disjoint = hellinger(&hist(vec![1.0, 0.0]), &hist(vec![0.0, 1.0])).map_err(e)?;
    let hand = hellinger(&hist(vec![0.5, 0.5]), &hist(vec![0.9, 0.1])).map_err(e)?;
    let edges = [0.0, 1.0, 2.0];
    let built = hellinger(
        &build_histogram(&[0.5, 0.7, 1.5, 2.0], &edges).map_err(e)?,
        &build_histogram(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.9], &edges).map_err(e)?,
    )
    .map_err(e)?;
    let detail = format!("H(p,p)={same}, disjoint={disjoint}, hand case={hand:.9}, binned={built:.9}");
    if same == 0.0 && disjoint == 1.0 && (hand - 0.324920).abs() < 1e-6 && (built - hand).abs() < 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn round_trips(data: &Dataset, audits: &mut Audits) -> Outcome {
    let csv = write_features(data).map_err(|e| e.to_string())?;
    let back = read_features(&csv).map_err(|e| e.to_string())?;
    let features_ok = &back == data;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let train = data.subset(&(0..data.len()).step_by(2).collect::<Vec<_>>());
    let mut models_ok = true;
    for cfg in [SvmConfig::linear(1.0), SvmConfig::rbf(2.75, BENCHMARK_C)] {
        let model = audits.fit("round-trip model", &train, &cfg)?;
        let bytes = model.to_json_bytes().map_err(|e| e.to_string())?;
        let loaded = SvmModel::from_json_bytes(&bytes).map_err(|e| e.to_string())?;
        models_ok &= loaded == model;
        for _ in 0..100 {
            let base = &data.samples()[rng.random_range(0..data.len())].features;
            let x: Vec<f64> = base.iter().map(|v| v * rng.random_range(0.8..1.2)).collect();
            models_ok &= model.decision_value(&x).unwrap().to_bits()
                == loaded.decision_value(&x).unwrap().to_bits();
        }
    }
    let detail = format!("feature CSV lossless: {features_ok}; linear + RBF models identical on 100 inputs: {models_ok}");
    if features_ok && models_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mccv_models(data: &Dataset, audits: &mut Audits) -> Result<(), String> {
    for fraction in [0.1, 0.5, 0.8] {
        for (k, cfg) in [SvmConfig::linear(1.0), SvmConfig::rbf(2.75, BENCHMARK_C), SvmConfig::rbf(1.0, 1.0)]
            .iter()
            .enumerate()
        {
            for it in 0..10 {
                let split = stratified_indices(data, fraction, &mut iteration_rng(DEFAULT_SEED, it))
                    .map_err(|e| e.to_string())?;
                let (train, _) = split.datasets(data);
                audits.fit(&format!("split {fraction} cfg {k} it {it}"), &train, cfg)?;
            }
        }
    }
    Ok(())
}

fn kkt(audits: &Audits) -> Outcome {
    let failing: Vec<&str> = audits
        .entries
        .iter()
        .filter(|(_, a, tol)| !a.passes(*tol))
        .map(|(w, _, _)| w.as_str())
        .collect();
    let worst = audits
        .entries
        .iter()
        .map(|(_, a, _)| a.max_violation)
        .fold(0.0, f64::max);
    let residual = audits
        .entries
        .iter()
        .map(|(_, a, _)| a.equality_residual)
        .fold(0.0, f64::max);
    let detail = format!(
        "{} models audited, worst margin violation {worst:.2e}, worst |Σαy| {residual:.2e}",
        audits.entries.len()
    );
    if failing.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing: {}", failing.join(", ")))
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut audits = Audits::default();
    let data = cohort();

    results.push(("solver oracle", solver_oracle(&mut audits)));
    results.push(("analytic two-point case", analytic_case(&mut audits)));
    results.push(("XOR with RBF", xor_rbf(&mut audits)));
    results.push(("feature oracle and invariants", feature_oracle()));
    results.push(("sector geometry", geometry()));
    let mut reports = Vec::new();
    results.push(("MCCV determinism and split counts", mccv_determinism(&data, &mut reports)));
    let synthetic = synthetic_end_to_end(&data);
    reports.extend(synthetic.reports);
    results.push(("confusion column sums", confusion_columns(&reports)));
    results.push(("Hellinger cases", hellinger_cases()));
    results.push(("synthetic end-to-end", synthetic.outcome));
    results.push(("round trips", round_trips(&data, &mut audits)));
    let kkt_outcome = mccv_models(&data, &mut audits).and_then(|_| kkt(&audits));
    results.push(("KKT audit", kkt_outcome));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
