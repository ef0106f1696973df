//! Synthetic FAF-like cohorts with controllable class separation.
//!
//! A healthy image is a smooth radial background with a Gaussian dip at the
//! fovea plus pixel noise. A diseased image adds a few soft-edged elliptical
//! lesions, dark or bright, inside the outer grid ring; lesion count, size
//! and contrast are drawn from per-disease ranges. Each image draws from its
//! own random stream derived from the cohort seed, so generation is
//! deterministic and parallel.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Disease, Label, LabeledSample};
use crate::grid::{compute_features, Eye, GridError, GridSpec};
use crate::image::{FafImage, ImageError, Laterality};
use crate::io::{self, IoError, ManifestRow};
use crate::mccv::iteration_rng;

pub const DEFAULT_SEED: u64 = 20_190_601;

/// Box constraint used when benchmarking classifiers on the default cohort.
///
/// With the default C of 1 the 18-feature RBF model memorises small
/// training sets at the narrowest kernel width; a firmer margin penalty
/// lets wider kernels win the scale-factor sweep.
pub const BENCHMARK_C: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
}

/// Inclusive range `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T> Range<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }
}

impl Range<f64> {
    fn validate(&self, what: &str) -> Result<(), SynthError> {
        if !(self.min.is_finite() && self.max.is_finite() && 0.0 <= self.min && self.min <= self.max)
        {
            return Err(SynthError::InvalidParams(format!(
                "{what} range must satisfy 0 <= min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }

    fn scaled(self, factor: f64) -> Self {
        Range::new(self.min * factor, self.max * factor)
    }
}

/// Lesion appearance for one disease.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LesionParams {
    pub count: Range<u32>,
    /// Semi-axis lengths in pixels.
    pub radius: Range<f64>,
    /// Absolute intensity change at the lesion core.
    pub contrast: Range<f64>,
    /// Probability that a lesion is hypo-fluorescent (darker).
    pub hypo_probability: f64,
    /// Largest distance of a lesion centre from the fovea, as a fraction
    /// of the room left inside the outer grid ring.
    #[serde(default = "full_eccentricity")]
    pub max_eccentricity: f64,
    /// Probability that an eye shows no lesions at all, as in early-stage
    /// disease with an unremarkable autofluorescence pattern.
    #[serde(default)]
    pub subclinical_probability: f64,
}

fn full_eccentricity() -> f64 {
    1.0
}

impl LesionParams {
    fn validate(&self, disease: Disease) -> Result<(), SynthError> {
        if self.count.min > self.count.max {
            return Err(SynthError::InvalidParams(format!(
                "{disease} lesion count range is empty"
            )));
        }
        self.radius.validate(&format!("{disease} lesion radius"))?;
        if self.radius.min <= 0.0 {
            return Err(SynthError::InvalidParams(format!(
                "{disease} lesion radius must be positive"
            )));
        }
        self.contrast.validate(&format!("{disease} lesion contrast"))?;
        if !(self.max_eccentricity > 0.0 && self.max_eccentricity <= 1.0) {
            return Err(SynthError::InvalidParams(format!(
                "{disease} max_eccentricity must lie in (0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&self.subclinical_probability) {
            return Err(SynthError::InvalidParams(format!(
                "{disease} subclinical_probability must lie in [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&self.hypo_probability) {
            return Err(SynthError::InvalidParams(format!(
                "{disease} hypo_probability must lie in [0, 1]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Side length of the square images.
    pub image_size: usize,
    pub n_healthy: usize,
    pub n_diseased: usize,
    /// Intensity at the fovea before the dip is applied.
    pub background_level: f64,
    /// Relative background drop at the outer grid radius.
    pub background_falloff: f64,
    pub foveal_dip_depth: f64,
    /// Gaussian width of the foveal dip, in pixels.
    pub foveal_dip_sigma: f64,
    pub noise_sigma: f64,
    /// Relative per-eye spread of background level, dip depth and noise:
    /// each is scaled by a factor drawn from `[1 − v, 1 + v]`.
    pub subject_variation: f64,
    /// Maximum intensity change of a linear illumination gradient across
    /// the outer grid radius, in a random direction per image.
    pub illumination_tilt: f64,
    /// Outer grid radius as a fraction of the image size.
    pub grid_outer_fraction: f64,
    /// Maximum fovea offset from the image centre, in pixels.
    pub center_jitter: f64,
    /// Lesion appearance per disease; an entry for `NONE` adds benign
    /// spots to healthy eyes.
    pub lesions: BTreeMap<Disease, LesionParams>,
    /// Proportion of each disease among diseased images.
    pub disease_mix: BTreeMap<Disease, f64>,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        let lesions = BTreeMap::from([
            (
                Disease::Stgd,
                LesionParams {
                    count: Range::new(15, 25),
                    radius: Range::new(5.0, 8.0),
                    contrast: Range::new(35.0, 55.0),
                    hypo_probability: 0.9,
                    max_eccentricity: 1.0,
                    subclinical_probability: 0.0,
                },
            ),
            (
                Disease::Cnvm,
                LesionParams {
                    count: Range::new(1, 2),
                    radius: Range::new(15.0, 40.0),
                    contrast: Range::new(5.0, 25.0),
                    hypo_probability: 0.5,
                    max_eccentricity: 0.4,
                    subclinical_probability: 0.1,
                },
            ),
            (
                Disease::Cscr,
                LesionParams {
                    count: Range::new(1, 1),
                    radius: Range::new(25.0, 50.0),
                    contrast: Range::new(4.0, 22.0),
                    hypo_probability: 0.2,
                    max_eccentricity: 0.3,
                    subclinical_probability: 0.1,
                },
            ),
        ]);
        let disease_mix = BTreeMap::from([
            (Disease::Stgd, 0.4),
            (Disease::Cnvm, 0.3),
            (Disease::Cscr, 0.3),
        ]);
        Self {
            image_size: 512,
            n_healthy: 61,
            n_diseased: 79,
            background_level: 140.0,
            background_falloff: 0.25,
            foveal_dip_depth: 60.0,
            foveal_dip_sigma: 30.0,
            noise_sigma: 12.0,
            subject_variation: 0.0,
            illumination_tilt: 0.0,
            grid_outer_fraction: 0.4,
            center_jitter: 12.0,
            lesions,
            disease_mix,
            seed: DEFAULT_SEED,
        }
    }
}

impl SynthParams {
    /// Parameters producing a constant image at `background_level`.
    pub fn flat(image_size: usize, level: f64) -> Self {
        let mut p = Self {
            image_size,
            background_level: level,
            background_falloff: 0.0,
            foveal_dip_depth: 0.0,
            noise_sigma: 0.0,
            subject_variation: 0.0,
            illumination_tilt: 0.0,
            center_jitter: 0.0,
            ..Self::default()
        };
        for l in p.lesions.values_mut() {
            l.count = Range::new(0, 0);
            l.radius = Range::new(1.0, 1.0);
        }
        p
    }

    /// Multiplies every lesion contrast range by `factor`.
    pub fn with_contrast_scale(mut self, factor: f64) -> Self {
        for l in self.lesions.values_mut() {
            l.contrast = l.contrast.scaled(factor);
        }
        self
    }

    pub fn outer_radius(&self) -> f64 {
        self.grid_outer_fraction * self.image_size as f64
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.image_size < 16 {
            return bad(format!("image_size must be at least 16, got {}", self.image_size));
        }
        if self.n_healthy < 2 || self.n_diseased < 2 {
            return bad("at least 2 images per class are required".into());
        }
        for (name, v) in [
            ("background_level", self.background_level),
            ("background_falloff", self.background_falloff),
            ("foveal_dip_depth", self.foveal_dip_depth),
            ("foveal_dip_sigma", self.foveal_dip_sigma),
            ("noise_sigma", self.noise_sigma),
            ("illumination_tilt", self.illumination_tilt),
            ("center_jitter", self.center_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.subject_variation) {
            return bad("subject_variation must lie in [0, 1)".into());
        }
        if !(self.grid_outer_fraction > 0.0 && self.grid_outer_fraction <= 0.5) {
            return bad("grid_outer_fraction must lie in (0, 0.5]".into());
        }
        if self.disease_mix.contains_key(&Disease::None) {
            return bad("disease_mix entries must be STGD, CNVM or CSCR".into());
        }
        if self.disease_mix.values().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return bad("disease_mix proportions must be non-negative".into());
        }
        let total: f64 = self.disease_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("disease_mix must sum to 1, got {total}"));
        }
        for (&disease, &p) in &self.disease_mix {
            if p > 0.0 && !self.lesions.contains_key(&disease) {
                return bad(format!("no lesion parameters for {disease}"));
            }
        }
        let r3 = self.outer_radius();
        let half = self.image_size as f64 / 2.0;
        if r3 + self.center_jitter > half {
            return Err(SynthError::Infeasible(format!(
                "grid of radius {r3} with jitter {} does not fit a {}-pixel image",
                self.center_jitter, self.image_size
            )));
        }
        if r3 / 6.0 < 1.0 {
            return Err(SynthError::Infeasible("grid too small for the image size".into()));
        }
        for (&disease, lesion) in &self.lesions {
            lesion.validate(disease)?;
            if lesion.radius.max >= r3 {
                return Err(SynthError::Infeasible(format!(
                    "{disease} lesion radius {} is not smaller than the grid radius {r3}",
                    lesion.radius.max
                )));
            }
        }
        Ok(())
    }

    /// Disease tag of every diseased image, by largest-remainder
    /// apportionment of `disease_mix` in canonical disease order.
    pub fn disease_assignment(&self) -> Vec<Disease> {
        let n = self.n_diseased;
        let quotas: Vec<(Disease, f64)> = Disease::DISEASES
            .iter()
            .map(|&d| (d, self.disease_mix.get(&d).copied().unwrap_or(0.0) * n as f64))
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|(_, q)| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a].1 - quotas[a].1.floor();
            let rb = quotas[b].1 - quotas[b].1.floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let assigned: usize = counts.iter().sum();
        for &k in order.iter().take(n.saturating_sub(assigned)) {
            counts[k] += 1;
        }
        quotas
            .iter()
            .zip(counts)
            .flat_map(|(&(d, _), c)| std::iter::repeat_n(d, c))
            .collect()
    }
}

/// One generated image with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub id: String,
    pub image: FafImage,
    pub grid: GridSpec,
    pub label: Label,
    pub disease: Disease,
}

struct Lesion {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    amplitude: f64,
}

impl Lesion {
    /// Flat core with a raised-cosine edge over the outer quarter.
    fn value_at(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        let d = (u * u + v * v).sqrt();
        let edge = if d <= 0.75 {
            1.0
        } else if d < 1.0 {
            0.5 * (1.0 + (PI * (d - 0.75) / 0.25).cos())
        } else {
            0.0
        };
        self.amplitude * edge
    }
}

fn render(params: &SynthParams, index: usize, disease: Disease) -> Result<SynthImage, SynthError> {
    let mut rng = iteration_rng(params.seed, index);
    let size = params.image_size;
    let r3 = params.outer_radius();
    let half = size as f64 / 2.0;
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng| {
        if params.center_jitter > 0.0 {
            rng.random_range(-params.center_jitter..=params.center_jitter)
        } else {
            0.0
        }
    };
    let cx = half + jitter(&mut rng);
    let cy = half + jitter(&mut rng);
    let eye = if rng.random_bool(0.5) { Eye::Od } else { Eye::Os };
    let grid = GridSpec::with_outer_radius(cx, cy, r3, eye)?;

    let mut lesions = Vec::new();
    if let Some(spec) = params.lesions.get(&disease) {
        let subclinical = rng.random_bool(spec.subclinical_probability);
        let count = rng.random_range(spec.count.min..=spec.count.max);
        let count = if subclinical { 0 } else { count };
        for _ in 0..count {
            let a = spec.radius.sample(&mut rng);
            let b = spec.radius.sample(&mut rng);
            let reach = (r3 - a.max(b)) * spec.max_eccentricity;
            let rho = reach * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..2.0 * PI);
            let theta = rng.random_range(0.0..PI);
            let magnitude = spec.contrast.sample(&mut rng);
            let sign = if rng.random_bool(spec.hypo_probability) { -1.0 } else { 1.0 };
            lesions.push(Lesion {
                cx: cx + rho * phi.cos(),
                cy: cy + rho * phi.sin(),
                a,
                b,
                cos: theta.cos(),
                sin: theta.sin(),
                amplitude: sign * magnitude,
            });
        }
    }

    let v = params.subject_variation;
    let mut vary = |value: f64| {
        if v > 0.0 {
            value * rng.random_range(1.0 - v..=1.0 + v)
        } else {
            value
        }
    };
    let level = vary(params.background_level);
    let dip = vary(params.foveal_dip_depth);
    let noise_sigma = vary(params.noise_sigma);
    let tilt_angle = rng.random_range(0.0..2.0 * PI);
    let (tilt_x, tilt_y) = (
        params.illumination_tilt * tilt_angle.cos() / r3,
        params.illumination_tilt * tilt_angle.sin() / r3,
    );
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("validated noise sigma");
    let two_sigma2 = 2.0 * params.foveal_dip_sigma * params.foveal_dip_sigma;
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d2 = (px - cx).powi(2) + (py - cy).powi(2);
            let mut value = level * (1.0 - params.background_falloff * d2 / (r3 * r3))
                + tilt_x * (px - cx)
                + tilt_y * (py - cy);
            if dip > 0.0 {
                value -= dip * (-d2 / two_sigma2).exp();
            }
            for l in &lesions {
                value += l.value_at(px, py);
            }
            if noise_sigma > 0.0 {
                value += noise.sample(&mut rng);
            }
            pixels.push(value.round().clamp(0.0, 255.0) as u16);
        }
    }
    let image = FafImage::new(size, size, 255, pixels)?.with_laterality(Laterality::from(eye));
    Ok(SynthImage {
        id: format!("syn_{index:04}"),
        image,
        grid,
        label: disease.label(),
        disease,
    })
}

/// Generates `n_healthy` healthy images followed by the diseased ones.
pub fn generate_dataset(params: &SynthParams) -> Result<Vec<SynthImage>, SynthError> {
    params.validate()?;
    let tags: Vec<Disease> = std::iter::repeat_n(Disease::None, params.n_healthy)
        .chain(params.disease_assignment())
        .collect();
    tags.par_iter()
        .enumerate()
        .map(|(i, &d)| render(params, i, d))
        .collect()
}

/// Feature table of generated images.
pub fn featurize(images: &[SynthImage]) -> Result<Dataset, SynthError> {
    let samples = images
        .par_iter()
        .map(|s| {
            let fv = compute_features(&s.image, &s.grid)?;
            Ok(LabeledSample::new(s.id.clone(), fv.0.to_vec(), s.label, s.disease)?)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(Dataset::new(samples)?)
}

pub const MANIFEST_FILE: &str = "manifest.csv";

pub fn manifest_rows(images: &[SynthImage]) -> Vec<ManifestRow> {
    images
        .iter()
        .map(|s| ManifestRow {
            filename: format!("{}.pgm", s.id),
            label: s.label,
            disease: s.disease,
            grid: s.grid,
        })
        .collect()
}

/// Writes every image as binary PGM plus `manifest.csv` into `dir`.
pub fn write_dataset(dir: &Path, images: &[SynthImage]) -> Result<(), SynthError> {
    let file_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::File { path, source }
    };
    std::fs::create_dir_all(dir).map_err(file_err(dir))?;
    let rows = manifest_rows(images);
    for (s, row) in images.iter().zip(&rows) {
        let path = dir.join(&row.filename);
        std::fs::write(&path, s.image.to_pgm(true)).map_err(file_err(&path))?;
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, io::write_manifest(&rows)?).map_err(file_err(&path))?;
    Ok(())
}
