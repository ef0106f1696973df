//! ETDRS grid geometry and sectoral intensity statistics.
//!
//! The grid is three concentric circles around an operator-placed fovea
//! centre. The two outer rings are split into four quadrants by the 45°
//! diagonals, giving nine sectors. Each sector contributes its mean and
//! population standard deviation to an 18-value feature vector.
//!
//! Pixel membership is decided by the pixel centre `(x + 0.5, y + 0.5)`.
//! Points on a circle belong to the inner region; points on a diagonal
//! belong to the superior or inferior quadrant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{FafImage, Laterality};

pub const NUM_SECTORS: usize = 9;
pub const NUM_FEATURES: usize = 2 * NUM_SECTORS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("sector {0} has no in-bounds pixels")]
    EmptySector(SectorId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SectorId {
    #[serde(rename = "CSF")]
    Csf,
    #[serde(rename = "TIM")]
    Tim,
    #[serde(rename = "SIM")]
    Sim,
    #[serde(rename = "NIM")]
    Nim,
    #[serde(rename = "IIM")]
    Iim,
    #[serde(rename = "TOM")]
    Tom,
    #[serde(rename = "SOM")]
    Som,
    #[serde(rename = "NOM")]
    Nom,
    #[serde(rename = "IOM")]
    Iom,
}

impl SectorId {
    /// Canonical order; feature indices follow it.
    pub const ALL: [SectorId; NUM_SECTORS] = [
        SectorId::Csf,
        SectorId::Tim,
        SectorId::Sim,
        SectorId::Nim,
        SectorId::Iim,
        SectorId::Tom,
        SectorId::Som,
        SectorId::Nom,
        SectorId::Iom,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SectorId::Csf => "CSF",
            SectorId::Tim => "TIM",
            SectorId::Sim => "SIM",
            SectorId::Nim => "NIM",
            SectorId::Iim => "IIM",
            SectorId::Tom => "TOM",
            SectorId::Som => "SOM",
            SectorId::Nom => "NOM",
            SectorId::Iom => "IOM",
        }
    }
}

impl fmt::Display for SectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SectorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SectorId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown sector '{s}'"))
    }
}

/// Eye side used to resolve temporal versus nasal quadrants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Eye {
    #[serde(rename = "OD")]
    Od,
    #[serde(rename = "OS")]
    Os,
}

impl Eye {
    pub fn other(self) -> Eye {
        match self {
            Eye::Od => Eye::Os,
            Eye::Os => Eye::Od,
        }
    }
}

impl From<Eye> for Laterality {
    fn from(eye: Eye) -> Self {
        match eye {
            Eye::Od => Laterality::Od,
            Eye::Os => Laterality::Os,
        }
    }
}

impl TryFrom<Laterality> for Eye {
    type Error = GridError;

    fn try_from(l: Laterality) -> Result<Self, Self::Error> {
        match l {
            Laterality::Od => Ok(Eye::Od),
            Laterality::Os => Ok(Eye::Os),
            Laterality::Unknown => Err(GridError::InvalidGrid(
                "grid laterality must be OD or OS".into(),
            )),
        }
    }
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::Od => "OD",
            Eye::Os => "OS",
        })
    }
}

impl FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<Laterality>()? {
            Laterality::Unknown => Err("laterality must be OD or OS".into()),
            l => Ok(Eye::try_from(l).expect("known laterality")),
        }
    }
}

/// Placement of the ETDRS grid on an image.
///
/// With the default convention the nasal side of an OD eye is image-right
/// and of an OS eye image-left; `invert_nasal` flips both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "cx")]
    pub center_x: f64,
    #[serde(rename = "cy")]
    pub center_y: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub laterality: Eye,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub invert_nasal: bool,
}

impl GridSpec {
    pub fn new(
        center_x: f64,
        center_y: f64,
        r1: f64,
        r2: f64,
        r3: f64,
        laterality: Eye,
    ) -> Result<Self, GridError> {
        let grid = Self {
            center_x,
            center_y,
            r1,
            r2,
            r3,
            laterality,
            invert_nasal: false,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Radii in the standard 1:3:6 diameter proportions, scaled so the
    /// outer boundary is `r3`.
    pub fn with_outer_radius(
        center_x: f64,
        center_y: f64,
        r3: f64,
        laterality: Eye,
    ) -> Result<Self, GridError> {
        Self::new(center_x, center_y, r3 / 6.0, r3 / 2.0, r3, laterality)
    }

    pub fn with_inverted_nasal(mut self, invert: bool) -> Self {
        self.invert_nasal = invert;
        self
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let all_finite = [self.center_x, self.center_y, self.r1, self.r2, self.r3]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(GridError::InvalidGrid("grid parameters must be finite".into()));
        }
        if !(0.0 < self.r1 && self.r1 < self.r2 && self.r2 < self.r3) {
            return Err(GridError::InvalidGrid(format!(
                "radii must satisfy 0 < r1 < r2 < r3, got r1={}, r2={}, r3={}",
                self.r1, self.r2, self.r3
            )));
        }
        Ok(())
    }

    fn nasal_is_right(&self) -> bool {
        (self.laterality == Eye::Od) != self.invert_nasal
    }

    /// Sector containing the centre of pixel `(px, py)`, if any.
    pub fn sector_of(&self, px: i64, py: i64) -> Option<SectorId> {
        let dx = px as f64 + 0.5 - self.center_x;
        let dy = py as f64 + 0.5 - self.center_y;
        let d2 = dx * dx + dy * dy;
        if d2 <= self.r1 * self.r1 {
            return Some(SectorId::Csf);
        }
        let inner = if d2 <= self.r2 * self.r2 {
            true
        } else if d2 <= self.r3 * self.r3 {
            false
        } else {
            return None;
        };
        // image y grows downwards, so superior is dy < 0
        let sector = if dy.abs() >= dx.abs() {
            match (dy < 0.0, inner) {
                (true, true) => SectorId::Sim,
                (true, false) => SectorId::Som,
                (false, true) => SectorId::Iim,
                (false, false) => SectorId::Iom,
            }
        } else {
            let nasal = (dx > 0.0) == self.nasal_is_right();
            match (nasal, inner) {
                (true, true) => SectorId::Nim,
                (true, false) => SectorId::Nom,
                (false, true) => SectorId::Tim,
                (false, false) => SectorId::Tom,
            }
        };
        Some(sector)
    }

    /// In-bounds pixel window covering the outer circle, as
    /// `(x0, x1, y0, y1)` half-open ranges.
    fn window(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let clamp = |v: f64, hi: usize| -> usize {
            if v <= 0.0 {
                0
            } else if v >= hi as f64 {
                hi
            } else {
                v as usize
            }
        };
        let x0 = clamp((self.center_x - self.r3 - 1.0).floor(), width);
        let x1 = clamp((self.center_x + self.r3 + 1.0).ceil(), width);
        let y0 = clamp((self.center_y - self.r3 - 1.0).floor(), height);
        let y1 = clamp((self.center_y + self.r3 + 1.0).ceil(), height);
        (x0, x1, y0, y1)
    }

    /// Geometry summary for client-side overlay rendering.
    pub fn overlay(&self) -> Overlay {
        let right = self.nasal_is_right();
        Overlay {
            center_x: self.center_x,
            center_y: self.center_y,
            radii: [self.r1, self.r2, self.r3],
            diagonal_angles_deg: [45.0, 135.0, 225.0, 315.0],
            image_right: if right { "nasal" } else { "temporal" },
            image_left: if right { "temporal" } else { "nasal" },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Overlay {
    #[serde(rename = "cx")]
    pub center_x: f64,
    #[serde(rename = "cy")]
    pub center_y: f64,
    pub radii: [f64; 3],
    /// Quadrant dividers, measured counter-clockwise from image-right.
    pub diagonal_angles_deg: [f64; 4],
    pub image_right: &'static str,
    pub image_left: &'static str,
}

pub type SectorCounts = [usize; NUM_SECTORS];

/// Number of in-bounds pixels falling in each sector.
pub fn sector_pixel_counts(width: usize, height: usize, grid: &GridSpec) -> SectorCounts {
    let mut counts = [0usize; NUM_SECTORS];
    let (x0, x1, y0, y1) = grid.window(width, height);
    for y in y0..y1 {
        for x in x0..x1 {
            if let Some(s) = grid.sector_of(x as i64, y as i64) {
                counts[s.index()] += 1;
            }
        }
    }
    counts
}

/// Exact integer moments of one sector's intensities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SectorMoments {
    pub count: u64,
    pub sum: u64,
    pub sum_sq: u128,
}

impl SectorMoments {
    pub fn push(&mut self, v: u16) {
        let v = v as u64;
        self.count += 1;
        self.sum += v;
        self.sum_sq += (v * v) as u128;
    }

    /// `n² · variance`, i.e. `n·Σv² − (Σv)²`, computed without rounding.
    pub fn scaled_variance(&self) -> u128 {
        self.count as u128 * self.sum_sq - (self.sum as u128) * (self.sum as u128)
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let n = self.count as f64;
        (self.scaled_variance() as f64 / (n * n)).sqrt()
    }
}

/// Per-sector summary reported alongside features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorStat {
    pub sector: SectorId,
    pub mean: f64,
    pub std: f64,
    pub pixel_count: u64,
}

/// Exact moments for each sector.
pub fn sector_moments(img: &FafImage, grid: &GridSpec) -> [SectorMoments; NUM_SECTORS] {
    let mut moments = [SectorMoments::default(); NUM_SECTORS];
    let (x0, x1, y0, y1) = grid.window(img.width(), img.height());
    let pixels = img.pixels();
    for y in y0..y1 {
        let row = &pixels[y * img.width()..(y + 1) * img.width()];
        for x in x0..x1 {
            if let Some(s) = grid.sector_of(x as i64, y as i64) {
                moments[s.index()].push(row[x]);
            }
        }
    }
    moments
}

/// Mean, standard deviation and pixel count of every sector.
pub fn sector_stats(img: &FafImage, grid: &GridSpec) -> Result<Vec<SectorStat>, GridError> {
    grid.validate()?;
    let moments = sector_moments(img, grid);
    SectorId::ALL
        .iter()
        .zip(moments.iter())
        .map(|(&sector, m)| {
            if m.count == 0 {
                Err(GridError::EmptySector(sector))
            } else {
                Ok(SectorStat {
                    sector,
                    mean: m.mean(),
                    std: m.std(),
                    pixel_count: m.count,
                })
            }
        })
        .collect()
}

/// The 18 sectoral statistics in canonical order, mean before std.
pub fn compute_features(img: &FafImage, grid: &GridSpec) -> Result<FeatureVector, GridError> {
    let stats = sector_stats(img, grid)?;
    let mut values = [0.0; NUM_FEATURES];
    for st in &stats {
        values[2 * st.sector.index()] = st.mean;
        values[2 * st.sector.index() + 1] = st.std;
    }
    Ok(FeatureVector(values))
}

/// Sector statistics of one image, `(CSF, TIM, …, IOM) × (mean, std)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mean(&self, sector: SectorId) -> f64 {
        self.0[2 * sector.index()]
    }

    pub fn std(&self, sector: SectorId) -> f64 {
        self.0[2 * sector.index() + 1]
    }

    /// Column names matching the value order.
    pub fn column_names() -> [String; NUM_FEATURES] {
        std::array::from_fn(|i| {
            let s = SectorId::ALL[i / 2];
            format!("{}_{}", s.name(), if i % 2 == 0 { "mean" } else { "std" })
        })
    }
}

impl TryFrom<&[f64]> for FeatureVector {
    type Error = String;

    fn try_from(v: &[f64]) -> Result<Self, Self::Error> {
        let arr: [f64; NUM_FEATURES] = v
            .try_into()
            .map_err(|_| format!("expected {NUM_FEATURES} features, got {}", v.len()))?;
        Ok(FeatureVector(arr))
    }
}
