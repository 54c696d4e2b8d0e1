//! Synthetic 2-D dataset families.
//!
//! Every family draws from a `ChaCha8Rng` seeded with `DatasetSpec::seed`, so a
//! spec maps to the same points on every platform. Coordinates are laid out
//! in the unit square and multiplied by `scale`. Samples are assigned to
//! classes round-robin (sample `n` gets class `n mod K + 1`), which keeps
//! classes balanced and guarantees each class is non-empty.
//!
//! Family geometry (unit-square coordinates before scaling):
//!
//! * `Blob`: Gaussian clusters centred at (0.3, 0.7) and (0.7, 0.3), standard
//!   deviation 0.06, rejection-clipped to radius 3 sd. The clusters sit on
//!   opposite sides of the diagonal through the origin, so the data is
//!   separable both with and without an offset.
//! * `Plate`: uniform rectangles [0.05, 0.95] x [0.55, 0.75] and
//!   [0.05, 0.95] x [0.25, 0.45].
//! * `Sector`: a disc of radius 0.5 around (0.5, 0.5) split into the upper and
//!   lower half, with a 0.2 rad angular gap on each side.
//! * `SectorOverlap`: the same disc with each half widened by 0.35 rad, so the
//!   wedges overlap along the horizontal diameter.
//! * `Moon`: two interleaving half circles with Gaussian noise (sd 0.1 in moon
//!   units), mapped from [-1, 2] x [-0.5, 1] onto the unit square.
//! * `MulticlassBlob`: `K` Gaussian clusters (sd 0.05, clipped at 3 sd) with
//!   centres on a circle of radius 0.35 around (0.5, 0.5).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, LabeledDataset};

const BLOB_SD: f64 = 0.06;
const MULTI_BLOB_SD: f64 = 0.05;
const MULTI_BLOB_RADIUS: f64 = 0.35;
const CLIP_SDS: f64 = 3.0;
const SECTOR_GAP: f64 = 0.2;
const SECTOR_OVERLAP: f64 = 0.35;
const MOON_NOISE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Plate,
    Blob,
    Sector,
    SectorOverlap,
    Moon,
    MulticlassBlob,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Plate,
        Family::Blob,
        Family::Sector,
        Family::SectorOverlap,
        Family::Moon,
        Family::MulticlassBlob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Plate => "plate",
            Family::Blob => "blob",
            Family::Sector => "sector",
            Family::SectorOverlap => "sector-overlap",
            Family::Moon => "moon",
            Family::MulticlassBlob => "multiclass-blob",
        }
    }

    /// Whether the family is linearly separable in the input space by construction.
    pub fn separable_by_construction(self) -> bool {
        !matches!(self, Family::SectorOverlap | Family::Moon)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == key || f.name().replace('-', "") == key)
            .ok_or_else(|| DataError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub family: Family,
    pub sample_count: usize,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_class_count")]
    pub class_count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_scale() -> f64 {
    100.0
}

fn default_class_count() -> usize {
    2
}

impl DatasetSpec {
    pub fn new(family: Family, sample_count: usize, scale: f64, seed: u64) -> Self {
        Self {
            family,
            sample_count,
            scale,
            class_count: 2,
            seed,
        }
    }

    pub fn with_classes(mut self, class_count: usize) -> Self {
        self.class_count = class_count;
        self
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(DataError::InvalidSpec(format!("scale must be positive, got {}", self.scale)));
        }
        if self.class_count < 2 {
            return Err(DataError::InvalidSpec(format!(
                "class_count must be >= 2, got {}",
                self.class_count
            )));
        }
        if self.family != Family::MulticlassBlob && self.class_count != 2 {
            return Err(DataError::InvalidSpec(format!(
                "family {} is binary; class_count must be 2",
                self.family
            )));
        }
        if self.sample_count < self.class_count {
            return Err(DataError::InvalidSpec(format!(
                "sample_count {} < class_count {}",
                self.sample_count, self.class_count
            )));
        }
        Ok(())
    }
}

pub fn generate(spec: &DatasetSpec) -> Result<LabeledDataset, DataError> {
    spec.validate()?;
    let n = spec.sample_count;
    let k = spec.class_count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Array2::<f64>::zeros((2, n));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        let (x, y) = match spec.family {
            Family::Blob => {
                let centre = if class == 0 { (0.3, 0.7) } else { (0.7, 0.3) };
                clipped_gaussian(&mut rng, centre, BLOB_SD)
            }
            Family::MulticlassBlob => {
                let angle = 2.0 * PI * class as f64 / k as f64 + PI / 2.0;
                let centre = (
                    0.5 + MULTI_BLOB_RADIUS * angle.cos(),
                    0.5 + MULTI_BLOB_RADIUS * angle.sin(),
                );
                clipped_gaussian(&mut rng, centre, MULTI_BLOB_SD)
            }
            Family::Plate => {
                let x = rng.random_range(0.05..=0.95);
                let y = if class == 0 {
                    rng.random_range(0.55..=0.75)
                } else {
                    rng.random_range(0.25..=0.45)
                };
                (x, y)
            }
            Family::Sector => sector_point(&mut rng, class, -SECTOR_GAP / 2.0),
            Family::SectorOverlap => sector_point(&mut rng, class, SECTOR_OVERLAP),
            Family::Moon => moon_point(&mut rng, class),
        };
        points[[0, i]] = x * spec.scale;
        points[[1, i]] = y * spec.scale;
        labels.push(class + 1);
    }
    LabeledDataset::new(points, labels, k)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn clipped_gaussian(rng: &mut ChaCha8Rng, centre: (f64, f64), sd: f64) -> (f64, f64) {
    loop {
        let dx = gaussian(rng);
        let dy = gaussian(rng);
        if dx * dx + dy * dy <= CLIP_SDS * CLIP_SDS {
            return (centre.0 + sd * dx, centre.1 + sd * dy);
        }
    }
}

/// Point in the upper (class 0) or lower (class 1) half-disc. `widen` extends
/// each half by that many radians on both sides (negative values open a gap).
fn sector_point(rng: &mut ChaCha8Rng, class: usize, widen: f64) -> (f64, f64) {
    let lo = -widen;
    let hi = PI + widen;
    let angle = rng.random_range(lo..=hi) + if class == 0 { 0.0 } else { PI };
    let radius = 0.5 * rng.random::<f64>().sqrt();
    (0.5 + radius * angle.cos(), 0.5 + radius * angle.sin())
}

fn moon_point(rng: &mut ChaCha8Rng, class: usize) -> (f64, f64) {
    let theta = rng.random_range(0.0..=PI);
    let (mx, my) = if class == 0 {
        (theta.cos(), theta.sin())
    } else {
        (1.0 - theta.cos(), 0.5 - theta.sin())
    };
    let mx = mx + MOON_NOISE * gaussian(rng);
    let my = my + MOON_NOISE * gaussian(rng);
    ((mx + 1.0) / 3.0, (my + 0.5) / 1.5)
}
