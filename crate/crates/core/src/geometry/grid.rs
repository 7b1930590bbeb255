use serde::{Deserialize, Serialize};

use super::{Vec2, Vec3};
use crate::error::{ensure_finite, Error, Result};

/// Metric extent and resolution of the BEV grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct BevGridSpec {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    resolution: f64,
    height: usize,
    width: usize,
}

impl BevGridSpec {
    /// Rejects extents that are not an integer number of cells.
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, resolution: f64) -> Result<Self> {
        ensure_finite("grid spec", &[x_min, x_max, y_min, y_max, resolution])?;
        if resolution <= 0.0 {
            return Err(Error::invalid("grid resolution", format!("{resolution}")));
        }
        let cells = |lo: f64, hi: f64, axis: &str| -> Result<usize> {
            let n = (hi - lo) / resolution;
            let rounded = n.round();
            if rounded < 1.0 || (n - rounded).abs() > 1e-9 * rounded.max(1.0) {
                return Err(Error::invalid(
                    "grid extent",
                    format!(
                        "{axis} extent {lo}..{hi} is not a whole number of {resolution} m cells"
                    ),
                ));
            }
            Ok(rounded as usize)
        };
        let width = cells(x_min, x_max, "x")?;
        let height = cells(y_min, y_max, "y")?;
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            resolution,
            height,
            width,
        })
    }

    /// Square grid `[-range, range]²`.
    pub fn square(range: f64, resolution: f64) -> Result<Self> {
        Self::new(-range, range, -range, range, resolution)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }
    pub fn resolution(&self) -> f64 {
        self.resolution
    }
    /// Rows (cells along y).
    pub fn height(&self) -> usize {
        self.height
    }
    /// Columns (cells along x).
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Ego-frame (x, y) of the centre of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x_min + (col as f64 + 0.5) * self.resolution,
            self.y_min + (row as f64 + 0.5) * self.resolution,
        )
    }
}

impl Default for BevGridSpec {
    /// ±50 m at 0.5 m, 200×200 cells.
    fn default() -> Self {
        Self::square(50.0, 0.5).expect("default grid is valid")
    }
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    resolution: f64,
}

impl From<BevGridSpec> for GridRepr {
    fn from(g: BevGridSpec) -> Self {
        GridRepr {
            x_min: g.x_min,
            x_max: g.x_max,
            y_min: g.y_min,
            y_max: g.y_max,
            resolution: g.resolution,
        }
    }
}

impl TryFrom<GridRepr> for BevGridSpec {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        BevGridSpec::new(r.x_min, r.x_max, r.y_min, r.y_max, r.resolution)
    }
}

/// Continuous cell coordinates `(col, row)` of an ego point; z is dropped.
pub fn world_to_bev(p: &Vec3, grid: &BevGridSpec) -> Vec2 {
    Vec2::new(
        (p.x - grid.x_min) / grid.resolution,
        (p.y - grid.y_min) / grid.resolution,
    )
}

/// Uniform depth discretization with bin midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthBinSpec {
    d_min: f64,
    d_max: f64,
    centers: Vec<f64>,
}

impl DepthBinSpec {
    pub fn new(bins: usize, d_min: f64, d_max: f64) -> Result<Self> {
        ensure_finite("depth bins", &[d_min, d_max])?;
        if bins == 0 {
            return Err(Error::invalid("depth bins", "need at least one bin"));
        }
        if !(d_min >= 0.0 && d_max > d_min) {
            return Err(Error::invalid("depth range", format!("[{d_min}, {d_max}]")));
        }
        let width = (d_max - d_min) / bins as f64;
        let centers = (0..bins)
            .map(|b| d_min + (b as f64 + 0.5) * width)
            .collect();
        Ok(Self {
            d_min,
            d_max,
            centers,
        })
    }

    /// Explicit centres, for tests and hand-built examples. Must be strictly
    /// increasing.
    pub fn from_centers(centers: Vec<f64>) -> Result<Self> {
        ensure_finite("depth bin centres", &centers)?;
        if centers.is_empty() || centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "depth bin centres",
                "must be non-empty and strictly increasing",
            ));
        }
        let n = centers.len();
        let half = if n > 1 {
            0.5 * (centers[1] - centers[0])
        } else {
            0.5
        };
        Ok(Self {
            d_min: centers[0] - half,
            d_max: centers[n - 1] + half,
            centers,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
    pub fn d_min(&self) -> f64 {
        self.d_min
    }
    pub fn d_max(&self) -> f64 {
        self.d_max
    }
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
    pub fn bin_width(&self) -> f64 {
        (self.d_max - self.d_min) / self.centers.len() as f64
    }

    /// Index of the bin containing `depth`, clamped to the valid range.
    pub fn bin_of(&self, depth: f64) -> usize {
        let b = ((depth - self.d_min) / self.bin_width()).floor();
        (b.max(0.0) as usize).min(self.centers.len() - 1)
    }
}

impl Default for DepthBinSpec {
    /// 64 bins over 0.5–60 m.
    fn default() -> Self {
        Self::new(64, 0.5, 60.0).expect("default bins are valid")
    }
}
