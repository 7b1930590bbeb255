use rayon::prelude::*;

use super::splat::{footprint_radius2, Splat2D};
use crate::geometry::BevGridSpec;

/// Half-open cell rectangle `[row0, row1) × [col0, col1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelBox {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl PixelBox {
    pub fn intersect(&self, other: &PixelBox) -> Option<PixelBox> {
        let b = PixelBox {
            row0: self.row0.max(other.row0),
            row1: self.row1.min(other.row1),
            col0: self.col0.max(other.col0),
            col1: self.col1.min(other.col1),
        };
        (b.row0 < b.row1 && b.col0 < b.col1).then_some(b)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row1 && col >= self.col0 && col < self.col1
    }
}

/// Per-tile lists of splat indices, each in blend order.
#[derive(Clone, Debug, PartialEq)]
pub struct TileIndex {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Cells each splat may touch; `None` when it reaches no cell.
    pub boxes: Vec<Option<PixelBox>>,
    /// Row-major over tiles.
    pub lists: Vec<Vec<u32>>,
}

impl TileIndex {
    pub fn tile_box(&self, tile: usize, grid: &BevGridSpec) -> PixelBox {
        let (ty, tx) = (tile / self.tiles_x, tile % self.tiles_x);
        PixelBox {
            row0: ty * self.tile_size,
            row1: ((ty + 1) * self.tile_size).min(grid.height()),
            col0: tx * self.tile_size,
            col1: ((tx + 1) * self.tile_size).min(grid.width()),
        }
    }

    pub fn num_tiles(&self) -> usize {
        self.lists.len()
    }
}

/// Cell range whose centres fall within the splat's cutoff ellipse.
pub(crate) fn splat_box(s: &Splat2D, grid: &BevGridSpec, cutoff: Option<f64>) -> Option<PixelBox> {
    let full = PixelBox {
        row0: 0,
        row1: grid.height(),
        col0: 0,
        col1: grid.width(),
    };
    let Some(cutoff) = cutoff else {
        return Some(full);
    };
    let r2 = footprint_radius2(s.opacity, cutoff)?;
    let hx = (r2 * s.cov2[(0, 0)]).sqrt() * (1.0 + 1e-9) + 1e-9;
    let hy = (r2 * s.cov2[(1, 1)]).sqrt() * (1.0 + 1e-9) + 1e-9;
    let range = |center: f64, half: f64, n: usize| -> Option<(usize, usize)> {
        let lo = (center - half - 0.5).ceil().max(0.0);
        let hi = (center + half - 0.5).floor().min(n as f64 - 1.0);
        (lo <= hi).then(|| (lo as usize, hi as usize + 1))
    };
    let (col0, col1) = range(s.mean2.x, hx, grid.width())?;
    let (row0, row1) = range(s.mean2.y, hy, grid.height())?;
    Some(PixelBox {
        row0,
        row1,
        col0,
        col1,
    })
}

/// Lists each splat in every tile its cutoff bounding box intersects.
pub fn bin_to_tiles(
    splats: &[Splat2D],
    grid: &BevGridSpec,
    tile_size: usize,
    cutoff: Option<f64>,
) -> TileIndex {
    assert!(tile_size > 0, "tile size must be positive");
    let tiles_x = grid.width().div_ceil(tile_size);
    let tiles_y = grid.height().div_ceil(tile_size);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    let boxes: Vec<Option<PixelBox>> = splats
        .par_iter()
        .map(|s| splat_box(s, grid, cutoff))
        .collect();
    for (i, b) in boxes.iter().enumerate() {
        let Some(b) = b else { continue };
        for ty in b.row0 / tile_size..=(b.row1 - 1) / tile_size {
            for tx in b.col0 / tile_size..=(b.col1 - 1) / tile_size {
                lists[ty * tiles_x + tx].push(i as u32);
            }
        }
    }
    TileIndex {
        tile_size,
        tiles_x,
        tiles_y,
        boxes,
        lists,
    }
}
