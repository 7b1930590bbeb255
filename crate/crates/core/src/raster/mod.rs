//! Differentiable orthographic splatting onto the BEV grid.
//!
//! Gaussians are marginalized over z, sorted by a blend key and alpha
//! composited front to back per cell:
//! `F = Σᵢ fᵢ·α′ᵢ·Πⱼ<ᵢ(1 − α′ⱼ)`.
//! The forward pass is tiled (16×16 cells by default) and parallel over
//! tiles; each cell sees its splats in strict sorted order, so the output is
//! bitwise independent of the thread count.

mod backward;
mod forward;
mod map;
mod splat;
mod tiles;

pub use backward::{rasterize_backward, SplatGrad};
pub use forward::{rasterize_forward, RasterAux};
pub use map::BevFeatureMap;
pub use splat::{
    alpha_at, chain_to_3d, check_sorted, footprint_radius2, project_orthographic, sort_splats,
    GaussianGrad, SortOrder, Splat2D, ALPHA_CAP,
};
pub use tiles::{bin_to_tiles, PixelBox, TileIndex};

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{BevGridSpec, Gaussian3D};

/// Opacity threshold used for pruning; the default contribution cutoff is
/// the value of a Gaussian of this opacity at three standard deviations.
pub const DEFAULT_ALPHA_MIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterConfig {
    pub sort: SortOrder,
    /// Splat-cell pairs with `α′` below this are skipped. `None` disables
    /// culling: every splat touches every cell.
    pub alpha_cutoff: Option<f64>,
    /// Compositing at a cell stops once transmittance falls below this.
    pub transmittance_stop: Option<f64>,
    pub tile_size: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            sort: SortOrder::ZDesc,
            alpha_cutoff: Some(DEFAULT_ALPHA_MIN * (-4.5_f64).exp()),
            transmittance_stop: Some(1e-4),
            tile_size: 16,
        }
    }
}

impl RasterConfig {
    /// No culling and no early termination; output is the exact blend.
    pub fn exact() -> Self {
        Self {
            alpha_cutoff: None,
            transmittance_stop: None,
            ..Self::default()
        }
    }
}

/// Projects, sorts and rasterizes a batch. Returns the splats in blend order
/// alongside the map so callers can run the backward pass.
pub fn render(
    gaussians: &[Gaussian3D],
    dim: usize,
    grid: &BevGridSpec,
    cfg: &RasterConfig,
) -> Result<(BevFeatureMap, RasterAux, Vec<Splat2D>)> {
    let mut splats: Vec<Splat2D> = gaussians
        .par_iter()
        .enumerate()
        .map(|(i, g)| project_orthographic(g, grid, i))
        .collect::<Result<_>>()?;
    sort_splats(&mut splats, cfg.sort);
    let (map, aux) = rasterize_forward(&splats, dim, grid, cfg)?;
    Ok((map, aux, splats))
}
