use rayon::prelude::*;

use super::splat::{check_sorted, footprint_radius2, Splat2D, ALPHA_CAP};
use super::tiles::{bin_to_tiles, PixelBox, TileIndex};
use super::{BevFeatureMap, RasterConfig};
use crate::error::{Error, Result};
use crate::geometry::BevGridSpec;

/// State saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct RasterAux {
    /// Final transmittance per cell, row-major `H × W`.
    pub transmittance: Vec<f64>,
    /// Number of splats composited at each cell.
    pub contributors: Vec<u32>,
    pub tiles: TileIndex,
    pub config: RasterConfig,
    pub n_splats: usize,
    pub dim: usize,
}

#[inline]
pub(crate) fn mahalanobis(s: &Splat2D, dx: f64, dy: f64) -> f64 {
    let a = s.inv_cov2[(0, 0)];
    let b = 0.5 * (s.inv_cov2[(0, 1)] + s.inv_cov2[(1, 0)]);
    let c = s.inv_cov2[(1, 1)];
    a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
}

/// Squared Mahalanobis cull radius for `s` (infinite when culling is off).
#[inline]
pub(crate) fn cull_radius2(s: &Splat2D, cutoff: Option<f64>) -> f64 {
    match cutoff {
        None => f64::INFINITY,
        Some(c) => footprint_radius2(s.opacity, c).unwrap_or(f64::NEG_INFINITY),
    }
}

/// Alpha of `s` at cell centre offset `(dx, dy)` and its uncapped Gaussian
/// factor, or `None` if the pair is culled.
#[inline]
pub(crate) fn eval_alpha(s: &Splat2D, dx: f64, dy: f64, r2: f64) -> Option<(f64, f64)> {
    let q = mahalanobis(s, dx, dy);
    if q > r2 {
        return None;
    }
    let e = (-0.5 * q).exp();
    Some(((s.opacity * e).min(ALPHA_CAP), e))
}

pub(crate) fn validate(splats: &[Splat2D], dim: usize, cfg: &RasterConfig) -> Result<()> {
    check_sorted(splats, cfg.sort)?;
    if let Some(s) = splats.iter().find(|s| s.feature.len() != dim) {
        return Err(Error::ShapeMismatch {
            context: "splat feature",
            expected: vec![dim],
            got: vec![s.feature.len()],
        });
    }
    if cfg.tile_size == 0 {
        return Err(Error::invalid("tile size", "must be positive"));
    }
    Ok(())
}

struct TileOut {
    feat: Vec<f64>,
    t: Vec<f64>,
    count: Vec<u32>,
}

/// `y += a·x`, four lanes at a time.
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    let mut yc = y.chunks_exact_mut(4);
    let mut xc = x.chunks_exact(4);
    for (y4, x4) in (&mut yc).zip(&mut xc) {
        y4[0] += a * x4[0];
        y4[1] += a * x4[1];
        y4[2] += a * x4[2];
        y4[3] += a * x4[3];
    }
    for (y1, x1) in yc.into_remainder().iter_mut().zip(xc.remainder()) {
        *y1 += a * x1;
    }
}

fn render_tile(
    splats: &[Splat2D],
    tiles: &TileIndex,
    tb: &PixelBox,
    list: &[u32],
    dim: usize,
    cfg: &RasterConfig,
) -> TileOut {
    let w = tb.col1 - tb.col0;
    let n = w * (tb.row1 - tb.row0);
    let mut t = vec![1.0; n];
    let mut feat = vec![0.0; n * dim];
    let mut count = vec![0u32; n];
    let mut done = vec![false; n];
    let mut live = n;
    let stop = cfg.transmittance_stop.unwrap_or(f64::NEG_INFINITY);
    for &si in list {
        if live == 0 {
            break;
        }
        let s = &splats[si as usize];
        let Some(b) = tiles.boxes[si as usize].and_then(|b| b.intersect(tb)) else {
            continue;
        };
        let r2 = cull_radius2(s, cfg.alpha_cutoff);
        for row in b.row0..b.row1 {
            let dy = row as f64 + 0.5 - s.mean2.y;
            let base = (row - tb.row0) * w;
            for col in b.col0..b.col1 {
                let p = base + col - tb.col0;
                if done[p] {
                    continue;
                }
                let dx = col as f64 + 0.5 - s.mean2.x;
                let Some((alpha, _)) = eval_alpha(s, dx, dy, r2) else {
                    continue;
                };
                let weight = alpha * t[p];
                axpy(weight, &s.feature, &mut feat[p * dim..(p + 1) * dim]);
                t[p] *= 1.0 - alpha;
                count[p] += 1;
                if t[p] < stop {
                    done[p] = true;
                    live -= 1;
                }
            }
        }
    }
    TileOut { feat, t, count }
}

/// Alpha-composites `splats`, which must already be in `cfg.sort` order.
pub fn rasterize_forward(
    splats: &[Splat2D],
    dim: usize,
    grid: &BevGridSpec,
    cfg: &RasterConfig,
) -> Result<(BevFeatureMap, RasterAux)> {
    validate(splats, dim, cfg)?;
    let tiles = bin_to_tiles(splats, grid, cfg.tile_size, cfg.alpha_cutoff);
    let outs: Vec<TileOut> = (0..tiles.num_tiles())
        .into_par_iter()
        .map(|tile| {
            render_tile(
                splats,
                &tiles,
                &tiles.tile_box(tile, grid),
                &tiles.lists[tile],
                dim,
                cfg,
            )
        })
        .collect();

    let mut map = BevFeatureMap::zeros(dim, *grid);
    let mut transmittance = vec![1.0; grid.cells()];
    let mut contributors = vec![0u32; grid.cells()];
    let plane = grid.cells();
    let width = grid.width();
    let data = map.data_mut();
    for (tile, out) in outs.into_iter().enumerate() {
        let tb = tiles.tile_box(tile, grid);
        let w = tb.col1 - tb.col0;
        for row in tb.row0..tb.row1 {
            for col in tb.col0..tb.col1 {
                let p = (row - tb.row0) * w + (col - tb.col0);
                let cell = row * width + col;
                transmittance[cell] = out.t[p];
                contributors[cell] = out.count[p];
                for c in 0..dim {
                    data[c * plane + cell] = out.feat[p * dim + c];
                }
            }
        }
    }
    let aux = RasterAux {
        transmittance,
        contributors,
        tiles,
        config: *cfg,
        n_splats: splats.len(),
        dim,
    };
    Ok((map, aux))
}
