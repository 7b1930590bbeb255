use rayon::prelude::*;

use super::forward::{cull_radius2, eval_alpha, validate, RasterAux};
use super::splat::{Splat2D, ALPHA_CAP};
use super::BevFeatureMap;
use crate::error::{Error, Result};
use crate::geometry::{BevGridSpec, Mat2, Vec2};

/// Gradient with respect to one projected splat. `cov2` is symmetric with
/// `dL = ⟨cov2, dΣ₂⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGrad {
    pub feature: Vec<f64>,
    pub opacity: f64,
    pub mean2: Vec2,
    pub cov2: Mat2,
}

impl SplatGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            feature: vec![0.0; dim],
            opacity: 0.0,
            mean2: Vec2::zeros(),
            cov2: Mat2::zeros(),
        }
    }
}

/// Per list-slot partials for one tile. The inverse-covariance gradient is
/// kept as `(xx, xy, yy)` and converted to a covariance gradient at the end.
struct TilePartial {
    feature: Vec<f64>,
    opacity: Vec<f64>,
    mean: Vec<[f64; 2]>,
    inv: Vec<[f64; 3]>,
}

struct Contribution {
    pixel: u32,
    slot: u32,
    alpha: f64,
    t_before: f64,
    gauss: f64,
    dx: f64,
    dy: f64,
}

/// Replays the forward pass of one tile, recording every splat-cell
/// contribution, then scans each cell back to front.
fn tile_backward(
    splats: &[Splat2D],
    aux: &RasterAux,
    tile: usize,
    grid: &BevGridSpec,
    grad: &BevFeatureMap,
) -> Result<TilePartial> {
    let cfg = &aux.config;
    let dim = aux.dim;
    let list = &aux.tiles.lists[tile];
    let tb = aux.tiles.tile_box(tile, grid);
    let mut part = TilePartial {
        feature: vec![0.0; list.len() * dim],
        opacity: vec![0.0; list.len()],
        mean: vec![[0.0; 2]; list.len()],
        inv: vec![[0.0; 3]; list.len()],
    };
    if list.is_empty() {
        return Ok(part);
    }
    let w = tb.col1 - tb.col0;
    let n = w * (tb.row1 - tb.row0);
    let mut t = vec![1.0; n];
    let mut done = vec![false; n];
    let mut count = vec![0u32; n];
    let mut recorded: Vec<Contribution> = Vec::new();
    for (slot, &si) in list.iter().enumerate() {
        let s = &splats[si as usize];
        let Some(b) = aux.tiles.boxes[si as usize].and_then(|b| b.intersect(&tb)) else {
            continue;
        };
        let r2 = cull_radius2(s, cfg.alpha_cutoff);
        for row in b.row0..b.row1 {
            let dy = row as f64 + 0.5 - s.mean2.y;
            for col in b.col0..b.col1 {
                let p = (row - tb.row0) * w + (col - tb.col0);
                if done[p] {
                    continue;
                }
                let dx = col as f64 + 0.5 - s.mean2.x;
                let Some((alpha, gauss)) = eval_alpha(s, dx, dy, r2) else {
                    continue;
                };
                recorded.push(Contribution {
                    pixel: p as u32,
                    slot: slot as u32,
                    alpha,
                    t_before: t[p],
                    gauss,
                    dx,
                    dy,
                });
                t[p] *= 1.0 - alpha;
                count[p] += 1;
                if cfg.transmittance_stop.is_some_and(|stop| t[p] < stop) {
                    done[p] = true;
                }
            }
        }
    }

    // Stable counting sort by cell keeps each cell's blend order.
    let mut start = vec![0usize; n + 1];
    for c in &recorded {
        start[c.pixel as usize + 1] += 1;
    }
    for p in 0..n {
        start[p + 1] += start[p];
    }
    let mut order = vec![0u32; recorded.len()];
    let mut next = start.clone();
    for (k, c) in recorded.iter().enumerate() {
        order[next[c.pixel as usize]] = k as u32;
        next[c.pixel as usize] += 1;
    }

    let plane = grid.cells();
    let mut g = vec![0.0; dim];
    for p in 0..n {
        let (row, col) = (tb.row0 + p / w, tb.col0 + p % w);
        let cell = row * grid.width() + col;
        if count[p] != aux.contributors[cell] {
            return Err(Error::AuxMismatch(format!(
                "cell ({row}, {col}) replays {} contributors, forward saw {}",
                count[p], aux.contributors[cell]
            )));
        }
        for (c, gc) in g.iter_mut().enumerate() {
            *gc = grad.data()[c * plane + cell];
        }
        // Σ_{j>i} (g·f_j) α_j T_j, accumulated back to front.
        let mut acc = 0.0;
        for &k in order[start[p]..start[p + 1]].iter().rev() {
            let c = &recorded[k as usize];
            let slot = c.slot as usize;
            let s = &splats[list[slot] as usize];
            let gf: f64 = g.iter().zip(&s.feature).map(|(a, b)| a * b).sum();
            let wgt = c.alpha * c.t_before;
            for (df, gc) in part.feature[slot * dim..(slot + 1) * dim]
                .iter_mut()
                .zip(&g)
            {
                *df += gc * wgt;
            }
            let d_alpha = c.t_before * gf - acc / (1.0 - c.alpha);
            acc += gf * wgt;
            if s.opacity * c.gauss > ALPHA_CAP {
                continue;
            }
            part.opacity[slot] += d_alpha * c.gauss;
            // α = o·exp(-q/2), q = dᵀ A d, d = cell − μ
            let dq = -0.5 * d_alpha * c.alpha;
            let a = &s.inv_cov2;
            let b = 0.5 * (a[(0, 1)] + a[(1, 0)]);
            let ad = [a[(0, 0)] * c.dx + b * c.dy, b * c.dx + a[(1, 1)] * c.dy];
            part.mean[slot][0] -= dq * 2.0 * ad[0];
            part.mean[slot][1] -= dq * 2.0 * ad[1];
            part.inv[slot][0] += dq * c.dx * c.dx;
            part.inv[slot][1] += dq * c.dx * c.dy;
            part.inv[slot][2] += dq * c.dy * c.dy;
        }
    }
    Ok(part)
}

/// Gradients of a loss with respect to each splat, given `dL/dF` at every
/// cell. `splats` and `aux` must come from the same forward call. Results
/// are indexed like `splats`.
pub fn rasterize_backward(
    splats: &[Splat2D],
    grid: &BevGridSpec,
    aux: &RasterAux,
    grad: &BevFeatureMap,
) -> Result<Vec<SplatGrad>> {
    if splats.len() != aux.n_splats {
        return Err(Error::AuxMismatch(format!(
            "{} splats, forward pass saw {}",
            splats.len(),
            aux.n_splats
        )));
    }
    validate(splats, aux.dim, &aux.config)?;
    if grad.channels() != aux.dim || grad.grid() != grid || aux.transmittance.len() != grid.cells()
    {
        return Err(Error::ShapeMismatch {
            context: "feature-map gradient",
            expected: vec![aux.dim, grid.height(), grid.width()],
            got: grad.shape().to_vec(),
        });
    }
    crate::error::ensure_finite("feature-map gradient", grad.data())?;
    let parts: Vec<TilePartial> = (0..aux.tiles.num_tiles())
        .into_par_iter()
        .map(|tile| tile_backward(splats, aux, tile, grid, grad))
        .collect::<Result<_>>()?;

    let dim = aux.dim;
    let mut out = vec![SplatGrad::zeros(dim); splats.len()];
    let mut inv = vec![[0.0; 3]; splats.len()];
    for (tile, part) in parts.iter().enumerate() {
        for (slot, &si) in aux.tiles.lists[tile].iter().enumerate() {
            let si = si as usize;
            let o = &mut out[si];
            for (a, b) in o
                .feature
                .iter_mut()
                .zip(&part.feature[slot * dim..(slot + 1) * dim])
            {
                *a += b;
            }
            o.opacity += part.opacity[slot];
            o.mean2.x += part.mean[slot][0];
            o.mean2.y += part.mean[slot][1];
            for (a, b) in inv[si].iter_mut().zip(&part.inv[slot]) {
                *a += b;
            }
        }
    }
    for ((o, s), d) in out.iter_mut().zip(splats).zip(&inv) {
        let g_inv = Mat2::new(d[0], d[1], d[1], d[2]);
        let a = &s.inv_cov2;
        let g = -(a.transpose() * g_inv * a.transpose());
        o.cov2 = (g + g.transpose()) * 0.5;
    }
    Ok(out)
}
