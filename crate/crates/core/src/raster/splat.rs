use rayon::prelude::*;

use crate::camera_lift::COV_FLOOR;
use crate::error::{Error, Result};
use crate::geometry::{sym_eigen2, world_to_bev, BevGridSpec, Gaussian3D, Mat2, Mat3, Vec2, Vec3};

/// Upper bound on a splat's per-cell alpha; keeps transmittance positive.
pub const ALPHA_CAP: f64 = 0.999;

/// A Gaussian after orthographic top-down projection, in cell units.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub mean2: Vec2,
    pub cov2: Mat2,
    pub inv_cov2: Mat2,
    pub opacity: f64,
    pub feature: Vec<f64>,
    /// Ego z of the source Gaussian, m.
    pub sort_key: f64,
    pub source_index: usize,
}

/// Blend order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SortOrder {
    /// Highest Gaussian first.
    #[default]
    ZDesc,
    ZAsc,
    OpacityDesc,
}

impl SortOrder {
    pub fn name(&self) -> &'static str {
        match self {
            SortOrder::ZDesc => "z-desc",
            SortOrder::ZAsc => "z-asc",
            SortOrder::OpacityDesc => "opacity-desc",
        }
    }

    /// Key that sorts ascending into blend order.
    fn key(&self, s: &Splat2D) -> f64 {
        match self {
            SortOrder::ZDesc => -s.sort_key,
            SortOrder::ZAsc => s.sort_key,
            SortOrder::OpacityDesc => -s.opacity,
        }
    }
}

impl std::str::FromStr for SortOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z-desc" => Ok(SortOrder::ZDesc),
            "z-asc" => Ok(SortOrder::ZAsc),
            "opacity-desc" => Ok(SortOrder::OpacityDesc),
            other => Err(Error::invalid("sort order", other.to_string())),
        }
    }
}

/// Stable sort into blend order; ties keep ascending `source_index`.
pub fn sort_splats(splats: &mut [Splat2D], order: SortOrder) {
    // The key is total (source index breaks ties), so an unstable parallel
    // sort still yields one order.
    splats.par_sort_unstable_by(|a, b| {
        order
            .key(a)
            .total_cmp(&order.key(b))
            .then(a.source_index.cmp(&b.source_index))
    });
}

pub fn check_sorted(splats: &[Splat2D], order: SortOrder) -> Result<()> {
    match splats
        .windows(2)
        .position(|w| order.key(&w[0]) > order.key(&w[1]))
    {
        Some(i) => Err(Error::Unsorted(order.name(), i + 1)),
        None => Ok(()),
    }
}

pub(crate) fn cell_floor(grid: &BevGridSpec) -> f64 {
    COV_FLOOR / (grid.resolution() * grid.resolution())
}

/// Eigenvalue floor on a symmetric 2×2 matrix.
pub(crate) fn clamp_sym2(m: &Mat2, floor: f64) -> Mat2 {
    let e = sym_eigen2(m);
    if e.values.x >= floor {
        return *m;
    }
    let v = e.values.map(|l| l.max(floor));
    let c = e.vectors * Mat2::from_diagonal(&v) * e.vectors.transpose();
    (c + c.transpose()) * 0.5
}

/// Gradient through [`clamp_sym2`] (identity when nothing is clamped).
pub(crate) fn clamp_sym2_backward(m: &Mat2, floor: f64, grad: &Mat2) -> Mat2 {
    let e = sym_eigen2(m);
    if e.values.x >= floor {
        return *grad;
    }
    let lam = e.values;
    let f = lam.map(|l| l.max(floor));
    let df = lam.map(|l| if l > floor { 1.0 } else { 0.0 });
    let phi = Mat2::from_fn(|i, j| {
        if i == j || (lam[i] - lam[j]).abs() < 1e-12 {
            0.5 * (df[i] + df[j])
        } else {
            (f[i] - f[j]) / (lam[i] - lam[j])
        }
    });
    let g = (grad + grad.transpose()) * 0.5;
    let inner = e.vectors.transpose() * g * e.vectors;
    e.vectors * inner.component_mul(&phi) * e.vectors.transpose()
}

fn raw_cov2(g: &Gaussian3D, grid: &BevGridSpec) -> Mat2 {
    let r2 = grid.resolution() * grid.resolution();
    let c = &g.cov;
    let off = 0.5 * (c[(0, 1)] + c[(1, 0)]);
    Mat2::new(c[(0, 0)], off, off, c[(1, 1)]) / r2
}

/// Top-down projection: drops z from the mean and marginalizes z out of
/// the covariance, both converted to cell units.
pub fn project_orthographic(
    g: &Gaussian3D,
    grid: &BevGridSpec,
    source_index: usize,
) -> Result<Splat2D> {
    crate::error::ensure_finite("gaussian mean", g.mean.as_slice())?;
    crate::error::ensure_finite("gaussian covariance", g.cov.as_slice())?;
    let cov2 = clamp_sym2(&raw_cov2(g, grid), cell_floor(grid));
    let inv_cov2 = cov2
        .try_inverse()
        .ok_or_else(|| Error::invalid("splat covariance", "singular after clamp"))?;
    Ok(Splat2D {
        mean2: world_to_bev(&g.mean, grid),
        cov2,
        inv_cov2,
        opacity: g.opacity,
        feature: g.feature.clone(),
        sort_key: g.mean.z,
        source_index,
    })
}

/// Capped per-cell alpha of `s` at cell-space point `q`.
pub fn alpha_at(s: &Splat2D, q: &Vec2) -> f64 {
    let d = q - s.mean2;
    (s.opacity * (-0.5 * super::forward::mahalanobis(s, d.x, d.y)).exp()).min(ALPHA_CAP)
}

/// Squared Mahalanobis radius inside which `α′ ≥ cutoff`; `None` means the
/// splat never reaches the cutoff.
pub fn footprint_radius2(opacity: f64, cutoff: f64) -> Option<f64> {
    (opacity >= cutoff && opacity > 0.0).then(|| 2.0 * (opacity / cutoff).ln())
}

/// Gradient of a loss with respect to one 3D Gaussian. Covariance gradients
/// are symmetric, `dL = ⟨G, dΣ⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianGrad {
    pub mean: Vec3,
    pub cov: Mat3,
    pub opacity: f64,
    pub feature: Vec<f64>,
}

impl GaussianGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mean: Vec3::zeros(),
            cov: Mat3::zeros(),
            opacity: 0.0,
            feature: vec![0.0; dim],
        }
    }
}

/// Pulls splat gradients back through [`project_orthographic`].
pub fn chain_to_3d(g: &Gaussian3D, grid: &BevGridSpec, grad: &super::SplatGrad) -> GaussianGrad {
    let res = grid.resolution();
    let d_raw = clamp_sym2_backward(&raw_cov2(g, grid), cell_floor(grid), &grad.cov2) / (res * res);
    let mut cov = Mat3::zeros();
    cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&d_raw);
    GaussianGrad {
        mean: Vec3::new(grad.mean2.x / res, grad.mean2.y / res, 0.0),
        cov,
        opacity: grad.opacity,
        feature: grad.feature.clone(),
    }
}
