//! Pixels to Gaussians.
//!
//! Each stride-8 feature cell of a camera view carries a depth distribution
//! over uniform bins, a metric offset, an opacity logit and a feature vector.
//! The cell centre is back-projected at the expected depth and displaced by
//! the offset. The covariance is aligned with the viewing ray: the depth
//! variance of the bin distribution along the ray, and half the metric
//! footprint of one feature cell across it.

use rayon::prelude::*;

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{
    ray_basis, Camera, DepthBinSpec, Gaussian3D, Mat3, PinholeIntrinsics, Se3Pose, Vec2, Vec3,
};
use crate::raster::GaussianGrad;

/// Floor applied to every covariance eigenvalue, m².
pub const COV_FLOOR: f64 = 1e-6;

/// Per-cell depth classification logits.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthDistribution {
    pub logits: Vec<f64>,
}

impl DepthDistribution {
    pub fn probs(&self) -> Result<Vec<f64>> {
        softmax_depth(&self.logits)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraHeadOutput {
    pub depth: DepthDistribution,
    /// Metric displacement, m.
    pub offset: Vec3,
    pub opacity_logit: f64,
    pub feature: Vec<f64>,
}

/// Head outputs for one view at feature-map resolution, row-major.
#[derive(Clone, Debug)]
pub struct HeadGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CameraHeadOutput>,
}

impl HeadGrid {
    pub fn get(&self, row: usize, col: usize) -> &CameraHeadOutput {
        &self.cells[row * self.cols + col]
    }
}

/// Source of per-view head outputs; stands in for an image backbone.
pub trait FeatureProvider {
    fn feature_dim(&self) -> usize;
    /// Head grid for `view`, shaped `(height / stride, width / stride)`.
    fn heads(&self, view: usize, camera: &Camera, stride: usize) -> Result<HeadGrid>;
}

/// How the ray depth is read out of the bin distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DepthMode {
    /// Probability-weighted mean of the bin centres.
    #[default]
    Expected,
    /// Centre of the most probable bin.
    Argmax,
}

/// What the tolerance coefficient `k` multiplies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CovScale {
    /// `Σ ← k·Σ`.
    #[default]
    Variance,
    /// Standard deviations scaled by `k`, i.e. `Σ ← k²·Σ`.
    StdDev,
}

#[derive(Clone, Debug)]
pub struct LiftConfig {
    pub bins: DepthBinSpec,
    /// Error tolerance coefficient.
    pub k: f64,
    pub alpha_min: f64,
    /// Feature-map stride in pixels.
    pub stride: usize,
    pub depth_mode: DepthMode,
    pub cov_scale: CovScale,
    /// Per-axis bound on the offset head, m.
    pub offset_clamp: f64,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            bins: DepthBinSpec::default(),
            k: 0.5,
            alpha_min: 0.01,
            stride: 8,
            depth_mode: DepthMode::Expected,
            cov_scale: CovScale::Variance,
            offset_clamp: 2.0,
        }
    }
}

impl LiftConfig {
    fn variance_scale(&self) -> f64 {
        match self.cov_scale {
            CovScale::Variance => self.k,
            CovScale::StdDev => self.k * self.k,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax_depth(logits: &[f64]) -> Result<Vec<f64>> {
    ensure_finite("depth logits", logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

pub fn expected_depth(probs: &[f64], bins: &DepthBinSpec) -> f64 {
    debug_assert_eq!(probs.len(), bins.len());
    probs.iter().zip(bins.centers()).map(|(p, c)| p * c).sum()
}

pub fn depth_variance(probs: &[f64], bins: &DepthBinSpec, d_hat: f64) -> f64 {
    probs
        .iter()
        .zip(bins.centers())
        .map(|(p, c)| p * (c - d_hat).powi(2))
        .sum()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fixed geometry of one feature cell's viewing ray.
#[derive(Clone, Debug)]
pub struct PixelRay {
    /// Camera centre in the ego frame.
    pub origin: Vec3,
    /// Ego-frame direction scaled so that `origin + d·dir` sits at z-depth `d`.
    pub dir: Vec3,
    /// Rotation whose third column is the unit ray direction.
    pub basis: Mat3,
    /// Lateral standard deviation per metre of depth, `stride / (2·fx)`.
    pub lateral_per_metre: f64,
}

impl PixelRay {
    pub fn new(u: &Vec2, intr: &PinholeIntrinsics, pose: &Se3Pose, stride: usize) -> Result<Self> {
        ensure_finite("pixel", u.as_slice())?;
        let dir = pose.transform_vector(&intr.ray(u));
        let basis = ray_basis(&dir.normalize())?;
        Ok(Self {
            origin: *pose.translation(),
            dir,
            basis,
            lateral_per_metre: stride as f64 / (2.0 * intr.fx()),
        })
    }
}

/// Intermediate values of one lift, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LiftTape {
    pub probs: Vec<f64>,
    pub depth: f64,
    pub variance_along: f64,
    pub variance_across: f64,
    along_clamped: bool,
    across_clamped: bool,
    offset_clamped: [bool; 3],
    pub opacity: f64,
}

/// Gradient of a scalar loss with respect to one cell's head outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraHeadGrad {
    pub depth_logits: Vec<f64>,
    pub offset: Vec3,
    pub opacity_logit: f64,
    pub feature: Vec<f64>,
}

/// Lifts one head output along a precomputed ray.
pub fn lift_ray(
    ray: &PixelRay,
    head: &CameraHeadOutput,
    cfg: &LiftConfig,
) -> Result<(Gaussian3D, LiftTape)> {
    if head.depth.logits.len() != cfg.bins.len() {
        return Err(Error::ShapeMismatch {
            context: "depth logits",
            expected: vec![cfg.bins.len()],
            got: vec![head.depth.logits.len()],
        });
    }
    ensure_finite("offset head", head.offset.as_slice())?;
    ensure_finite("opacity logit", &[head.opacity_logit])?;
    ensure_finite("camera feature", &head.feature)?;

    let probs = softmax_depth(&head.depth.logits)?;
    let depth = match cfg.depth_mode {
        DepthMode::Expected => expected_depth(&probs, &cfg.bins),
        DepthMode::Argmax => cfg.bins.centers()[argmax(&probs)],
    };
    let variance_along = depth_variance(&probs, &cfg.bins, depth);
    let variance_across = (ray.lateral_per_metre * depth).powi(2);

    let s = cfg.variance_scale();
    let along = s * variance_along;
    let across = s * variance_across;
    let (along_clamped, across_clamped) = (along < COV_FLOOR, across < COV_FLOOR);
    let diag = Vec3::new(
        across.max(COV_FLOOR),
        across.max(COV_FLOOR),
        along.max(COV_FLOOR),
    );
    let cov = ray.basis * Mat3::from_diagonal(&diag) * ray.basis.transpose();
    let cov = (cov + cov.transpose()) * 0.5;

    let c = cfg.offset_clamp;
    let offset_clamped = [0, 1, 2].map(|i| head.offset[i].abs() > c);
    let offset = head.offset.map(|o| o.clamp(-c, c));
    let mean = ray.origin + ray.dir * depth + offset;
    let opacity = sigmoid(head.opacity_logit);

    let gaussian = Gaussian3D {
        mean,
        cov,
        opacity,
        feature: head.feature.clone(),
    };
    let tape = LiftTape {
        probs,
        depth,
        variance_along,
        variance_across,
        along_clamped,
        across_clamped,
        offset_clamped,
        opacity,
    };
    Ok((gaussian, tape))
}

/// Chains a Gaussian-level gradient back to the head outputs of [`lift_ray`].
///
/// Clamped quantities (the covariance floor, the offset bound) pass no
/// gradient.
pub fn lift_ray_backward(
    ray: &PixelRay,
    tape: &LiftTape,
    grad: &GaussianGrad,
    cfg: &LiftConfig,
) -> CameraHeadGrad {
    let s = cfg.variance_scale();
    let m = ray.basis.transpose() * grad.cov * ray.basis;
    let d_variance_along = if tape.along_clamped {
        0.0
    } else {
        s * m[(2, 2)]
    };
    let d_variance_across = if tape.across_clamped {
        0.0
    } else {
        s * (m[(0, 0)] + m[(1, 1)])
    };

    let centers = cfg.bins.centers();
    let mut d_probs: Vec<f64> = centers
        .iter()
        .map(|&c| d_variance_along * (c - tape.depth).powi(2))
        .collect();
    if cfg.depth_mode == DepthMode::Expected {
        // The along-ray variance is stationary in the depth when the depth
        // is the expectation, so only the mean and lateral terms remain.
        let d_depth = grad.mean.dot(&ray.dir)
            + d_variance_across * 2.0 * ray.lateral_per_metre.powi(2) * tape.depth;
        d_probs
            .iter_mut()
            .zip(centers)
            .for_each(|(g, &c)| *g += d_depth * c);
    }
    let weighted: f64 = tape.probs.iter().zip(&d_probs).map(|(p, g)| p * g).sum();
    let depth_logits = tape
        .probs
        .iter()
        .zip(&d_probs)
        .map(|(p, g)| p * (g - weighted))
        .collect();

    let offset = Vec3::from_fn(|i, _| {
        if tape.offset_clamped[i] {
            0.0
        } else {
            grad.mean[i]
        }
    });
    CameraHeadGrad {
        depth_logits,
        offset,
        opacity_logit: grad.opacity * tape.opacity * (1.0 - tape.opacity),
        feature: grad.feature.clone(),
    }
}

/// Lifts a single pixel.
pub fn lift_pixel(
    u: &Vec2,
    head: &CameraHeadOutput,
    intr: &PinholeIntrinsics,
    pose: &Se3Pose,
    cfg: &LiftConfig,
) -> Result<Gaussian3D> {
    if cfg.k <= 0.0 {
        return Err(Error::invalid(
            "tolerance coefficient",
            format!("k = {}", cfg.k),
        ));
    }
    let ray = PixelRay::new(u, intr, pose, cfg.stride)?;
    lift_ray(&ray, head, cfg).map(|(g, _)| g)
}

/// Which camera cell a lifted Gaussian came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub camera: usize,
    pub row: usize,
    pub col: usize,
}

/// Pixel coordinates of the centre of feature cell `(row, col)`.
pub fn cell_pixel(row: usize, col: usize, stride: usize) -> Vec2 {
    Vec2::new(
        (col as f64 + 0.5) * stride as f64,
        (row as f64 + 0.5) * stride as f64,
    )
}

/// Feature-map shape `(rows, cols)` of a view.
pub fn low_res_shape(intr: &PinholeIntrinsics, stride: usize) -> (usize, usize) {
    (
        intr.height() as usize / stride,
        intr.width() as usize / stride,
    )
}

#[derive(Clone, Debug, Default)]
pub struct CameraBatch {
    pub gaussians: Vec<Gaussian3D>,
    pub cells: Vec<CellId>,
}

/// Lifts every view of the rig and drops Gaussians with opacity below
/// `cfg.alpha_min`. Output order is (camera, row, col).
pub fn lift_image(
    provider: &dyn FeatureProvider,
    rig: &[Camera],
    cfg: &LiftConfig,
) -> Result<CameraBatch> {
    if cfg.k <= 0.0 {
        return Err(Error::invalid(
            "tolerance coefficient",
            format!("k = {}", cfg.k),
        ));
    }
    let mut batch = CameraBatch::default();
    for (view, cam) in rig.iter().enumerate() {
        let grid = provider.heads(view, cam, cfg.stride)?;
        let (rows, cols) = low_res_shape(&cam.intrinsics, cfg.stride);
        if (grid.rows, grid.cols) != (rows, cols) || grid.cells.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "camera head grid",
                expected: vec![rows, cols],
                got: vec![grid.rows, grid.cols, grid.cells.len()],
            });
        }
        let lifted: Vec<Option<(Gaussian3D, CellId)>> = (0..rows * cols)
            .into_par_iter()
            .map(|idx| {
                let (row, col) = (idx / cols, idx % cols);
                let head = &grid.cells[idx];
                let ray = PixelRay::new(
                    &cell_pixel(row, col, cfg.stride),
                    &cam.intrinsics,
                    &cam.pose,
                    cfg.stride,
                )?;
                let (g, _) = lift_ray(&ray, head, cfg)?;
                Ok((g.opacity >= cfg.alpha_min).then_some((
                    g,
                    CellId {
                        camera: view,
                        row,
                        col,
                    },
                )))
            })
            .collect::<Result<_>>()?;
        for (g, id) in lifted.into_iter().flatten() {
            batch.gaussians.push(g);
            batch.cells.push(id);
        }
    }
    Ok(batch)
}
