//! Points to Gaussians.
//!
//! Past radar sweeps are moved into the current ego frame, then each point
//! becomes a Gaussian centred at the point plus a metric offset. The
//! covariance comes from an unconstrained 6-vector `[xx xy xz yy yz zz]`:
//! the symmetric matrix is eigendecomposed and its eigenvalues are passed
//! through softplus, which keeps the predicted orientation and makes the
//! result positive definite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera_lift::{sigmoid, COV_FLOOR};
use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{sym_eigen, Gaussian3D, Mat3, Se3Pose, Vec2, Vec3};
use crate::raster::GaussianGrad;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    /// Metres, in the frame of the sweep that holds the point.
    pub position: Vec3,
    /// Radar cross-section, dBsm.
    pub rcs: f64,
    /// Ego-motion compensated velocity, m/s.
    pub velocity: Vec2,
    /// Age relative to the current frame, s.
    pub dt: f64,
}

/// One radar scan and the ego pose it was captured at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub points: Vec<RadarPoint>,
    pub ego_pose: Se3Pose,
    /// Seconds.
    pub timestamp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadarHeadOutput {
    pub offset: Vec3,
    /// `[xx xy xz yy yz zz]`, unconstrained.
    pub cov6: [f64; 6],
    pub opacity_logit: f64,
    pub feature: Vec<f64>,
}

/// Maps an accumulated cloud to one head output per point; stands in for a
/// point backbone.
pub trait PointFeatureProvider {
    fn feature_dim(&self) -> usize;
    fn heads(&self, cloud: &[RadarPoint]) -> Result<Vec<RadarHeadOutput>>;
}

/// Moves every sweep into the frame of `current_pose`. Each point's `dt` is
/// set to `current_time − timestamp` of its sweep.
pub fn accumulate_sweeps(
    sweeps: &[Sweep],
    current_pose: &Se3Pose,
    current_time: f64,
) -> Result<Vec<RadarPoint>> {
    if sweeps.is_empty() {
        return Err(Error::invalid("sweeps", "need at least one sweep"));
    }
    let to_current = current_pose.inverse();
    let mut cloud = Vec::with_capacity(sweeps.iter().map(|s| s.points.len()).sum());
    for sweep in sweeps {
        let dt = current_time - sweep.timestamp;
        if dt.is_nan() || dt < 0.0 {
            return Err(Error::invalid(
                "sweep timestamp",
                format!("sweep is {dt} s in the future"),
            ));
        }
        let tf = to_current.compose(&sweep.ego_pose);
        cloud.extend(sweep.points.iter().map(|p| {
            let v = tf.transform_vector(&Vec3::new(p.velocity.x, p.velocity.y, 0.0));
            RadarPoint {
                position: tf.transform_point(&p.position),
                rcs: p.rcs,
                velocity: Vec2::new(v.x, v.y),
                dt,
            }
        }));
    }
    Ok(cloud)
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

fn sym_from_6vec(c: &[f64; 6]) -> Mat3 {
    Mat3::new(c[0], c[1], c[2], c[1], c[3], c[4], c[2], c[4], c[5])
}

/// Symmetric positive definite covariance from the compact 6-vector:
/// `V·softplus(Λ)·Vᵀ` for the eigendecomposition `V·Λ·Vᵀ` of the raw matrix.
pub fn cov_from_6vec(cov6: &[f64; 6]) -> Result<Mat3> {
    ensure_finite("cov6", cov6)?;
    let e = sym_eigen(&sym_from_6vec(cov6))?;
    let m =
        e.vectors * Mat3::from_diagonal(&e.values.map(lifted_eigenvalue)) * e.vectors.transpose();
    Ok((m + m.transpose()) * 0.5)
}

/// `softplus(λ)` floored at [`COV_FLOOR`]. Without the floor, eigenvalues
/// below roughly −28 vanish under roundoff in `V·Λ·Vᵀ` and the result can
/// come out slightly indefinite.
fn lifted_eigenvalue(l: f64) -> f64 {
    softplus(l).max(COV_FLOOR)
}

fn lifted_slope(l: f64) -> f64 {
    if softplus(l) > COV_FLOOR {
        sigmoid(l)
    } else {
        0.0
    }
}

/// Eigenvalue gap below which the divided difference is replaced by the
/// derivative at the midpoint.
const CROSSING_GAP: f64 = 1e-6;

/// Gradient of a loss with respect to `cov6`, given its gradient `grad` with
/// respect to the output of [`cov_from_6vec`].
///
/// Uses the Daleckii–Krein formula for the matrix function
/// `S ↦ V·softplus(Λ)·Vᵀ`, whose first divided differences stay finite as
/// eigenvalues approach each other.
pub fn cov_from_6vec_backward(cov6: &[f64; 6], grad: &Mat3) -> Result<[f64; 6]> {
    let e = sym_eigen(&sym_from_6vec(cov6))?;
    let lam = e.values;
    let f = lam.map(lifted_eigenvalue);
    let phi = Mat3::from_fn(|i, j| {
        if (lam[i] - lam[j]).abs() < CROSSING_GAP {
            lifted_slope(0.5 * (lam[i] + lam[j]))
        } else {
            (f[i] - f[j]) / (lam[i] - lam[j])
        }
    });
    let g = (grad + grad.transpose()) * 0.5;
    let inner = e.vectors.transpose() * g * e.vectors;
    let gs = e.vectors * inner.component_mul(&phi) * e.vectors.transpose();
    Ok([
        gs[(0, 0)],
        gs[(0, 1)] + gs[(1, 0)],
        gs[(0, 2)] + gs[(2, 0)],
        gs[(1, 1)],
        gs[(1, 2)] + gs[(2, 1)],
        gs[(2, 2)],
    ])
}

/// Smallest gap between eigenvalues of the raw symmetric matrix.
pub fn cov6_eigen_gap(cov6: &[f64; 6]) -> Result<f64> {
    let v = sym_eigen(&sym_from_6vec(cov6))?.values;
    Ok((v[1] - v[0]).min(v[2] - v[1]))
}

/// One Gaussian per point, or `None` when its opacity is below `alpha_min`.
pub fn lift_point(
    pt: &RadarPoint,
    head: &RadarHeadOutput,
    alpha_min: f64,
) -> Result<Option<Gaussian3D>> {
    ensure_finite("radar offset", head.offset.as_slice())?;
    ensure_finite("radar feature", &head.feature)?;
    ensure_finite("opacity logit", &[head.opacity_logit])?;
    let opacity = sigmoid(head.opacity_logit);
    if opacity < alpha_min {
        return Ok(None);
    }
    Ok(Some(Gaussian3D {
        mean: pt.position + head.offset,
        cov: cov_from_6vec(&head.cov6)?,
        opacity,
        feature: head.feature.clone(),
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadarHeadGrad {
    pub offset: Vec3,
    pub cov6: [f64; 6],
    pub opacity_logit: f64,
    pub feature: Vec<f64>,
}

pub fn lift_point_backward(head: &RadarHeadOutput, grad: &GaussianGrad) -> Result<RadarHeadGrad> {
    let o = sigmoid(head.opacity_logit);
    Ok(RadarHeadGrad {
        offset: grad.mean,
        cov6: cov_from_6vec_backward(&head.cov6, &grad.cov)?,
        opacity_logit: grad.opacity * o * (1.0 - o),
        feature: grad.feature.clone(),
    })
}

#[derive(Clone, Debug, Default)]
pub struct RadarBatch {
    pub gaussians: Vec<Gaussian3D>,
    /// Index into the input cloud for each Gaussian.
    pub points: Vec<usize>,
}

/// Lifts a whole cloud, keeping input order.
pub fn lift_cloud(
    cloud: &[RadarPoint],
    provider: &dyn PointFeatureProvider,
    alpha_min: f64,
) -> Result<RadarBatch> {
    let heads = provider.heads(cloud)?;
    lift_cloud_with_heads(cloud, &heads, alpha_min)
}

pub fn lift_cloud_with_heads(
    cloud: &[RadarPoint],
    heads: &[RadarHeadOutput],
    alpha_min: f64,
) -> Result<RadarBatch> {
    if heads.len() != cloud.len() {
        return Err(Error::ShapeMismatch {
            context: "radar heads",
            expected: vec![cloud.len()],
            got: vec![heads.len()],
        });
    }
    let lifted: Vec<Option<Gaussian3D>> = cloud
        .par_iter()
        .zip(heads.par_iter())
        .map(|(p, h)| lift_point(p, h, alpha_min))
        .collect::<Result<_>>()?;
    let mut batch = RadarBatch::default();
    for (i, g) in lifted.into_iter().enumerate() {
        if let Some(g) = g {
            batch.gaussians.push(g);
            batch.points.push(i);
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(x: f64, y: f64) -> RadarPoint {
        RadarPoint {
            position: Vec3::new(x, y, 0.5),
            rcs: 10.0,
            velocity: Vec2::new(1.0, 0.0),
            dt: 0.0,
        }
    }

    #[test]
    fn single_identity_sweep_is_unchanged() {
        let pts = vec![point(1.0, 2.0), point(-3.0, 4.0)];
        let sweeps = [Sweep {
            points: pts.clone(),
            ego_pose: Se3Pose::identity(),
            timestamp: 0.0,
        }];
        assert_eq!(
            accumulate_sweeps(&sweeps, &Se3Pose::identity(), 0.0).unwrap(),
            pts
        );
        assert!(accumulate_sweeps(&[], &Se3Pose::identity(), 0.0).is_err());
    }

    #[test]
    fn translated_sweep_shifts_back() {
        let pts = vec![point(1.0, 2.0)];
        let sweeps = [
            Sweep {
                points: pts.clone(),
                ego_pose: Se3Pose::identity(),
                timestamp: 0.0,
            },
            Sweep {
                points: pts,
                ego_pose: Se3Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
                timestamp: 0.0,
            },
        ];
        let current = Se3Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let out = accumulate_sweeps(&sweeps, &current, 0.0).unwrap();
        assert!((out[0].position - Vec3::new(0.0, 2.0, 0.5)).norm() < 1e-15);
        assert!((out[1].position - Vec3::new(1.0, 2.0, 0.5)).norm() < 1e-15);
        assert!((out[0].position - out[1].position - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dt_comes_from_sweep_age() {
        let sweeps = [
            Sweep {
                points: vec![point(0.0, 1.0)],
                ego_pose: Se3Pose::identity(),
                timestamp: 1.0,
            },
            Sweep {
                points: vec![point(0.0, 1.0)],
                ego_pose: Se3Pose::identity(),
                timestamp: 0.75,
            },
        ];
        let out = accumulate_sweeps(&sweeps, &Se3Pose::identity(), 1.0).unwrap();
        assert_eq!(out[0].dt, 0.0);
        assert_eq!(out[1].dt, 0.25);
    }

    #[test]
    fn softplus_cov_fixed_cases() {
        let c = cov_from_6vec(&[0.0; 6]).unwrap();
        assert!((c - Mat3::identity() * std::f64::consts::LN_2).abs().max() < 1e-15);
        let a = 1.7;
        let c = cov_from_6vec(&[a, 0.0, 0.0, a, 0.0, a]).unwrap();
        assert!((c - Mat3::identity() * softplus(a)).abs().max() < 1e-14);
        assert!((softplus_inv(softplus(-2.3)) + 2.3).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(800.0) == 800.0);
    }

    #[test]
    fn pruning_by_opacity() {
        let head = |logit: f64| RadarHeadOutput {
            offset: Vec3::zeros(),
            cov6: [0.0; 6],
            opacity_logit: logit,
            feature: vec![1.0],
        };
        let p = point(3.0, 4.0);
        let g = lift_point(&p, &head(1000.0), 0.01).unwrap().unwrap();
        assert_eq!(g.mean, p.position);
        assert!((g.opacity - 1.0).abs() < 1e-12);
        assert!(lift_point(&p, &head(-1000.0), 0.01).unwrap().is_none());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let cloud = vec![point(0.0, 0.0)];
        assert!(lift_cloud_with_heads(&cloud, &[], 0.01).is_err());
        assert!(lift_cloud_with_heads(&[], &[], 0.01)
            .unwrap()
            .gaussians
            .is_empty());
    }
}
