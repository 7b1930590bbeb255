use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};
use crate::error::{ensure_finite, Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Rigid transform `p ↦ R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Se3Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Se3Pose {
    /// Builds a pose, rejecting rotations that are not orthonormal with
    /// determinant +1 to within `1e-9`.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        ensure_finite("pose rotation", rotation.as_slice())?;
        ensure_finite("pose translation", translation.as_slice())?;
        let ortho_err = (rotation.transpose() * rotation - Mat3::identity())
            .abs()
            .max();
        if ortho_err > ORTHO_TOL {
            return Err(Error::invalid(
                "rotation",
                format!("RᵀR deviates from I by {ortho_err:e}"),
            ));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::invalid("rotation", format!("determinant {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation by `yaw` radians about +z, then translation.
    pub fn from_yaw(yaw: f64, translation: Vec3) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Se3Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

impl Default for Se3Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Serialized form: rotation as three rows plus a translation.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<Se3Pose> for PoseRepr {
    fn from(p: Se3Pose) -> Self {
        let r = p.rotation;
        PoseRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseRepr> for Se3Pose {
    type Error = Error;

    fn try_from(r: PoseRepr) -> Result<Self> {
        let m = Mat3::from_fn(|i, j| r.rotation[i][j]);
        Se3Pose::new(m, Vec3::from(r.translation))
    }
}
