use serde::{Deserialize, Serialize};

use super::{Mat3, Se3Pose, Vec2, Vec3};
use crate::error::{ensure_finite, Error, Result};

/// Rectified pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr", into = "IntrinsicsRepr")]
pub struct PinholeIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl PinholeIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        ensure_finite("intrinsics", &[fx, fy, cx, cy])?;
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::invalid(
                "intrinsics",
                "focal lengths must be positive",
            ));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(Error::invalid(
                "intrinsics",
                format!("principal point ({cx}, {cy}) outside {width}×{height} image"),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Camera-frame direction with unit z component through pixel `u`.
    pub fn ray(&self, u: &Vec2) -> Vec3 {
        Vec3::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy, 1.0)
    }
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl From<PinholeIntrinsics> for IntrinsicsRepr {
    fn from(i: PinholeIntrinsics) -> Self {
        IntrinsicsRepr {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
        }
    }
}

impl TryFrom<IntrinsicsRepr> for PinholeIntrinsics {
    type Error = Error;
    fn try_from(r: IntrinsicsRepr) -> Result<Self> {
        PinholeIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

/// Lifts pixel `u` at z-depth `depth` into the ego frame. `pose` maps camera
/// coordinates to ego coordinates.
pub fn back_project(
    intr: &PinholeIntrinsics,
    pose: &Se3Pose,
    u: &Vec2,
    depth: f64,
) -> Result<Vec3> {
    ensure_finite("back_project input", &[u.x, u.y, depth])?;
    if depth <= 0.0 {
        return Err(Error::invalid("depth", format!("{depth} is not positive")));
    }
    Ok(pose.transform_point(&(intr.ray(u) * depth)))
}

/// Inverse of [`back_project`]: ego point to pixel and z-depth.
pub fn project(intr: &PinholeIntrinsics, pose: &Se3Pose, p: &Vec3) -> (Vec2, f64) {
    let c = pose.inverse().transform_point(p);
    let u = Vec2::new(intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy);
    (u, c.z)
}

/// Rotation whose third column is `dir`.
///
/// For `dir.z >= 0` this is the minimal rotation taking +z onto `dir`. Below
/// the equator the minimal rotation from −z is used, composed with a half
/// turn about x, so the antipode `dir = −z` maps to `diag(1, −1, −1)`.
pub fn ray_basis(dir: &Vec3) -> Result<Mat3> {
    ensure_finite("ray direction", dir.as_slice())?;
    let n = dir.norm();
    if n == 0.0 {
        return Err(Error::invalid("ray direction", "zero vector"));
    }
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "ray direction",
            format!("norm {n} is not 1"),
        ));
    }
    if dir.z >= 0.0 {
        Ok(min_rotation(&Vec3::z(), dir))
    } else {
        let half_turn_x = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        Ok(min_rotation(&(-Vec3::z()), dir) * half_turn_x)
    }
}

/// Rodrigues rotation taking unit `a` to unit `b`; requires `a·b ≥ 0`.
fn min_rotation(a: &Vec3, b: &Vec3) -> Mat3 {
    let v = a.cross(b);
    let c = a.dot(b);
    let vx = v.cross_matrix();
    Mat3::identity() + vx + vx * vx / (1.0 + c)
}

/// One calibrated view: intrinsics plus the camera-to-ego pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: PinholeIntrinsics,
    pub pose: Se3Pose,
}
