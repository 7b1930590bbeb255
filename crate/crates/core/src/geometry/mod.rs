//! Shared geometric primitives: rigid poses, pinhole cameras, the BEV grid,
//! depth bins and symmetric eigendecompositions.
//!
//! Frames: the ego frame is x-right, y-forward, z-up. Camera frames are
//! x-right, y-down, z-forward (optical axis). BEV cell coordinates are
//! `(col, row)` with `col` along ego x and `row` along ego y.

mod camera;
mod eigen;
mod gaussian;
mod grid;
mod pose;

pub use camera::{back_project, project, ray_basis, Camera, PinholeIntrinsics};
pub use eigen::{cov_from_eigen, sym_eigen, sym_eigen2, SymEigen, SymEigen2};
pub use gaussian::Gaussian3D;
pub use grid::{world_to_bev, BevGridSpec, DepthBinSpec};
pub use pose::Se3Pose;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Largest absolute entry of a 3×3 matrix.
pub(crate) fn max_abs(m: &Mat3) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
