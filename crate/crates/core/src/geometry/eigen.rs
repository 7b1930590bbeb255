//! Closed-form symmetric 3×3 and 2×2 eigendecompositions.
//!
//! The 3×3 solver uses the trigonometric solution of the characteristic
//! cubic on the max-normalized matrix and recovers eigenvectors from cross
//! products of rows of `A − λI`. Near-repeated spectra (relative gap below
//! `1e-8`), or a closed-form result whose reconstruction residual is not at
//! roundoff level, fall back to cyclic Jacobi.

use std::f64::consts::PI;

use super::{max_abs, Mat2, Mat3, Vec2, Vec3};
use crate::error::{ensure_finite, Error, Result};

const SYM_TOL: f64 = 1e-9;
const GAP_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-12;

/// Eigenvalues in ascending order with matching orthonormal eigenvector
/// columns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEigen {
    pub values: Vec3,
    pub vectors: Mat3,
}

impl SymEigen {
    pub fn reconstruct(&self) -> Mat3 {
        self.vectors * Mat3::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

pub fn sym_eigen(a: &Mat3) -> Result<SymEigen> {
    ensure_finite("sym_eigen input", a.as_slice())?;
    let scale = max_abs(a);
    let asym = (a - a.transpose()).abs().max();
    if asym > SYM_TOL * scale.max(1.0) {
        return Err(Error::Asymmetric(asym));
    }
    if scale == 0.0 {
        return Ok(SymEigen {
            values: Vec3::zeros(),
            vectors: Mat3::identity(),
        });
    }
    let b = (a + a.transpose()) * (0.5 / scale);
    let e = closed_form(&b).unwrap_or_else(|| jacobi(&b));
    Ok(SymEigen {
        values: e.values * scale,
        vectors: e.vectors,
    })
}

fn closed_form(b: &Mat3) -> Option<SymEigen> {
    let p1 = b[(0, 1)].powi(2) + b[(0, 2)].powi(2) + b[(1, 2)].powi(2);
    let q = b.trace() / 3.0;
    let p2 = (b[(0, 0)] - q).powi(2) + (b[(1, 1)] - q).powi(2) + (b[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p < GAP_TOL {
        return None;
    }
    let c = (b - Mat3::identity() * q) / p;
    let r = (c.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let mid = 3.0 * q - hi - lo;
    if mid - lo < GAP_TOL || hi - mid < GAP_TOL {
        return None;
    }
    let v_hi = null_vector(&(b - Mat3::identity() * hi))?;
    let v_lo = null_vector(&(b - Mat3::identity() * lo))?;
    let v_lo = (v_lo - v_hi * v_hi.dot(&v_lo)).try_normalize(1e-300)?;
    let v_mid = v_hi.cross(&v_lo);
    let e = SymEigen {
        values: Vec3::new(lo, mid, hi),
        vectors: Mat3::from_columns(&[v_lo, v_mid, v_hi]),
    };
    let residual = (e.reconstruct() - b).abs().max();
    (residual <= RESIDUAL_TOL).then_some(e)
}

/// Unit vector spanning the null space of a rank-2 symmetric matrix.
fn null_vector(m: &Mat3) -> Option<Vec3> {
    let r0 = m.row(0).transpose();
    let r1 = m.row(1).transpose();
    let r2 = m.row(2).transpose();
    let candidates = [r0.cross(&r1), r1.cross(&r2), r2.cross(&r0)];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    best.try_normalize(1e-300)
}

fn jacobi(b: &Mat3) -> SymEigen {
    let mut a = *b;
    let mut v = Mat3::identity();
    for _sweep in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off < 1e-36 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq.abs() < 1e-300 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Mat3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            v *= rot;
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    SymEigen {
        values: Vec3::new(
            a[(order[0], order[0])],
            a[(order[1], order[1])],
            a[(order[2], order[2])],
        ),
        vectors: Mat3::from_columns(&[v.column(order[0]), v.column(order[1]), v.column(order[2])]),
    }
}

/// Inverse of [`sym_eigen`]: `V·diag(λ)·Vᵀ`, restricted to covariances.
pub fn cov_from_eigen(values: &Vec3, vectors: &Mat3) -> Result<Mat3> {
    ensure_finite("eigenvalues", values.as_slice())?;
    ensure_finite("eigenvectors", vectors.as_slice())?;
    if let Some(neg) = values.iter().copied().find(|&v| v < 0.0) {
        return Err(Error::NegativeEigenvalue(neg));
    }
    let ortho = (vectors.transpose() * vectors - Mat3::identity())
        .abs()
        .max();
    if ortho > 1e-9 {
        return Err(Error::invalid(
            "eigenvectors",
            format!("not orthonormal (deviation {ortho:e})"),
        ));
    }
    let m = vectors * Mat3::from_diagonal(values) * vectors.transpose();
    Ok((m + m.transpose()) * 0.5)
}

/// Ascending eigenpairs of a symmetric 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEigen2 {
    pub values: Vec2,
    pub vectors: Mat2,
}

pub fn sym_eigen2(m: &Mat2) -> SymEigen2 {
    let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let radius = half_diff.hypot(b);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    // (co, s) spans the larger eigenvalue.
    SymEigen2 {
        values: Vec2::new(mean - radius, mean + radius),
        vectors: Mat2::new(-s, co, co, s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_identity() {
        let e = sym_eigen(&Mat3::from_diagonal(&Vec3::new(3.0, 1.0, 2.0))).unwrap();
        assert!((e.values - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-14);
        for j in 0..3 {
            let col = e.vectors.column(j);
            assert!(
                (col.abs().max() - 1.0).abs() < 1e-12,
                "column {j} is not an axis"
            );
        }
        let e = sym_eigen(&Mat3::identity()).unwrap();
        assert_eq!(e.values, Vec3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn repeated_eigenvalue_uses_fallback() {
        let v = Mat3::new(0.6, -0.8, 0.0, 0.8, 0.6, 0.0, 0.0, 0.0, 1.0);
        let a = v * Mat3::from_diagonal(&Vec3::new(2.0, 2.0, 5.0)) * v.transpose();
        let e = sym_eigen(&a).unwrap();
        assert!((e.reconstruct() - a).abs().max() < 1e-12);
        assert!(
            (e.vectors.transpose() * e.vectors - Mat3::identity())
                .abs()
                .max()
                < 1e-12
        );
    }

    #[test]
    fn rejects_asymmetric_and_nonfinite() {
        let mut a = Mat3::identity();
        a[(0, 1)] = 1e-3;
        assert!(matches!(sym_eigen(&a), Err(Error::Asymmetric(_))));
        a[(0, 1)] = f64::NAN;
        assert!(sym_eigen(&a).is_err());
    }

    #[test]
    fn cov_from_eigen_cases() {
        assert_eq!(
            cov_from_eigen(&Vec3::new(1.0, 1.0, 1.0), &Mat3::identity()).unwrap(),
            Mat3::identity()
        );
        let v = Mat3::new(0.6, -0.8, 0.0, 0.8, 0.6, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(cov_from_eigen(&Vec3::zeros(), &v).unwrap(), Mat3::zeros());
        assert!(matches!(
            cov_from_eigen(&Vec3::new(-1.0, 1.0, 1.0), &Mat3::identity()),
            Err(Error::NegativeEigenvalue(_))
        ));
    }

    #[test]
    fn sym2_reconstructs() {
        let m = Mat2::new(2.0, 0.7, 0.7, 0.5);
        let e = sym_eigen2(&m);
        let r = e.vectors * Mat2::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((r - m).abs().max() < 1e-14);
        assert!(e.values.x <= e.values.y);
    }
}
