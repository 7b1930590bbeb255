//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use bevsplat::geometry::{
    BevGridSpec, Camera, Gaussian3D, Mat3, PinholeIntrinsics, Se3Pose, Vec2, Vec3,
};
use bevsplat::raster::{
    chain_to_3d, rasterize_backward, render, BevFeatureMap, GaussianGrad, RasterConfig, Splat2D,
};
use nalgebra::{Matrix4, Rotation3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force compositing: every splat at every cell, covariance inverted
/// from `cov2` by the adjugate formula. Pairs with `α′ < cutoff` are skipped
/// and a cell stops once its transmittance drops below `stop`; `None`
/// disables either rule.
pub fn naive_rasterize_with(
    splats: &[Splat2D],
    dim: usize,
    grid: &BevGridSpec,
    cutoff: Option<f64>,
    stop: Option<f64>,
) -> Vec<f64> {
    let (h, w) = (grid.height(), grid.width());
    let mut out = vec![0.0; dim * h * w];
    for row in 0..h {
        for col in 0..w {
            let (qx, qy) = (col as f64 + 0.5, row as f64 + 0.5);
            let mut t = 1.0;
            for s in splats {
                if stop.is_some_and(|st| t < st) {
                    break;
                }
                let (a, b, c) = (
                    s.cov2[(0, 0)],
                    0.5 * (s.cov2[(0, 1)] + s.cov2[(1, 0)]),
                    s.cov2[(1, 1)],
                );
                let det = a * c - b * b;
                let (dx, dy) = (qx - s.mean2.x, qy - s.mean2.y);
                let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
                let raw = s.opacity * (-0.5 * q).exp();
                if cutoff.is_some_and(|cut| raw < cut) {
                    continue;
                }
                let alpha = raw.min(0.999);
                for k in 0..dim {
                    out[(k * h + row) * w + col] += s.feature[k] * alpha * t;
                }
                t *= 1.0 - alpha;
            }
        }
    }
    out
}

pub fn naive_rasterize(splats: &[Splat2D], dim: usize, grid: &BevGridSpec) -> Vec<f64> {
    naive_rasterize_with(splats, dim, grid, None, None)
}

/// Gaussians flattened as `[mean(3), xx, xy, xz, yy, yz, zz, opacity, feature(D)]`.
pub fn pack_gaussians(gs: &[Gaussian3D]) -> Vec<f64> {
    gs.iter()
        .flat_map(|g| {
            let c = &g.cov;
            let mut v = vec![
                g.mean.x,
                g.mean.y,
                g.mean.z,
                c[(0, 0)],
                c[(0, 1)],
                c[(0, 2)],
                c[(1, 1)],
                c[(1, 2)],
                c[(2, 2)],
            ];
            v.push(g.opacity);
            v.extend(&g.feature);
            v
        })
        .collect()
}

pub fn unpack_gaussians(v: &[f64], dim: usize) -> Vec<Gaussian3D> {
    v.chunks(10 + dim)
        .map(|c| Gaussian3D {
            mean: Vec3::new(c[0], c[1], c[2]),
            cov: Mat3::new(c[3], c[4], c[5], c[4], c[6], c[7], c[5], c[7], c[8]),
            opacity: c[9],
            feature: c[10..].to_vec(),
        })
        .collect()
}

/// `Σ w·F` over the rendered map.
pub fn weighted_render(
    gs: &[Gaussian3D],
    dim: usize,
    grid: &BevGridSpec,
    cfg: &RasterConfig,
    w: &BevFeatureMap,
) -> f64 {
    let (map, _, _) = render(gs, dim, grid, cfg).unwrap();
    map.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Analytic gradient of [`weighted_render`] per Gaussian, through the
/// rasterizer backward pass and the projection.
pub fn weighted_render_grad(
    gs: &[Gaussian3D],
    dim: usize,
    grid: &BevGridSpec,
    cfg: &RasterConfig,
    w: &BevFeatureMap,
) -> Vec<GaussianGrad> {
    let (_, aux, splats) = render(gs, dim, grid, cfg).unwrap();
    let sg = rasterize_backward(&splats, grid, &aux, w).unwrap();
    let mut out = vec![GaussianGrad::zeros(dim); gs.len()];
    for (s, g) in splats.iter().zip(&sg) {
        out[s.source_index] = chain_to_3d(&gs[s.source_index], grid, g);
    }
    out
}

/// [`GaussianGrad`]s laid out like [`pack_gaussians`].
pub fn pack_grads(gs: &[GaussianGrad]) -> Vec<f64> {
    gs.iter()
        .flat_map(|g| {
            let c = &g.cov;
            let mut v = vec![
                g.mean.x,
                g.mean.y,
                g.mean.z,
                c[(0, 0)],
                c[(0, 1)] + c[(1, 0)],
                c[(0, 2)] + c[(2, 0)],
                c[(1, 1)],
                c[(1, 2)] + c[(2, 1)],
                c[(2, 2)],
            ];
            v.push(g.opacity);
            v.extend(&g.feature);
            v
        })
        .collect()
}

pub fn random_weights(r: &mut ChaCha8Rng, dim: usize, grid: &BevGridSpec) -> BevFeatureMap {
    let data = (0..dim * grid.cells())
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    BevFeatureMap::from_data(dim, *grid, data).unwrap()
}

/// Eigenvalues of a symmetric 3×3 matrix as the roots of its
/// characteristic polynomial, found by bisection between the critical
/// points of the cubic. Ascending.
pub fn charpoly_eigenvalues(a: &Mat3) -> [f64; 3] {
    let tr = a.trace();
    let c1 = a[(0, 0)] * a[(1, 1)] + a[(0, 0)] * a[(2, 2)] + a[(1, 1)] * a[(2, 2)]
        - a[(0, 1)] * a[(1, 0)]
        - a[(0, 2)] * a[(2, 0)]
        - a[(1, 2)] * a[(2, 1)];
    let det = a.determinant();
    let p = |l: f64| ((l - tr) * l + c1) * l - det;
    // Gershgorin bound on the spectrum.
    let r = (0..3)
        .map(|i| {
            a[(i, i)].abs()
                + (0..3)
                    .filter(|&j| j != i)
                    .map(|j| a[(i, j)].abs())
                    .sum::<f64>()
        })
        .fold(0.0_f64, f64::max)
        + 1.0;
    let disc = (tr * tr - 3.0 * c1).max(0.0).sqrt();
    let (k1, k2) = ((tr - disc) / 3.0, (tr + disc) / 3.0);
    let segments = [(-r, k1), (k1, k2), (k2, r)];
    segments.map(|(lo, hi)| {
        let (mut lo, mut hi) = (lo, hi);
        let (plo, phi) = (p(lo), p(hi));
        if plo.signum() == phi.signum() {
            // Double root at a critical point.
            return if plo.abs() < phi.abs() { lo } else { hi };
        }
        let rising = phi > plo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (p(mid) > 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    })
}

/// Back-projection as a product of 4×4 homogeneous matrices:
/// ego ← [R t; 0 1] · [K⁻¹ 0; 0 1] · (u·d, v·d, d, 1).
pub fn homogeneous_back_project(
    intr: &PinholeIntrinsics,
    pose: &Se3Pose,
    u: &Vec2,
    d: f64,
) -> Vec3 {
    #[rustfmt::skip]
    let k = Matrix4::new(
        intr.fx(), 0.0, intr.cx(), 0.0,
        0.0, intr.fy(), intr.cy(), 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    let mut t = Matrix4::identity();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation());
    t.fixed_view_mut::<3, 1>(0, 3).copy_from(pose.translation());
    let p = t * k.try_inverse().unwrap() * Vector4::new(u.x * d, u.y * d, d, 1.0);
    Vec3::new(p.x / p.w, p.y / p.w, p.z / p.w)
}

/// `∫ N(x, y, z; 0, Σ) dz` by composite Simpson on ±12σ_z.
pub fn marginal_density(cov: &Mat3, x: f64, y: f64) -> f64 {
    let inv = cov.try_inverse().unwrap();
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).powf(1.5) * cov.determinant().sqrt());
    let sz = cov[(2, 2)].sqrt();
    let n = 4000;
    let (lo, hi) = (-12.0 * sz, 12.0 * sz);
    let h = (hi - lo) / n as f64;
    let f = |z: f64| {
        let v = Vec3::new(x, y, z);
        norm * (-0.5 * v.dot(&(inv * v))).exp()
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Sutherland–Hodgman clip of convex `subject` by convex, counter-clockwise
/// `clip`.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let cross =
        |a: &Vec2, b: &Vec2, p: &Vec2| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (cp, cq) = (cross(&a, &b, &p), cross(&a, &b, &q));
            if cp >= 0.0 {
                out.push(p);
            }
            if (cp >= 0.0) != (cq >= 0.0) {
                out.push(p + (q - p) * (cp / (cp - cq)));
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

pub fn shoelace(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| poly[i].x * poly[(i + 1) % n].y - poly[(i + 1) % n].x * poly[i].y)
        .sum::<f64>()
        .abs()
}

/// Corners of an oriented rectangle, counter-clockwise.
pub fn box_corners(center: Vec2, length: f64, width: f64, yaw: f64) -> Vec<Vec2> {
    let (c, s) = (yaw.cos(), yaw.sin());
    [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
        .iter()
        .map(|(a, b)| {
            let (lx, ly) = (a * length / 2.0, b * width / 2.0);
            center + Vec2::new(c * lx - s * ly, s * lx + c * ly)
        })
        .collect()
}

/// Monte-Carlo area of an oriented rectangle using a local-frame inside test.
pub fn monte_carlo_box_area(length: f64, width: f64, yaw: f64, samples: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let half = 0.5 * (length * length + width * width).sqrt();
    let (c, s) = (yaw.cos(), yaw.sin());
    let mut inside = 0usize;
    for _ in 0..samples {
        let p = Vec2::new(r.random_range(-half..half), r.random_range(-half..half));
        let (lx, ly) = (c * p.x + s * p.y, -s * p.x + c * p.y);
        inside += (lx.abs() <= length / 2.0 && ly.abs() <= width / 2.0) as usize;
    }
    (2.0 * half).powi(2) * inside as f64 / samples as f64
}

pub fn random_rotation(r: &mut ChaCha8Rng) -> Mat3 {
    let axis = Vec3::new(
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-3 {
        Vec3::z()
    } else {
        axis.normalize()
    };
    *Rotation3::from_axis_angle(
        &nalgebra::Unit::new_unchecked(axis),
        r.random_range(-3.1..3.1),
    )
    .matrix()
}

pub fn random_pose(r: &mut ChaCha8Rng) -> Se3Pose {
    let t = Vec3::new(
        r.random_range(-5.0..5.0),
        r.random_range(-5.0..5.0),
        r.random_range(-2.0..2.0),
    );
    Se3Pose::new(random_rotation(r), t).unwrap()
}

/// Random Gaussian with in-plane standard deviations `sigma` (m) inside
/// `grid`.
pub fn random_gaussian(
    r: &mut ChaCha8Rng,
    grid: &BevGridSpec,
    dim: usize,
    sigma: (f64, f64),
) -> Gaussian3D {
    let s = Vec3::new(
        r.random_range(sigma.0..sigma.1),
        r.random_range(sigma.0..sigma.1),
        r.random_range(0.1..1.0),
    );
    let rot = random_rotation(r);
    let cov = rot * Mat3::from_diagonal(&s.component_mul(&s)) * rot.transpose();
    Gaussian3D {
        mean: Vec3::new(
            r.random_range(grid.x_min()..grid.x_max()),
            r.random_range(grid.y_min()..grid.y_max()),
            r.random_range(-1.0..3.0),
        ),
        cov: (cov + cov.transpose()) * 0.5,
        opacity: r.random_range(0.05..0.95),
        feature: (0..dim).map(|_| r.random_range(-1.0..1.0)).collect(),
    }
}

pub fn small_camera() -> Camera {
    Camera {
        intrinsics: PinholeIntrinsics::new(50.0, 50.0, 16.0, 16.0, 32, 32).unwrap(),
        pose: Se3Pose::identity(),
    }
}

/// Largest relative difference with an absolute floor.
pub fn max_rel_diff(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
