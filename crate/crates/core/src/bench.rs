//! Forward-rasterization timing on random splat batches.

use std::time::Instant;

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{BevGridSpec, Gaussian3D, Mat3, Vec3};
use crate::raster::{render, RasterConfig};

/// Timing statistics for one batch size.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub mean_ms: f64,
    /// Sample standard deviation; zero for a single repeat.
    pub std_ms: f64,
    pub ms_per_kgaussian: f64,
}

/// `n` Gaussians scattered uniformly over the grid, with in-plane standard
/// deviations of 0.25–1 m, random yaw and opacities in `[0.05, 0.95]`.
pub fn random_gaussians(n: usize, dim: usize, grid: &BevGridSpec, seed: u64) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mean = Vec3::new(
                rng.random_range(grid.x_min()..grid.x_max()),
                rng.random_range(grid.y_min()..grid.y_max()),
                rng.random_range(0.0..2.0),
            );
            let s = Vec3::new(
                rng.random_range(0.25..1.0),
                rng.random_range(0.25..1.0),
                rng.random_range(0.1..0.5),
            );
            let r = Rotation3::from_axis_angle(
                &Vec3::z_axis(),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            let cov =
                r.matrix() * Mat3::from_diagonal(&s.component_mul(&s)) * r.matrix().transpose();
            Gaussian3D {
                mean,
                cov: (cov + cov.transpose()) * 0.5,
                opacity: rng.random_range(0.05..0.95),
                feature: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            }
        })
        .collect()
}

/// Times projection, sorting and forward rasterization for each batch size.
/// One untimed warmup render precedes the `repeats` timed ones.
pub fn bench_forward(
    sizes: &[usize],
    dim: usize,
    repeats: usize,
    grid: &BevGridSpec,
    cfg: &RasterConfig,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(Error::invalid("repeats", "need at least one"));
    }
    if let Some(&bad) = sizes.iter().find(|&&n| n == 0) {
        return Err(Error::invalid("batch size", bad.to_string()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let gaussians = random_gaussians(n, dim, grid, seed ^ n as u64);
        render(&gaussians, dim, grid, cfg)?;
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let out = render(&gaussians, dim, grid, cfg)?;
            samples.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(out);
        }
        let mean = samples.iter().sum::<f64>() / repeats as f64;
        let std = if repeats > 1 {
            (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
        } else {
            0.0
        };
        rows.push(BenchRow {
            n,
            mean_ms: mean,
            std_ms: std,
            ms_per_kgaussian: mean / (n as f64 / 1000.0),
        });
    }
    Ok(rows)
}

/// Coefficient of determination of the least-squares line `mean_ms ~ n`.
pub fn linear_r2(rows: &[BenchRow]) -> f64 {
    let k = rows.len() as f64;
    let mx = rows.iter().map(|r| r.n as f64).sum::<f64>() / k;
    let my = rows.iter().map(|r| r.mean_ms).sum::<f64>() / k;
    let sxy: f64 = rows
        .iter()
        .map(|r| (r.n as f64 - mx) * (r.mean_ms - my))
        .sum();
    let sxx: f64 = rows.iter().map(|r| (r.n as f64 - mx).powi(2)).sum();
    let syy: f64 = rows.iter().map(|r| (r.mean_ms - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}
