use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Scene, Vehicle};
use crate::error::{Error, Result};
use crate::geometry::{Se3Pose, Vec2, Vec3};
use crate::radar_lift::{
    accumulate_sweeps, softplus_inv, PointFeatureProvider, RadarHeadOutput, RadarPoint, Sweep,
};

/// Width of the oracle radar feature.
pub const RADAR_FEATURE_DIM: usize = 8;

/// Clutter is drawn uniformly over `|x|, |y| ≤ CLUTTER_RANGE`, m.
const CLUTTER_RANGE: f64 = 50.0;
/// Per-axis variance of the oracle radar Gaussians, m².
const POINT_VARIANCE: f64 = 0.09;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarSimConfig {
    pub n_sweeps: usize,
    /// Time between sweeps, s.
    pub sweep_interval: f64,
    pub points_per_vehicle: usize,
    /// Expected clutter returns per sweep.
    pub clutter_rate: f64,
    /// Position noise standard deviation, m.
    pub noise: f64,
    /// Ego speed along +y, m/s.
    pub ego_speed: f64,
}

impl Default for RadarSimConfig {
    fn default() -> Self {
        Self {
            n_sweeps: 7,
            sweep_interval: 0.075,
            points_per_vehicle: 12,
            clutter_rate: 40.0,
            noise: 0.15,
            ego_speed: 5.0,
        }
    }
}

impl RadarSimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_sweeps >= 1
            && self.sweep_interval > 0.0
            && self.clutter_rate >= 0.0
            && self.noise >= 0.0
            && [
                self.sweep_interval,
                self.clutter_rate,
                self.noise,
                self.ego_speed,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("radar config", format!("{self:?}")))
        }
    }
}

/// Sweeps ordered newest first; timestamps strictly decrease.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSet {
    pub sweeps: Vec<Sweep>,
}

impl SweepSet {
    pub fn len(&self) -> usize {
        self.sweeps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sweeps.is_empty()
    }

    /// All points in the frame of the newest sweep.
    pub fn accumulate(&self) -> Result<Vec<RadarPoint>> {
        let newest = self
            .sweeps
            .first()
            .ok_or_else(|| Error::invalid("sweep set", "empty"))?;
        accumulate_sweeps(&self.sweeps, &newest.ego_pose, newest.timestamp)
    }
}

/// Ego pose `age` seconds before the newest sweep.
pub fn ego_pose_at(cfg: &RadarSimConfig, age: f64) -> Se3Pose {
    Se3Pose::from_translation(Vec3::new(0.0, -cfg.ego_speed * age, 0.0))
}

/// Uniform sample on the side faces of `v` visible from `sensor`.
fn sample_surface(v: &Vehicle, sensor: &Vec3, rng: &mut ChaCha8Rng) -> Option<Vec3> {
    let (s, c) = v.yaw.sin_cos();
    let u = Vec3::new(c, s, 0.0);
    let w = Vec3::new(-s, c, 0.0);
    let (hl, hw) = (0.5 * v.size.x, 0.5 * v.size.y);
    // (outward normal, half-extent along the face, tangent)
    let faces = [
        (u, hl, hw, w),
        (-u, hl, hw, w),
        (w, hw, hl, u),
        (-w, hw, hl, u),
    ];
    let visible: Vec<_> = faces
        .iter()
        .filter(|(n, off, _, _)| {
            let centre = v.center + n * *off;
            n.dot(&(sensor - centre)) > 0.0
        })
        .collect();
    let total: f64 = visible.iter().map(|f| f.2).sum();
    if total <= 0.0 {
        return None;
    }
    let mut pick = rng.random_range(0.0..total);
    let face = visible
        .iter()
        .find(|f| {
            pick -= f.2;
            pick < 0.0
        })
        .unwrap_or(visible.last()?);
    let (n, off, half, tangent) = **face;
    let along = rng.random_range(-half..=half);
    let z = rng.random_range(0.0..=v.size.z);
    let mut p = v.center + n * off + tangent * along;
    p.z = z;
    Some(p)
}

/// Simulates `cfg.n_sweeps` sweeps ending at time 0, each in its own ego
/// frame. Vehicles move at constant velocity; the sensor sits at the ego
/// origin and sees through everything.
pub fn sample_radar(scene: &Scene, cfg: &RadarSimConfig) -> Result<SweepSet> {
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("finite noise");
    let mut sweeps = Vec::with_capacity(cfg.n_sweeps);
    for k in 0..cfg.n_sweeps {
        let age = k as f64 * cfg.sweep_interval;
        let pose = ego_pose_at(cfg, age);
        let to_sweep = pose.inverse();
        let sensor = *pose.translation();
        let mut points = Vec::new();
        for (i, v) in scene.vehicles.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
            rng.set_stream(((k as u64) << 32) | (1 + i as u64));
            let then = v.at_time(-age);
            for _ in 0..cfg.points_per_vehicle {
                let Some(p) = sample_surface(&then, &sensor, &mut rng) else {
                    break;
                };
                let jitter = if cfg.noise > 0.0 {
                    Vec3::from_fn(|_, _| noise.sample(&mut rng))
                } else {
                    Vec3::zeros()
                };
                points.push(RadarPoint {
                    position: to_sweep.transform_point(&(p + jitter)),
                    rcs: 10.0 + rng.random_range(-2.0..=2.0),
                    velocity: to_sweep
                        .transform_vector(&Vec3::new(v.velocity.x, v.velocity.y, 0.0))
                        .xy(),
                    dt: 0.0,
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream((k as u64) << 32);
        let n_clutter = if cfg.clutter_rate > 0.0 {
            Poisson::new(cfg.clutter_rate)
                .expect("positive rate")
                .sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..n_clutter {
            let p = Vec3::new(
                rng.random_range(-CLUTTER_RANGE..=CLUTTER_RANGE),
                rng.random_range(-CLUTTER_RANGE..=CLUTTER_RANGE),
                rng.random_range(0.0..=1.0),
            );
            points.push(RadarPoint {
                position: p,
                rcs: rng.random_range(-5.0..=5.0),
                velocity: Vec2::zeros(),
                dt: 0.0,
            });
        }
        sweeps.push(Sweep {
            points,
            ego_pose: pose,
            timestamp: -age,
        });
    }
    Ok(SweepSet { sweeps })
}

/// Ground-truth radar heads: an offset that carries each point forward by
/// its velocity, an isotropic covariance, and a vehicle-or-clutter feature.
#[derive(Clone, Debug)]
pub struct OracleRadar<'a> {
    pub scene: &'a Scene,
    /// Points this close to a vehicle footprint count as vehicle returns, m.
    pub margin: f64,
}

impl<'a> OracleRadar<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        Self {
            scene,
            margin: 3.0 * scene.radar.noise + 0.1,
        }
    }
}

impl PointFeatureProvider for OracleRadar<'_> {
    fn feature_dim(&self) -> usize {
        RADAR_FEATURE_DIM
    }

    fn heads(&self, cloud: &[RadarPoint]) -> Result<Vec<RadarHeadOutput>> {
        let c = softplus_inv(POINT_VARIANCE);
        Ok(cloud
            .iter()
            .map(|p| {
                let offset = Vec3::new(p.velocity.x * p.dt, p.velocity.y * p.dt, 0.0);
                let now = (p.position + offset).xy();
                let vehicle = self
                    .scene
                    .vehicles
                    .iter()
                    .any(|v| v.contains_xy(&now, self.margin));
                let mut feature = vec![0.0; RADAR_FEATURE_DIM];
                feature[0] = vehicle as u8 as f64;
                feature[1] = 1.0 - feature[0];
                feature[2] = p.rcs / 20.0;
                feature[3] = p.velocity.norm() / 10.0;
                RadarHeadOutput {
                    offset,
                    cov6: [c, 0.0, 0.0, c, 0.0, c],
                    opacity_logit: if vehicle { 3.0 } else { -1.0 },
                    feature,
                }
            })
            .collect())
    }
}
