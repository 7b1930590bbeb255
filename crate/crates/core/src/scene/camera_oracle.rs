use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::shapes::Polygon;
use super::{Scene, Vehicle};
use crate::camera_lift::{
    cell_pixel, low_res_shape, CameraHeadOutput, DepthDistribution, FeatureProvider, HeadGrid,
};
use crate::error::{Error, Result};
use crate::geometry::{Camera, DepthBinSpec, Vec2, Vec3};

/// Width of the oracle camera feature: a one-hot surface class padded
/// with zeros.
pub const CAMERA_FEATURE_DIM: usize = 8;

const PEAK: f64 = 10.0;
const OPACITY_VEHICLE: f64 = 4.0;
const OPACITY_GROUND: f64 = 2.0;
const OPACITY_SKY: f64 = -10.0;

/// What a viewing ray hits first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hit {
    /// Ray parameter `t` (the z-depth for unit-depth directions) and the
    /// index of the vehicle.
    Vehicle {
        t: f64,
        index: usize,
    },
    Ground {
        t: f64,
    },
    Sky,
}

fn box_hit(v: &Vehicle, origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let o = v.to_local(origin);
    let (s, c) = v.yaw.sin_cos();
    let d = Vec3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
    let half = v.size * 0.5;
    let (mut t0, mut t1) = (0.0_f64, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let a = (-half[k] - o[k]) / d[k];
        let b = (half[k] - o[k]) / d[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

/// First intersection of `origin + t·dir`, `t > 0`, with the vehicles and
/// the ground plane `z = 0`.
pub fn ray_cast(scene: &Scene, origin: &Vec3, dir: &Vec3) -> Hit {
    let mut best = Hit::Sky;
    let mut best_t = f64::INFINITY;
    if dir.z < 0.0 {
        let t = -origin.z / dir.z;
        if t > 0.0 {
            best_t = t;
            best = Hit::Ground { t };
        }
    }
    for (index, v) in scene.vehicles.iter().enumerate() {
        if let Some(t) = box_hit(v, origin, dir) {
            if t < best_t {
                best_t = t;
                best = Hit::Vehicle { t, index };
            }
        }
    }
    best
}

/// Ground-truth head outputs from ray casting: a depth-logit bump at the
/// true depth, a class one-hot feature and zero offsets.
#[derive(Clone, Debug)]
pub struct OracleCamera<'a> {
    pub scene: &'a Scene,
    pub bins: DepthBinSpec,
    /// Standard deviation of the noise added to every depth logit.
    pub noise: f64,
    pub seed: u64,
    lanes: Vec<Polygon>,
    dividers: Vec<Polygon>,
}

impl<'a> OracleCamera<'a> {
    pub fn new(scene: &'a Scene, bins: DepthBinSpec, noise: f64, seed: u64) -> Result<Self> {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::invalid("logit noise", format!("{noise}")));
        }
        Ok(Self {
            scene,
            bins,
            noise,
            seed,
            lanes: scene.lanes.iter().map(|l| l.polygon()).collect(),
            dividers: scene.dividers(),
        })
    }

    /// Class slot of a ground point: drivable 1, divider 2, elsewhere 3.
    fn ground_class(&self, p: &Vec2) -> usize {
        if self.dividers.iter().any(|d| d.contains(p)) {
            2
        } else if self.lanes.iter().any(|l| l.contains(p)) {
            1
        } else {
            3
        }
    }

    /// Hit and head output of a single ray, without noise.
    pub fn head_for_ray(&self, origin: &Vec3, dir: &Vec3) -> (Hit, CameraHeadOutput) {
        let hit = match ray_cast(self.scene, origin, dir) {
            Hit::Vehicle { t, .. } | Hit::Ground { t } if t > self.bins.d_max() => Hit::Sky,
            h => h,
        };
        let mut feature = vec![0.0; CAMERA_FEATURE_DIM];
        let (depth, opacity_logit) = match hit {
            Hit::Vehicle { t, .. } => {
                feature[0] = 1.0;
                (Some(t), OPACITY_VEHICLE)
            }
            Hit::Ground { t } => {
                let p = origin + dir * t;
                feature[self.ground_class(&p.xy())] = 1.0;
                (Some(t), OPACITY_GROUND)
            }
            Hit::Sky => (None, OPACITY_SKY),
        };
        let logits = match depth {
            Some(d) => {
                let w = self.bins.bin_width();
                let b_star = (d - self.bins.d_min()) / w - 0.5;
                (0..self.bins.len())
                    .map(|b| PEAK * (-0.5 * (b as f64 - b_star).powi(2)).exp())
                    .collect()
            }
            None => vec![0.0; self.bins.len()],
        };
        let head = CameraHeadOutput {
            depth: DepthDistribution { logits },
            offset: Vec3::zeros(),
            opacity_logit,
            feature,
        };
        (hit, head)
    }
}

impl FeatureProvider for OracleCamera<'_> {
    fn feature_dim(&self) -> usize {
        CAMERA_FEATURE_DIM
    }

    fn heads(&self, view: usize, camera: &Camera, stride: usize) -> Result<HeadGrid> {
        let (rows, cols) = low_res_shape(&camera.intrinsics, stride);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1000 + view as u64);
        let normal = Normal::new(0.0, self.noise.max(f64::MIN_POSITIVE)).expect("finite noise");
        let origin = *camera.pose.translation();
        let mut cells = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                let u = cell_pixel(row, col, stride);
                let dir = camera.pose.transform_vector(&camera.intrinsics.ray(&u));
                let (_, mut head) = self.head_for_ray(&origin, &dir);
                if self.noise > 0.0 {
                    head.depth
                        .logits
                        .iter_mut()
                        .for_each(|l| *l += normal.sample(&mut rng));
                }
                cells.push(head);
            }
        }
        Ok(HeadGrid { rows, cols, cells })
    }
}
