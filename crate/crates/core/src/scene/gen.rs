use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shapes::{rect_corners, rects_overlap};
use super::{Lane, RadarSimConfig, Scene, Vehicle};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Mat3, PinholeIntrinsics, Se3Pose, Vec2, Vec3};

pub const LANE_WIDTH: f64 = 3.5;

/// Rejection budget shared by all vehicles of a scene.
const MAX_REJECTIONS: usize = 10_000;

/// Ego footprint kept free of vehicles, m (length, width), plus clearance.
const EGO_SIZE: (f64, f64) = (4.6, 2.0);
const EGO_CLEARANCE: f64 = 1.0;
const VEHICLE_GAP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub n_vehicles: usize,
    pub n_lanes: usize,
    /// Vehicles are placed with `|y| ≤ placement_range`.
    pub placement_range: f64,
    /// Lanes are sampled over `|y| ≤ road_extent`.
    pub road_extent: f64,
    /// Upper bound on `|x''|` of the road centreline, 1/m.
    pub max_curvature: f64,
    pub max_speed: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 5,
            n_lanes: 3,
            placement_range: 40.0,
            road_extent: 60.0,
            max_curvature: 0.002,
            max_speed: 12.0,
        }
    }
}

/// Six cameras at 60° spacing, 800×448 px, `fx = fy = 500`, mounted 1.6 m
/// up. Camera `i` looks along yaw `i·60°` from +y.
pub fn default_rig() -> Vec<Camera> {
    let intr = PinholeIntrinsics::new(500.0, 500.0, 400.0, 224.0, 800, 448)
        .expect("valid default intrinsics");
    (0..6)
        .map(|i| {
            let psi = (i as f64) * std::f64::consts::FRAC_PI_3;
            let (s, c) = psi.sin_cos();
            let right = Vec3::new(c, s, 0.0);
            let down = Vec3::new(0.0, 0.0, -1.0);
            let forward = Vec3::new(-s, c, 0.0);
            let rotation = Mat3::from_columns(&[right, down, forward]);
            let pose = Se3Pose::new(rotation, Vec3::new(0.0, 0.0, 1.6) + forward * 0.5)
                .expect("rig rotation is orthonormal");
            Camera {
                intrinsics: intr,
                pose,
            }
        })
        .collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Deterministic scene with default generation settings.
pub fn gen_scene(seed: u64, n_vehicles: usize, n_lanes: usize) -> Result<Scene> {
    gen_scene_with(
        seed,
        &GenConfig {
            n_vehicles,
            n_lanes,
            ..GenConfig::default()
        },
    )
}

pub fn gen_scene_with(seed: u64, cfg: &GenConfig) -> Result<Scene> {
    if cfg.n_lanes == 0 && cfg.n_vehicles > 0 {
        return Err(Error::invalid("scene", "vehicles need at least one lane"));
    }
    let mut layout = stream(seed, 0);
    let curvature = layout.random_range(-cfg.max_curvature..=cfg.max_curvature);
    // The ego drives in the middle lane (left of centre for even counts).
    let ego_lane = cfg.n_lanes.saturating_sub(1) / 2;
    let lane_x =
        |k: usize, y: f64| (k as f64 - ego_lane as f64) * LANE_WIDTH + 0.5 * curvature * y * y;
    let lane_heading = |y: f64| Vec2::new(curvature * y, 1.0).normalize();
    let samples = (cfg.road_extent / 2.0).ceil() as i64;
    let lanes: Vec<Lane> = (0..cfg.n_lanes)
        .map(|k| Lane {
            centerline: (-samples..=samples)
                .map(|i| {
                    let y = 2.0 * i as f64;
                    Vec2::new(lane_x(k, y), y)
                })
                .collect(),
            width: LANE_WIDTH,
        })
        .collect();

    let ego = rect_corners(
        &Vec2::zeros(),
        EGO_SIZE.1 + 2.0 * EGO_CLEARANCE,
        EGO_SIZE.0 + 2.0 * EGO_CLEARANCE,
        0.0,
    );
    let mut vehicles: Vec<Vehicle> = Vec::with_capacity(cfg.n_vehicles);
    let mut footprints = Vec::with_capacity(cfg.n_vehicles);
    let mut rejections = 0;
    for i in 0..cfg.n_vehicles {
        let mut rng = stream(seed, 1 + i as u64);
        loop {
            let lane = rng.random_range(0..cfg.n_lanes);
            let y = rng.random_range(-cfg.placement_range..=cfg.placement_range);
            let t = lane_heading(y);
            let size = Vec3::new(
                rng.random_range(3.9..=5.0),
                rng.random_range(1.7..=2.0),
                rng.random_range(1.4..=1.8),
            );
            let jitter: f64 = rng.random_range(-0.3..=0.3);
            let speed = rng.random_range(0.0..=cfg.max_speed);
            let center = Vec2::new(lane_x(lane, y), y) + Vec2::new(t.y, -t.x) * jitter;
            let yaw = t.y.atan2(t.x);
            let fp = rect_corners(&center, size.x + VEHICLE_GAP, size.y + VEHICLE_GAP, yaw);
            if !rects_overlap(&fp, &ego) && footprints.iter().all(|f| !rects_overlap(&fp, f)) {
                footprints.push(fp);
                vehicles.push(Vehicle {
                    center: Vec3::new(center.x, center.y, 0.5 * size.z),
                    size,
                    yaw,
                    velocity: t * speed,
                });
                break;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::Placement {
                    placed: vehicles.len(),
                    requested: cfg.n_vehicles,
                    attempts: rejections,
                });
            }
        }
    }
    Ok(Scene {
        seed,
        vehicles,
        lanes,
        cameras: default_rig(),
        radar: RadarSimConfig::default(),
    })
}
