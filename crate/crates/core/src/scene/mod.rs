//! Procedural driving scenes: a curved multi-lane road, vehicles on it, a
//! surround camera rig and a radar at the ego origin. Every sampled quantity
//! is a pure function of the scene seed.

mod camera_oracle;
mod gen;
mod gt;
mod radar_sim;
pub mod shapes;

pub use camera_oracle::{ray_cast, Hit, OracleCamera, CAMERA_FEATURE_DIM};
pub use gen::{default_rig, gen_scene, gen_scene_with, GenConfig, LANE_WIDTH};
pub use gt::{render_gt_bev, SegClass};
pub use radar_sim::{sample_radar, OracleRadar, RadarSimConfig, SweepSet, RADAR_FEATURE_DIM};

use serde::{Deserialize, Serialize};

use crate::geometry::{Camera, Vec2, Vec3};
use shapes::{buffer_polyline, rect_corners, Polygon};

/// Width of a painted lane divider, m.
pub const DIVIDER_WIDTH: f64 = 0.6;

/// An oriented box resting on the ground.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    /// Box centre, m; `z` is half the height.
    pub center: Vec3,
    /// Length (along the heading), width and height, m.
    pub size: Vec3,
    /// Heading, radians from +x, counter-clockwise.
    pub yaw: f64,
    /// Ground velocity, m/s.
    pub velocity: Vec2,
}

impl Vehicle {
    pub fn footprint(&self) -> [Vec2; 4] {
        rect_corners(&self.center.xy(), self.size.x, self.size.y, self.yaw)
    }

    /// The same vehicle `t` seconds later (earlier for negative `t`) under
    /// constant velocity.
    pub fn at_time(&self, t: f64) -> Vehicle {
        let mut v = self.clone();
        v.center.x += self.velocity.x * t;
        v.center.y += self.velocity.y * t;
        v
    }

    /// Maps an ego point into the box frame (x along the heading).
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center;
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    pub fn contains_xy(&self, p: &Vec2, margin: f64) -> bool {
        let l = self.to_local(&Vec3::new(p.x, p.y, self.center.z));
        l.x.abs() <= 0.5 * self.size.x + margin && l.y.abs() <= 0.5 * self.size.y + margin
    }
}

/// One lane: centreline samples and a constant width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub centerline: Vec<Vec2>,
    pub width: f64,
}

impl Lane {
    pub fn polygon(&self) -> Polygon {
        buffer_polyline(&self.centerline, self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub vehicles: Vec<Vehicle>,
    /// Adjacent lanes, ordered left to right.
    pub lanes: Vec<Lane>,
    pub cameras: Vec<Camera>,
    pub radar: RadarSimConfig,
}

impl Scene {
    /// Painted lines between neighbouring lanes, as polygons. Neighbours
    /// must share their centreline sampling.
    pub fn dividers(&self) -> Vec<Polygon> {
        self.lanes
            .windows(2)
            .filter(|w| {
                w[0].centerline.len() == w[1].centerline.len() && w[0].centerline.len() >= 2
            })
            .map(|w| {
                let mid: Vec<Vec2> = w[0]
                    .centerline
                    .iter()
                    .zip(&w[1].centerline)
                    .map(|(a, b)| (a + b) * 0.5)
                    .collect();
                buffer_polyline(&mid, DIVIDER_WIDTH)
            })
            .collect()
    }
}
