use rayon::prelude::*;

use super::shapes::Polygon;
use super::Scene;
use crate::error::{Error, Result};
use crate::geometry::{BevGridSpec, Vec2};
use crate::raster::BevFeatureMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegClass {
    Vehicle,
    Drivable,
    Divider,
}

impl SegClass {
    pub const ALL: [SegClass; 3] = [SegClass::Vehicle, SegClass::Drivable, SegClass::Divider];

    pub fn name(&self) -> &'static str {
        match self {
            SegClass::Vehicle => "vehicle",
            SegClass::Drivable => "drivable",
            SegClass::Divider => "divider",
        }
    }
}

impl std::str::FromStr for SegClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SegClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid("class", s.to_string()))
    }
}

fn fill(mask: &mut [f64], grid: &BevGridSpec, poly: &Polygon) {
    let (lo, hi) = poly.bounds();
    let res = grid.resolution();
    let col0 = (((lo.x - grid.x_min()) / res - 0.5).ceil().max(0.0)) as usize;
    let row0 = (((lo.y - grid.y_min()) / res - 0.5).ceil().max(0.0)) as usize;
    let col1 =
        ((((hi.x - grid.x_min()) / res - 0.5).floor() + 1.0).max(0.0) as usize).min(grid.width());
    let row1 =
        ((((hi.y - grid.y_min()) / res - 0.5).floor() + 1.0).max(0.0) as usize).min(grid.height());
    let width = grid.width();
    mask.par_chunks_mut(width)
        .enumerate()
        .skip(row0)
        .take(row1.saturating_sub(row0))
        .for_each(|(row, line)| {
            for (col, v) in line.iter_mut().enumerate().take(col1).skip(col0) {
                let (x, y) = grid.cell_center(row, col);
                if poly.contains(&Vec2::new(x, y)) {
                    *v = 1.0;
                }
            }
        });
}

/// Binary masks, one channel per requested class; a cell is set when its
/// centre lies inside a shape of that class.
pub fn render_gt_bev(scene: &Scene, grid: &BevGridSpec, classes: &[SegClass]) -> BevFeatureMap {
    let mut out = BevFeatureMap::zeros(classes.len(), *grid);
    for (c, class) in classes.iter().enumerate() {
        let shapes: Vec<Polygon> = match class {
            SegClass::Vehicle => scene
                .vehicles
                .iter()
                .map(|v| Polygon::new(v.footprint().to_vec()))
                .collect(),
            SegClass::Drivable => scene.lanes.iter().map(|l| l.polygon()).collect(),
            SegClass::Divider => scene.dividers(),
        };
        let mask = out.channel_mut(c);
        for poly in &shapes {
            fill(mask, grid, poly);
        }
    }
    out
}
