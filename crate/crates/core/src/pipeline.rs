//! Scene to BEV: oracle heads, lifting, splatting and fusion, plus the
//! assembly of fit problems.

use crate::camera_lift::{
    cell_pixel, lift_image, low_res_shape, CameraHeadOutput, FeatureProvider, LiftConfig, PixelRay,
};
use crate::error::{Error, Result};
use crate::geometry::BevGridSpec;
use crate::radar_lift::{lift_cloud, PointFeatureProvider, RadarHeadOutput, RadarPoint};
use crate::raster::{render, BevFeatureMap, RasterConfig};
use crate::scene::{
    render_gt_bev, sample_radar, OracleCamera, OracleRadar, Scene, SegClass, CAMERA_FEATURE_DIM,
    RADAR_FEATURE_DIM,
};
use crate::training::{init_heads, FitInputs, FitParams, LinearHead};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Camera,
    Radar,
    Both,
}

impl Modality {
    pub fn uses_camera(&self) -> bool {
        matches!(self, Modality::Camera | Modality::Both)
    }

    pub fn uses_radar(&self) -> bool {
        matches!(self, Modality::Radar | Modality::Both)
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "camera" => Ok(Modality::Camera),
            "radar" => Ok(Modality::Radar),
            "both" => Ok(Modality::Both),
            other => Err(Error::invalid("modality", other.to_string())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub grid: BevGridSpec,
    pub lift: LiftConfig,
    pub raster: RasterConfig,
    /// Noise on the oracle depth logits.
    pub camera_noise: f64,
    pub modality: Modality,
    /// Seeds oracle noise and the fusion map.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid: BevGridSpec::default(),
            lift: LiftConfig::default(),
            raster: RasterConfig::default(),
            camera_noise: 0.5,
            modality: Modality::Both,
            seed: 0,
        }
    }
}

/// Viewing rays of every camera feature cell, in (camera, row, col) order.
pub fn camera_rays(scene: &Scene, lift: &LiftConfig) -> Result<Vec<PixelRay>> {
    let mut rays = Vec::new();
    for cam in &scene.cameras {
        let (rows, cols) = low_res_shape(&cam.intrinsics, lift.stride);
        for row in 0..rows {
            for col in 0..cols {
                rays.push(PixelRay::new(
                    &cell_pixel(row, col, lift.stride),
                    &cam.intrinsics,
                    &cam.pose,
                    lift.stride,
                )?);
            }
        }
    }
    Ok(rays)
}

/// Oracle head outputs in the order of [`camera_rays`].
pub fn camera_heads(scene: &Scene, cfg: &PipelineConfig) -> Result<Vec<CameraHeadOutput>> {
    let oracle = OracleCamera::new(scene, cfg.lift.bins.clone(), cfg.camera_noise, cfg.seed)?;
    let mut heads = Vec::new();
    for (view, cam) in scene.cameras.iter().enumerate() {
        heads.extend(oracle.heads(view, cam, cfg.lift.stride)?.cells);
    }
    Ok(heads)
}

/// Simulated sweeps accumulated into the current ego frame.
pub fn radar_cloud(scene: &Scene) -> Result<Vec<RadarPoint>> {
    sample_radar(scene, &scene.radar)?.accumulate()
}

/// Fixed fusion map used by [`splat_scene`] for combined modalities.
pub fn fusion_map(channels: usize, seed: u64) -> LinearHead {
    LinearHead::seeded_near_identity(channels, 0.1, seed ^ 0x5eed)
}

/// BEV features of a scene and the channel split between branches.
#[derive(Clone, Debug)]
pub struct SplatOutput {
    pub features: BevFeatureMap,
    pub camera_channels: usize,
    pub radar_channels: usize,
    pub camera_gaussians: usize,
    pub radar_gaussians: usize,
}

/// Oracle heads, lifting and splatting for the configured modality; both
/// branches are concatenated and passed through [`fusion_map`].
pub fn splat_scene(scene: &Scene, cfg: &PipelineConfig) -> Result<SplatOutput> {
    let mut maps = Vec::new();
    let (mut camera_gaussians, mut radar_gaussians) = (0, 0);
    if cfg.modality.uses_camera() {
        let oracle = OracleCamera::new(scene, cfg.lift.bins.clone(), cfg.camera_noise, cfg.seed)?;
        let batch = lift_image(&oracle, &scene.cameras, &cfg.lift)?;
        camera_gaussians = batch.gaussians.len();
        maps.push(
            render(
                &batch.gaussians,
                oracle.feature_dim(),
                &cfg.grid,
                &cfg.raster,
            )?
            .0,
        );
    }
    if cfg.modality.uses_radar() {
        let cloud = radar_cloud(scene)?;
        let oracle = OracleRadar::new(scene);
        let batch = lift_cloud(&cloud, &oracle, cfg.lift.alpha_min)?;
        radar_gaussians = batch.gaussians.len();
        maps.push(
            render(
                &batch.gaussians,
                oracle.feature_dim(),
                &cfg.grid,
                &cfg.raster,
            )?
            .0,
        );
    }
    let camera_channels = if cfg.modality.uses_camera() {
        CAMERA_FEATURE_DIM
    } else {
        0
    };
    let radar_channels = if cfg.modality.uses_radar() {
        RADAR_FEATURE_DIM
    } else {
        0
    };
    let features = if maps.len() == 2 {
        let cat = BevFeatureMap::concat(&[&maps[0], &maps[1]])?;
        fusion_map(cat.channels(), cfg.seed).apply(&cat)?
    } else {
        maps.pop().expect("one branch is active")
    };
    crate::error::ensure_finite("bev features", features.data())?;
    Ok(SplatOutput {
        features,
        camera_channels,
        radar_channels,
        camera_gaussians,
        radar_gaussians,
    })
}

/// Fit problem for a scene: targets are the ground-truth masks of all
/// classes, initial heads come from the oracles.
pub fn build_fit(scene: &Scene, cfg: &PipelineConfig) -> Result<(FitInputs, FitParams)> {
    let use_cam = cfg.modality.uses_camera();
    let use_rad = cfg.modality.uses_radar();
    let rays = if use_cam {
        camera_rays(scene, &cfg.lift)?
    } else {
        Vec::new()
    };
    let camera: Vec<CameraHeadOutput> = if use_cam {
        camera_heads(scene, cfg)?
    } else {
        Vec::new()
    };
    let cloud = if use_rad {
        radar_cloud(scene)?
    } else {
        Vec::new()
    };
    let radar: Vec<RadarHeadOutput> = if use_rad {
        OracleRadar::new(scene).heads(&cloud)?
    } else {
        Vec::new()
    };
    let camera_dim = if use_cam { CAMERA_FEATURE_DIM } else { 0 };
    let radar_dim = if use_rad { RADAR_FEATURE_DIM } else { 0 };
    let target = render_gt_bev(scene, &cfg.grid, &SegClass::ALL);
    let (fusion, main_head, aux_head) =
        init_heads(camera_dim + radar_dim, SegClass::ALL.len(), cfg.seed);
    let inputs = FitInputs {
        grid: cfg.grid,
        lift: cfg.lift.clone(),
        raster: cfg.raster,
        rays,
        cloud,
        target,
    };
    let params = FitParams {
        camera_dim,
        radar_dim,
        camera,
        radar,
        fusion,
        main_head,
        aux_head,
    };
    params.validate(&inputs)?;
    Ok((inputs, params))
}
