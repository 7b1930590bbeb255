use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{combo_loss, LossWeights};
use crate::camera_lift::{
    lift_ray, lift_ray_backward, CameraHeadOutput, LiftConfig, LiftTape, PixelRay,
};
use crate::error::{Error, Result};
use crate::geometry::{BevGridSpec, Gaussian3D};
use crate::radar_lift::{lift_point, lift_point_backward, RadarHeadOutput, RadarPoint};
use crate::raster::{
    chain_to_3d, rasterize_backward, render, BevFeatureMap, GaussianGrad, RasterConfig,
};

/// Per-cell affine map between feature maps, `y = W·x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    pub outputs: usize,
    pub inputs: usize,
    /// Row-major `outputs × inputs`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            outputs,
            inputs,
            weight: vec![0.0; outputs * inputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut h = Self::zeros(n, n);
        (0..n).for_each(|i| h.weight[i * n + i] = 1.0);
        h
    }

    /// Weights uniform in `±scale`, zero bias.
    pub fn seeded(outputs: usize, inputs: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Self::zeros(outputs, inputs);
        h.weight
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-scale..=scale));
        h
    }

    /// Identity plus a seeded perturbation; used as the default fusion map.
    pub fn seeded_near_identity(n: usize, scale: f64, seed: u64) -> Self {
        let mut h = Self::seeded(n, n, scale, seed);
        (0..n).for_each(|i| h.weight[i * n + i] += 1.0);
        h
    }

    pub fn apply(&self, x: &BevFeatureMap) -> Result<BevFeatureMap> {
        if x.channels() != self.inputs {
            return Err(Error::ShapeMismatch {
                context: "linear head input",
                expected: vec![self.inputs],
                got: vec![x.channels()],
            });
        }
        let mut y = BevFeatureMap::zeros(self.outputs, *x.grid());
        let cells = x.grid().cells();
        y.data_mut()
            .par_chunks_mut(cells)
            .enumerate()
            .for_each(|(o, out)| {
                out.fill(self.bias[o]);
                for i in 0..self.inputs {
                    let w = self.weight[o * self.inputs + i];
                    out.iter_mut()
                        .zip(x.channel(i))
                        .for_each(|(a, b)| *a += w * b);
                }
            });
        Ok(y)
    }

    /// Returns the parameter gradient and `dL/dx`.
    pub fn backward(
        &self,
        x: &BevFeatureMap,
        grad_out: &BevFeatureMap,
    ) -> (LinearHead, BevFeatureMap) {
        let mut g = LinearHead::zeros(self.outputs, self.inputs);
        let rows: Vec<(Vec<f64>, f64)> = (0..self.outputs)
            .into_par_iter()
            .map(|o| {
                let go = grad_out.channel(o);
                let w = (0..self.inputs)
                    .map(|i| go.iter().zip(x.channel(i)).map(|(a, b)| a * b).sum())
                    .collect();
                (w, go.iter().sum())
            })
            .collect();
        for (o, (w, b)) in rows.into_iter().enumerate() {
            g.weight[o * self.inputs..(o + 1) * self.inputs].copy_from_slice(&w);
            g.bias[o] = b;
        }
        let mut dx = BevFeatureMap::zeros(self.inputs, *x.grid());
        let cells = x.grid().cells();
        dx.data_mut()
            .par_chunks_mut(cells)
            .enumerate()
            .for_each(|(i, out)| {
                for o in 0..self.outputs {
                    let w = self.weight[o * self.inputs + i];
                    out.iter_mut()
                        .zip(grad_out.channel(o))
                        .for_each(|(a, b)| *a += w * b);
                }
            });
        (g, dx)
    }
}

/// Fixed inputs of a fit: sensor geometry, the radar cloud, the target.
#[derive(Clone, Debug)]
pub struct FitInputs {
    pub grid: BevGridSpec,
    pub lift: LiftConfig,
    pub raster: RasterConfig,
    /// One viewing ray per camera feature cell.
    pub rays: Vec<PixelRay>,
    pub cloud: Vec<RadarPoint>,
    /// Binary masks, one channel per class.
    pub target: BevFeatureMap,
}

/// Everything a fit optimizes. A branch with feature dimension 0 is absent;
/// the same type holds gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FitParams {
    pub camera_dim: usize,
    pub radar_dim: usize,
    /// One head output per entry of [`FitInputs::rays`].
    pub camera: Vec<CameraHeadOutput>,
    /// One head output per entry of [`FitInputs::cloud`].
    pub radar: Vec<RadarHeadOutput>,
    /// Concatenated branch features to fused features.
    pub fusion: LinearHead,
    pub main_head: LinearHead,
    pub aux_head: LinearHead,
}

impl FitParams {
    pub fn zeros_like(&self) -> Self {
        let zero_camera = |h: &CameraHeadOutput| {
            let mut z = h.clone();
            z.depth.logits.fill(0.0);
            z.offset.fill(0.0);
            z.opacity_logit = 0.0;
            z.feature.fill(0.0);
            z
        };
        let zero_radar = |h: &RadarHeadOutput| {
            let mut z = h.clone();
            z.offset.fill(0.0);
            z.cov6 = [0.0; 6];
            z.opacity_logit = 0.0;
            z.feature.fill(0.0);
            z
        };
        let zero_head = |h: &LinearHead| LinearHead::zeros(h.outputs, h.inputs);
        Self {
            camera_dim: self.camera_dim,
            radar_dim: self.radar_dim,
            camera: self.camera.iter().map(zero_camera).collect(),
            radar: self.radar.iter().map(zero_radar).collect(),
            fusion: zero_head(&self.fusion),
            main_head: zero_head(&self.main_head),
            aux_head: zero_head(&self.aux_head),
        }
    }

    pub fn validate(&self, inputs: &FitInputs) -> Result<()> {
        let classes = inputs.target.channels();
        let fused = self.fusion.outputs;
        let checks = [
            (
                "camera heads",
                self.camera.len(),
                if self.camera_dim > 0 {
                    inputs.rays.len()
                } else {
                    0
                },
            ),
            (
                "radar heads",
                self.radar.len(),
                if self.radar_dim > 0 {
                    inputs.cloud.len()
                } else {
                    0
                },
            ),
            (
                "fusion input",
                self.fusion.inputs,
                self.camera_dim + self.radar_dim,
            ),
            ("main head input", self.main_head.inputs, fused),
            ("aux head input", self.aux_head.inputs, fused),
            ("main head output", self.main_head.outputs, classes),
            ("aux head output", self.aux_head.outputs, classes),
        ];
        for (context, got, expected) in checks {
            if got != expected {
                return Err(Error::ShapeMismatch {
                    context,
                    expected: vec![expected],
                    got: vec![got],
                });
            }
        }
        if let Some(h) = self
            .camera
            .iter()
            .find(|h| h.feature.len() != self.camera_dim)
        {
            return Err(Error::ShapeMismatch {
                context: "camera feature",
                expected: vec![self.camera_dim],
                got: vec![h.feature.len()],
            });
        }
        if let Some(h) = self
            .radar
            .iter()
            .find(|h| h.feature.len() != self.radar_dim)
        {
            return Err(Error::ShapeMismatch {
                context: "radar feature",
                expected: vec![self.radar_dim],
                got: vec![h.feature.len()],
            });
        }
        Ok(())
    }
}

/// Output of [`evaluate`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub main_logits: BevFeatureMap,
    pub aux_logits: BevFeatureMap,
    /// Number of camera and radar Gaussians left after pruning.
    pub camera_gaussians: usize,
    pub radar_gaussians: usize,
}

struct Branch<T> {
    gaussians: Vec<Gaussian3D>,
    /// Head index of each Gaussian.
    source: Vec<usize>,
    tapes: Vec<T>,
}

fn lift_camera(inputs: &FitInputs, params: &FitParams) -> Result<Branch<LiftTape>> {
    let lifted: Vec<Option<(Gaussian3D, LiftTape)>> = inputs
        .rays
        .par_iter()
        .zip(params.camera.par_iter())
        .map(|(ray, head)| {
            let (g, tape) = lift_ray(ray, head, &inputs.lift)?;
            Ok((g.opacity >= inputs.lift.alpha_min).then_some((g, tape)))
        })
        .collect::<Result<_>>()?;
    let mut b = Branch {
        gaussians: Vec::new(),
        source: Vec::new(),
        tapes: Vec::new(),
    };
    for (i, item) in lifted.into_iter().enumerate() {
        if let Some((g, t)) = item {
            b.gaussians.push(g);
            b.source.push(i);
            b.tapes.push(t);
        }
    }
    Ok(b)
}

fn lift_radar(inputs: &FitInputs, params: &FitParams) -> Result<Branch<()>> {
    let lifted: Vec<Option<Gaussian3D>> = inputs
        .cloud
        .par_iter()
        .zip(params.radar.par_iter())
        .map(|(p, h)| lift_point(p, h, inputs.lift.alpha_min))
        .collect::<Result<_>>()?;
    let mut b = Branch {
        gaussians: Vec::new(),
        source: Vec::new(),
        tapes: Vec::new(),
    };
    for (i, g) in lifted.into_iter().enumerate() {
        if let Some(g) = g {
            b.gaussians.push(g);
            b.source.push(i);
            b.tapes.push(());
        }
    }
    Ok(b)
}

/// A rasterized branch and what its backward pass needs.
struct Rendered {
    map: BevFeatureMap,
    aux: crate::raster::RasterAux,
    splats: Vec<crate::raster::Splat2D>,
}

fn render_branch(gaussians: &[Gaussian3D], dim: usize, inputs: &FitInputs) -> Result<Rendered> {
    let (map, aux, splats) = render(gaussians, dim, &inputs.grid, &inputs.raster)?;
    Ok(Rendered { map, aux, splats })
}

fn branch_backward(
    r: &Rendered,
    gaussians: &[Gaussian3D],
    inputs: &FitInputs,
    grad: &BevFeatureMap,
) -> Result<Vec<GaussianGrad>> {
    let splat_grads = rasterize_backward(&r.splats, &inputs.grid, &r.aux, grad)?;
    let dim = grad.channels();
    let mut out = vec![GaussianGrad::zeros(dim); gaussians.len()];
    let pulled: Vec<(usize, GaussianGrad)> = r
        .splats
        .par_iter()
        .zip(splat_grads.par_iter())
        .map(|(s, g)| {
            (
                s.source_index,
                chain_to_3d(&gaussians[s.source_index], &inputs.grid, g),
            )
        })
        .collect();
    for (i, g) in pulled {
        out[i] = g;
    }
    Ok(out)
}

struct Forward {
    camera: Option<(Branch<LiftTape>, Rendered)>,
    radar: Option<(Branch<()>, Rendered)>,
    concat: BevFeatureMap,
    fused: BevFeatureMap,
    main: BevFeatureMap,
    aux: BevFeatureMap,
}

fn forward(inputs: &FitInputs, params: &FitParams) -> Result<Forward> {
    params.validate(inputs)?;
    let camera = if params.camera_dim > 0 {
        let b = lift_camera(inputs, params)?;
        let r = render_branch(&b.gaussians, params.camera_dim, inputs)?;
        Some((b, r))
    } else {
        None
    };
    let radar = if params.radar_dim > 0 {
        let b = lift_radar(inputs, params)?;
        let r = render_branch(&b.gaussians, params.radar_dim, inputs)?;
        Some((b, r))
    } else {
        None
    };
    let maps: Vec<&BevFeatureMap> = camera
        .iter()
        .map(|c| &c.1.map)
        .chain(radar.iter().map(|r| &r.1.map))
        .collect();
    if maps.is_empty() {
        return Err(Error::invalid(
            "fit parameters",
            "no sensor branch is active",
        ));
    }
    let concat = BevFeatureMap::concat(&maps)?;
    let fused = params.fusion.apply(&concat)?;
    let main = params.main_head.apply(&fused)?;
    let aux = params.aux_head.apply(&fused)?;
    Ok(Forward {
        camera,
        radar,
        concat,
        fused,
        main,
        aux,
    })
}

/// Loss and predictions without gradients.
pub fn evaluate(
    inputs: &FitInputs,
    params: &FitParams,
    weights: &LossWeights,
) -> Result<Evaluation> {
    let f = forward(inputs, params)?;
    let loss = combo_loss(&f.main, &f.aux, &inputs.target, weights)?.total;
    Ok(Evaluation {
        loss,
        camera_gaussians: f.camera.as_ref().map_or(0, |c| c.0.gaussians.len()),
        radar_gaussians: f.radar.as_ref().map_or(0, |r| r.0.gaussians.len()),
        main_logits: f.main,
        aux_logits: f.aux,
    })
}

/// Loss, predictions and the gradient with respect to every parameter.
pub fn loss_and_grad(
    inputs: &FitInputs,
    params: &FitParams,
    weights: &LossWeights,
) -> Result<(Evaluation, FitParams)> {
    let f = forward(inputs, params)?;
    let combo = combo_loss(&f.main, &f.aux, &inputs.target, weights)?;
    let mut grads = params.zeros_like();

    let (g_main, d_fused_main) = params.main_head.backward(&f.fused, &combo.grad_main);
    let (g_aux, d_fused_aux) = params.aux_head.backward(&f.fused, &combo.grad_aux);
    let mut d_fused = d_fused_main;
    d_fused
        .data_mut()
        .iter_mut()
        .zip(d_fused_aux.data())
        .for_each(|(a, b)| *a += b);
    let (g_fusion, d_concat) = params.fusion.backward(&f.concat, &d_fused);
    grads.main_head = g_main;
    grads.aux_head = g_aux;
    grads.fusion = g_fusion;

    let cells = inputs.grid.cells();
    let slice_grad = |from: usize, dim: usize| {
        BevFeatureMap::from_data(
            dim,
            inputs.grid,
            d_concat.data()[from * cells..(from + dim) * cells].to_vec(),
        )
    };
    if let Some((b, r)) = &f.camera {
        let g_map = slice_grad(0, params.camera_dim)?;
        let gg = branch_backward(r, &b.gaussians, inputs, &g_map)?;
        let heads: Vec<_> = (0..b.gaussians.len())
            .into_par_iter()
            .map(|k| {
                lift_ray_backward(&inputs.rays[b.source[k]], &b.tapes[k], &gg[k], &inputs.lift)
            })
            .collect();
        for (k, h) in heads.into_iter().enumerate() {
            let dst = &mut grads.camera[b.source[k]];
            dst.depth.logits = h.depth_logits;
            dst.offset = h.offset;
            dst.opacity_logit = h.opacity_logit;
            dst.feature = h.feature;
        }
    }
    if let Some((b, r)) = &f.radar {
        let g_map = slice_grad(params.camera_dim, params.radar_dim)?;
        let gg = branch_backward(r, &b.gaussians, inputs, &g_map)?;
        let heads: Vec<_> = (0..b.gaussians.len())
            .into_par_iter()
            .map(|k| lift_point_backward(&params.radar[b.source[k]], &gg[k]))
            .collect::<Result<_>>()?;
        for (k, h) in heads.into_iter().enumerate() {
            let dst = &mut grads.radar[b.source[k]];
            dst.offset = h.offset;
            dst.cov6 = h.cov6;
            dst.opacity_logit = h.opacity_logit;
            dst.feature = h.feature;
        }
    }
    let eval = Evaluation {
        loss: combo.total,
        camera_gaussians: f.camera.as_ref().map_or(0, |c| c.0.gaussians.len()),
        radar_gaussians: f.radar.as_ref().map_or(0, |r| r.0.gaussians.len()),
        main_logits: f.main,
        aux_logits: f.aux,
    };
    Ok((eval, grads))
}
