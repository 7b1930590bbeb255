use super::adam::Adam;
use super::loss::LossWeights;
use super::metric::iou_per_class;
use super::model::{evaluate, loss_and_grad, FitInputs, FitParams, LinearHead};
use crate::error::{Error, Result};
use crate::raster::BevFeatureMap;

/// Step-size multipliers per parameter group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrScales {
    pub depth_logits: f64,
    pub camera_offset: f64,
    pub camera_opacity: f64,
    pub camera_feature: f64,
    pub radar_offset: f64,
    pub radar_cov6: f64,
    pub radar_opacity: f64,
    pub radar_feature: f64,
    pub heads: f64,
}

impl LrScales {
    pub fn uniform(s: f64) -> Self {
        Self {
            depth_logits: s,
            camera_offset: s,
            camera_opacity: s,
            camera_feature: s,
            radar_offset: s,
            radar_cov6: s,
            radar_opacity: s,
            radar_feature: s,
            heads: s,
        }
    }
}

impl Default for LrScales {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

/// Bounds re-applied after every update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamClamps {
    /// Depth and opacity logits.
    pub logit: f64,
    /// Entries of the radar covariance 6-vector.
    pub cov6: f64,
    /// Branch features.
    pub feature: f64,
}

impl Default for ParamClamps {
    fn default() -> Self {
        Self {
            logit: 30.0,
            cov6: 8.0,
            feature: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub lr: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr_scales: LrScales,
    pub clamps: ParamClamps,
    pub weights: LossWeights,
    /// Probability threshold for the IoU metric.
    pub threshold: f64,
    /// Seeds the fusion and head initialization of [`init_heads`].
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            iterations: 500,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_scales: LrScales::default(),
            clamps: ParamClamps::default(),
            weights: LossWeights::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate", format!("{}", self.lr)));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "need at least one"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0)
        {
            return Err(Error::invalid(
                "optimizer moments",
                format!("{} {} {}", self.beta1, self.beta2, self.eps),
            ));
        }
        Ok(())
    }
}

/// Seeded fusion map plus main and auxiliary heads for the given branch
/// widths and class count.
pub fn init_heads(
    fused_in: usize,
    classes: usize,
    seed: u64,
) -> (LinearHead, LinearHead, LinearHead) {
    let fusion = LinearHead::seeded_near_identity(fused_in, 0.1, seed);
    let main = LinearHead::seeded(classes, fused_in, 0.1, seed.wrapping_add(1));
    let aux = LinearHead::seeded(classes, fused_in, 0.1, seed.wrapping_add(2));
    (fusion, main, aux)
}

/// Metrics before the update of one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRecord {
    pub iteration: usize,
    pub loss: f64,
    /// Per-class IoU of the main head.
    pub iou: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub trajectory: Vec<FitRecord>,
    pub params: FitParams,
    /// Loss and IoU after the last update.
    pub final_loss: f64,
    pub final_iou: Vec<f64>,
    pub final_logits: BevFeatureMap,
}

fn clamp_all(v: &mut [f64], c: f64) {
    v.iter_mut().for_each(|x| *x = x.clamp(-c, c));
}

/// Applies one Adam step to every parameter group, in a fixed order.
fn apply_update(
    adam: &mut Adam,
    p: &mut FitParams,
    g: &FitParams,
    cfg: &FitConfig,
    offset_clamp: f64,
) {
    let s = &cfg.lr_scales;
    let c = &cfg.clamps;
    adam.begin_step();
    let mut off = 0;
    let mut upd = |adam: &mut Adam, x: &mut [f64], gx: &[f64], scale: f64| {
        if scale != 0.0 {
            adam.update(off, x, gx, cfg.lr * scale);
        }
        off += x.len();
    };
    for (h, gh) in p.camera.iter_mut().zip(&g.camera) {
        upd(adam, &mut h.depth.logits, &gh.depth.logits, s.depth_logits);
        upd(
            adam,
            h.offset.as_mut_slice(),
            gh.offset.as_slice(),
            s.camera_offset,
        );
        upd(
            adam,
            std::slice::from_mut(&mut h.opacity_logit),
            &[gh.opacity_logit],
            s.camera_opacity,
        );
        upd(adam, &mut h.feature, &gh.feature, s.camera_feature);
        clamp_all(&mut h.depth.logits, c.logit);
        clamp_all(h.offset.as_mut_slice(), offset_clamp);
        h.opacity_logit = h.opacity_logit.clamp(-c.logit, c.logit);
        clamp_all(&mut h.feature, c.feature);
    }
    for (h, gh) in p.radar.iter_mut().zip(&g.radar) {
        upd(
            adam,
            h.offset.as_mut_slice(),
            gh.offset.as_slice(),
            s.radar_offset,
        );
        upd(adam, &mut h.cov6, &gh.cov6, s.radar_cov6);
        upd(
            adam,
            std::slice::from_mut(&mut h.opacity_logit),
            &[gh.opacity_logit],
            s.radar_opacity,
        );
        upd(adam, &mut h.feature, &gh.feature, s.radar_feature);
        clamp_all(&mut h.cov6, c.cov6);
        h.opacity_logit = h.opacity_logit.clamp(-c.logit, c.logit);
        clamp_all(&mut h.feature, c.feature);
    }
    for (h, gh) in [
        (&mut p.fusion, &g.fusion),
        (&mut p.main_head, &g.main_head),
        (&mut p.aux_head, &g.aux_head),
    ] {
        upd(adam, &mut h.weight, &gh.weight, s.heads);
        upd(adam, &mut h.bias, &gh.bias, s.heads);
    }
}

fn param_count(p: &FitParams) -> usize {
    let cam: usize = p
        .camera
        .iter()
        .map(|h| h.depth.logits.len() + 4 + h.feature.len())
        .sum();
    let rad: usize = p.radar.iter().map(|h| 10 + h.feature.len()).sum();
    let heads: usize = [&p.fusion, &p.main_head, &p.aux_head]
        .iter()
        .map(|h| h.weight.len() + h.bias.len())
        .sum();
    cam + rad + heads
}

/// First-order fit of all head outputs and the fusion and segmentation heads
/// to the target masks. `on_record` sees each iteration's metrics as soon as
/// they exist, so callers keep a partial log if the fit diverges.
pub fn fit(
    inputs: &FitInputs,
    init: FitParams,
    cfg: &FitConfig,
    mut on_record: impl FnMut(&FitRecord),
) -> Result<FitResult> {
    cfg.validate()?;
    init.validate(inputs)?;
    let mut params = init;
    let mut adam = Adam::new(param_count(&params), cfg.beta1, cfg.beta2, cfg.eps);
    let mut trajectory = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let (eval, grads) = match loss_and_grad(inputs, &params, &cfg.weights) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => {
                return Err(Error::Divergence {
                    iteration,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        if !eval.loss.is_finite() {
            return Err(Error::Divergence {
                iteration,
                loss: eval.loss,
            });
        }
        let record = FitRecord {
            iteration,
            loss: eval.loss,
            iou: iou_per_class(&eval.main_logits, &inputs.target, cfg.threshold)?,
        };
        on_record(&record);
        trajectory.push(record);
        apply_update(
            &mut adam,
            &mut params,
            &grads,
            cfg,
            inputs.lift.offset_clamp,
        );
    }
    let eval = evaluate(inputs, &params, &cfg.weights)?;
    if !eval.loss.is_finite() {
        return Err(Error::Divergence {
            iteration: cfg.iterations,
            loss: eval.loss,
        });
    }
    Ok(FitResult {
        final_iou: iou_per_class(&eval.main_logits, &inputs.target, cfg.threshold)?,
        final_loss: eval.loss,
        final_logits: eval.main_logits,
        trajectory,
        params,
    })
}
