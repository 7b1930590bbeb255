mod common;

use bevsplat::camera_lift::{CameraHeadOutput, DepthDistribution, LiftConfig, PixelRay};
use bevsplat::geometry::{BevGridSpec, DepthBinSpec, Gaussian3D, Mat3, Se3Pose, Vec2, Vec3};
use bevsplat::radar_lift::{RadarHeadOutput, RadarPoint};
use bevsplat::raster::{rasterize_backward, render, BevFeatureMap, RasterConfig};
use bevsplat::training::{
    bce_loss, combo_loss, dice_loss, evaluate, finite_diff_check_with, fit, iou, iou_per_class,
    loss_and_grad, segmentation_loss, Adam, FitConfig, FitInputs, FitParams, LinearHead,
    LossWeights, ABS_FLOOR, DEFAULT_STEP,
};
use common::rng;
use proptest::prelude::*;
use rand::Rng;

fn grid8() -> BevGridSpec {
    BevGridSpec::square(2.0, 0.5).unwrap()
}

fn map_from(data: Vec<f64>, channels: usize, grid: BevGridSpec) -> BevFeatureMap {
    BevFeatureMap::from_data(channels, grid, data).unwrap()
}

fn random_case(seed: u64, channels: usize) -> (BevFeatureMap, BevFeatureMap) {
    let g = grid8();
    let mut r = rng(seed);
    let n = channels * g.cells();
    let logits = (0..n).map(|_| r.random_range(-6.0..6.0)).collect();
    let target = (0..n).map(|_| r.random_bool(0.4) as u8 as f64).collect();
    (map_from(logits, channels, g), map_from(target, channels, g))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

proptest! {
    #[test]
    fn bce_matches_the_direct_formula(seed in any::<u64>()) {
        let (x, y) = random_case(seed, 1);
        let (loss, grad) = bce_loss(&x, &y).unwrap();
        let p = x.data().len() as f64;
        let oracle: f64 = x.data().iter().zip(y.data())
            .map(|(&x, &y)| -(y * sigmoid(x).ln() + (1.0 - y) * (1.0 - sigmoid(x)).ln()))
            .sum::<f64>() / p;
        prop_assert!((loss - oracle).abs() < 1e-9);
        prop_assert!(loss >= 0.0);
        for ((g, &x), &y) in grad.data().iter().zip(x.data()).zip(y.data()) {
            prop_assert!((g - (sigmoid(x) - y) / p).abs() < 1e-15);
            prop_assert!(g.abs() <= 1.0 / p);
        }
    }

    #[test]
    fn dice_gradient_matches_differences(seed in any::<u64>(), channels in 1usize..4) {
        let (x, y) = random_case(seed, channels);
        let mut probs = x.clone();
        probs.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let (loss, grad) = dice_loss(&probs, &y).unwrap();
        prop_assert!(loss >= 0.0);
        let f = |v: &[f64]| dice_loss(&map_from(v.to_vec(), channels, grid8()), &y).unwrap().0;
        let check = finite_diff_check_with(f, probs.data(), grad.data(), DEFAULT_STEP, ABS_FLOOR);
        prop_assert!(check.max_rel_error < 1e-5, "{}", check.max_rel_error);
    }

    #[test]
    fn combo_is_the_weighted_sum_of_its_parts(seed in any::<u64>(), wb in 0.0..3.0f64, wd in 0.1..3.0f64) {
        let (main, y) = random_case(seed, 3);
        let (aux, _) = random_case(seed ^ 1, 3);
        let w = LossWeights::new(wb, wd).unwrap();
        let c = combo_loss(&main, &aux, &y, &w).unwrap();
        let part = |x: &BevFeatureMap| {
            let mut p = x.clone();
            p.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
            wb * bce_loss(x, &y).unwrap().0 + wd * dice_loss(&p, &y).unwrap().0
        };
        prop_assert!((c.total - part(&main) - part(&aux)).abs() < 1e-12);
        let (lm, gm) = segmentation_loss(&main, &y, &w).unwrap();
        prop_assert!((c.main - lm).abs() < 1e-12);
        // The combined gradient is the sum of the per-term gradients.
        let (_, gb) = bce_loss(&main, &y).unwrap();
        let mut p = main.clone();
        p.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let (_, gd) = dice_loss(&p, &y).unwrap();
        for i in 0..gm.data().len() {
            let pi = p.data()[i];
            let expect = wb * gb.data()[i] + wd * gd.data()[i] * pi * (1.0 - pi);
            prop_assert!((gm.data()[i] - expect).abs() < 1e-12);
            prop_assert_eq!(c.grad_main.data()[i], gm.data()[i]);
        }
    }

    #[test]
    fn iou_identities(seed in any::<u64>()) {
        let (x, y) = random_case(seed, 2);
        let mut bin = x.clone();
        bin.data_mut().iter_mut().for_each(|v| *v = (sigmoid(*v) > 0.5) as u8 as f64);
        prop_assert_eq!(iou(&x, &bin, 0.5).unwrap(), 1.0);
        // Symmetric in prediction and target once both are binary logits.
        let to_logits = |m: &BevFeatureMap| {
            let mut l = m.clone();
            l.data_mut().iter_mut().for_each(|v| *v = if *v > 0.5 { 5.0 } else { -5.0 });
            l
        };
        let a = iou_per_class(&to_logits(&bin), &y, 0.5).unwrap();
        let b = iou_per_class(&to_logits(&y), &bin, 0.5).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn iou_trivial_cases() {
    let g = BevGridSpec::new(0.0, 4.0, 0.0, 1.0, 1.0).unwrap();
    let target = map_from(vec![1.0, 1.0, 0.0, 0.0], 1, g);
    let half = map_from(vec![5.0, -5.0, -5.0, -5.0], 1, g);
    assert_eq!(iou(&half, &target, 0.5).unwrap(), 0.5);
    let disjoint = map_from(vec![-5.0, -5.0, 5.0, 5.0], 1, g);
    assert_eq!(iou(&disjoint, &target, 0.5).unwrap(), 0.0);
    let empty = map_from(vec![-5.0; 4], 1, g);
    assert_eq!(
        iou(&empty, &map_from(vec![0.0; 4], 1, g), 0.5).unwrap(),
        1.0
    );
    assert!(iou(&empty, &map_from(vec![0.0; 8], 2, g), 0.5).is_err());
}

#[test]
fn combo_reduces_to_bce_without_dice() {
    let (x, y) = random_case(3, 2);
    let c = combo_loss(&x, &x, &y, &LossWeights::new(1.0, 0.0).unwrap()).unwrap();
    assert!((c.total - 2.0 * bce_loss(&x, &y).unwrap().0).abs() < 1e-15);
}

/// A small camera + radar fit problem on a 16×16 grid.
fn tiny_problem(seed: u64) -> (FitInputs, FitParams) {
    let grid = BevGridSpec::square(4.0, 0.5).unwrap();
    let lift = LiftConfig {
        bins: DepthBinSpec::new(6, 1.0, 7.0).unwrap(),
        ..LiftConfig::default()
    };
    let cam = common::small_camera();
    // Looking along +y from behind the grid.
    let pose = Se3Pose::new(
        Mat3::from_columns(&[Vec3::x(), -Vec3::z(), Vec3::y()]),
        Vec3::new(0.0, -4.5, 1.0),
    )
    .unwrap();
    let mut r = rng(seed);
    let rays: Vec<PixelRay> = (0..4)
        .map(|i| {
            PixelRay::new(
                &Vec2::new(6.0 + 6.0 * i as f64, 18.0),
                &cam.intrinsics,
                &pose,
                8,
            )
            .unwrap()
        })
        .collect();
    let camera = rays
        .iter()
        .map(|_| CameraHeadOutput {
            depth: DepthDistribution {
                logits: (0..6).map(|_| r.random_range(-1.0..1.0)).collect(),
            },
            offset: Vec3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), 0.0),
            opacity_logit: r.random_range(-0.5..1.5),
            feature: (0..2).map(|_| r.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    // Distinct heights: the blend order follows z, so ties are discontinuities.
    let cloud: Vec<RadarPoint> = (0..3)
        .map(|i| RadarPoint {
            position: Vec3::new(
                r.random_range(-3.0..3.0),
                r.random_range(-3.0..3.0),
                0.2 + 0.3 * i as f64,
            ),
            rcs: 0.0,
            velocity: Vec2::zeros(),
            dt: 0.0,
        })
        .collect();
    let radar = cloud
        .iter()
        .map(|_| RadarHeadOutput {
            offset: Vec3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), 0.0),
            cov6: [0.3, 0.1, 0.05, -0.2, 0.02, 0.1].map(|v: f64| v + r.random_range(-0.1..0.1)),
            opacity_logit: r.random_range(-0.5..1.5),
            feature: (0..2).map(|_| r.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let mut target = BevFeatureMap::zeros(2, grid);
    target
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = r.random_bool(0.3) as u8 as f64);
    let inputs = FitInputs {
        grid,
        lift,
        raster: RasterConfig::exact(),
        rays,
        cloud,
        target,
    };
    let params = FitParams {
        camera_dim: 2,
        radar_dim: 2,
        camera,
        radar,
        fusion: LinearHead::seeded_near_identity(4, 0.3, seed),
        main_head: LinearHead::seeded(2, 4, 1.0, seed + 1),
        aux_head: LinearHead::seeded(2, 4, 1.0, seed + 2),
    };
    (inputs, params)
}

fn flatten(p: &FitParams) -> Vec<f64> {
    let mut v = Vec::new();
    for h in &p.camera {
        v.extend(&h.depth.logits);
        v.extend(h.offset.iter());
        v.push(h.opacity_logit);
        v.extend(&h.feature);
    }
    for h in &p.radar {
        v.extend(h.offset.iter());
        v.extend(h.cov6);
        v.push(h.opacity_logit);
        v.extend(&h.feature);
    }
    for h in [&p.fusion, &p.main_head, &p.aux_head] {
        v.extend(&h.weight);
        v.extend(&h.bias);
    }
    v
}

fn unflatten(template: &FitParams, v: &[f64]) -> FitParams {
    let mut p = template.clone();
    let mut it = v.iter().copied();
    let mut take = |dst: &mut [f64]| dst.iter_mut().for_each(|x| *x = it.next().unwrap());
    for h in &mut p.camera {
        take(&mut h.depth.logits);
        take(h.offset.as_mut_slice());
        take(std::slice::from_mut(&mut h.opacity_logit));
        take(&mut h.feature);
    }
    for h in &mut p.radar {
        take(h.offset.as_mut_slice());
        take(&mut h.cov6);
        take(std::slice::from_mut(&mut h.opacity_logit));
        take(&mut h.feature);
    }
    for h in [&mut p.fusion, &mut p.main_head, &mut p.aux_head] {
        take(&mut h.weight);
        take(&mut h.bias);
    }
    p
}

#[test]
fn full_model_gradient_matches_differences() {
    for seed in 0..4 {
        let (inputs, params) = tiny_problem(seed);
        let w = LossWeights::default();
        let (_, grads) = loss_and_grad(&inputs, &params, &w).unwrap();
        let f = |v: &[f64]| evaluate(&inputs, &unflatten(&params, v), &w).unwrap().loss;
        let check = finite_diff_check_with(
            f,
            &flatten(&params),
            &flatten(&grads),
            DEFAULT_STEP,
            ABS_FLOOR,
        );
        let a = flatten(&grads);
        assert!(
            check.max_rel_error <= 1e-3,
            "seed {seed}: {} at {} ({} vs {})",
            check.max_rel_error,
            check.worst,
            a[check.worst],
            check.numeric[check.worst]
        );
    }
}

#[test]
fn vanishing_learning_rate_leaves_parameters_unchanged() {
    let (inputs, params) = tiny_problem(9);
    let cfg = FitConfig {
        lr: 1e-300,
        iterations: 3,
        ..FitConfig::default()
    };
    let out = fit(&inputs, params.clone(), &cfg, |_| {}).unwrap();
    let (a, b) = (flatten(&params), flatten(&out.params));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-250));
    assert_eq!(out.trajectory.len(), 3);
    assert!(out.trajectory.windows(2).all(|w| w[0].loss == w[1].loss));
}

#[test]
fn target_rendered_from_the_initial_heads_is_a_fixed_point() {
    // No sensor rays: fused features are zero and the logits are the head
    // biases, so the masks they imply are uniform per class.
    let grid = BevGridSpec::square(5.0, 0.5).unwrap();
    let mut main = LinearHead::zeros(3, 2);
    main.bias = vec![30.0, -30.0, 30.0];
    let params = FitParams {
        camera_dim: 2,
        radar_dim: 0,
        camera: vec![],
        radar: vec![],
        fusion: LinearHead::identity(2),
        main_head: main.clone(),
        aux_head: main,
    };
    let mut target = BevFeatureMap::zeros(3, grid);
    target.channel_mut(0).fill(1.0);
    target.channel_mut(2).fill(1.0);
    let inputs = FitInputs {
        grid,
        lift: LiftConfig::default(),
        raster: RasterConfig::default(),
        rays: vec![],
        cloud: vec![],
        target,
    };
    let out = fit(
        &inputs,
        params,
        &FitConfig {
            iterations: 1,
            ..FitConfig::default()
        },
        |_| {},
    )
    .unwrap();
    assert!(out.trajectory[0].loss < 1e-6, "{}", out.trajectory[0].loss);
    assert_eq!(out.trajectory[0].iou, vec![1.0; 3]);
}

#[test]
fn adam_recovers_a_two_cell_shift() {
    let grid = BevGridSpec::square(5.0, 0.5).unwrap();
    let base = Gaussian3D {
        mean: Vec3::new(-0.3, 0.2, 0.5),
        cov: Mat3::from_diagonal(&Vec3::new(0.6, 0.4, 0.2)),
        opacity: 0.8,
        feature: vec![1.0],
    };
    let cfg = RasterConfig::exact();
    let shifted = Gaussian3D {
        mean: base.mean + Vec3::new(2.0 * grid.resolution(), 0.0, 0.0),
        ..base.clone()
    };
    let target = render(std::slice::from_ref(&shifted), 1, &grid, &cfg)
        .unwrap()
        .0;
    let loss_at = |m: Vec2| {
        let g = Gaussian3D {
            mean: Vec3::new(m.x, m.y, base.mean.z),
            ..base.clone()
        };
        let (map, aux, splats) = render(std::slice::from_ref(&g), 1, &grid, &cfg).unwrap();
        let diff: Vec<f64> = map
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| a - b)
            .collect();
        let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
        let upstream = BevFeatureMap::from_data(1, grid, diff).unwrap();
        let sg = &rasterize_backward(&splats, &grid, &aux, &upstream).unwrap()[0];
        (loss, sg.mean2 / grid.resolution())
    };

    let mut m = vec![base.mean.x, base.mean.y];
    let mut adam = Adam::new(2, 0.9, 0.999, 1e-8);
    for _ in 0..300 {
        let (_, g) = loss_at(Vec2::new(m[0], m[1]));
        adam.step(&mut m, g.as_slice(), 0.02);
    }

    // Grid search over mean positions, 0.05-cell steps within ±3 cells.
    let res = grid.resolution();
    let mut best = (f64::INFINITY, Vec2::zeros());
    for i in -60..=60 {
        for j in -60..=60 {
            let p = base.mean.xy() + Vec2::new(i as f64, j as f64) * 0.05 * res;
            let l = loss_at(p).0;
            if l < best.0 {
                best = (l, p);
            }
        }
    }
    let fitted = Vec2::new(m[0], m[1]);
    assert!((best.1 - shifted.mean.xy()).norm() / res < 0.05);
    assert!(
        (fitted - shifted.mean.xy()).norm() / res < 0.1,
        "fitted {fitted:?}"
    );
    assert!((fitted - best.1).norm() / res < 0.1);
}

#[test]
fn fit_is_deterministic() {
    let (inputs, params) = tiny_problem(4);
    let cfg = FitConfig {
        iterations: 12,
        ..FitConfig::default()
    };
    let a = fit(&inputs, params.clone(), &cfg, |_| {}).unwrap();
    let b = fit(&inputs, params, &cfg, |_| {}).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.params, b.params);
    assert!(a.final_loss < a.trajectory[0].loss);
}
