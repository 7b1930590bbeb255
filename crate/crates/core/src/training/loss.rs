use rayon::prelude::*;

use crate::camera_lift::sigmoid;
use crate::error::{ensure_finite, Error, Result};
use crate::raster::BevFeatureMap;

/// Dice smoothing constant.
pub const DICE_SMOOTH: f64 = 1.0;

const CHUNK: usize = 4096;

/// Sum in fixed-size chunks so the result is independent of the thread
/// count.
pub(crate) fn det_sum(values: &[f64]) -> f64 {
    values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Weights of the BCE and Dice terms of one segmentation loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    bce: f64,
    dice: f64,
}

impl LossWeights {
    pub fn new(bce: f64, dice: f64) -> Result<Self> {
        if !(bce.is_finite() && dice.is_finite() && bce >= 0.0 && dice >= 0.0) {
            return Err(Error::invalid(
                "loss weights",
                format!("bce {bce}, dice {dice}"),
            ));
        }
        if bce == 0.0 && dice == 0.0 {
            return Err(Error::invalid("loss weights", "both weights are zero"));
        }
        Ok(Self { bce, dice })
    }

    pub fn bce(&self) -> f64 {
        self.bce
    }

    pub fn dice(&self) -> f64 {
        self.dice
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            bce: 1.0,
            dice: 1.0,
        }
    }
}

fn check_target(pred: &BevFeatureMap, target: &BevFeatureMap) -> Result<()> {
    pred.ensure_same_shape(target, "loss target")?;
    ensure_finite("loss input", pred.data())?;
    if let Some(v) = target.data().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::invalid(
            "segmentation target",
            format!("value {v} is not 0 or 1"),
        ));
    }
    Ok(())
}

/// `−[y·ln σ(x) + (1−y)·ln(1−σ(x))]` without overflow.
#[inline]
pub(crate) fn bce_term(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over every element, with its gradient.
pub fn bce_loss(logits: &BevFeatureMap, target: &BevFeatureMap) -> Result<(f64, BevFeatureMap)> {
    check_target(logits, target)?;
    let n = logits.data().len() as f64;
    let terms: Vec<f64> = logits
        .data()
        .par_iter()
        .zip(target.data().par_iter())
        .map(|(&x, &y)| bce_term(x, y))
        .collect();
    let grad: Vec<f64> = logits
        .data()
        .par_iter()
        .zip(target.data().par_iter())
        .map(|(&x, &y)| (sigmoid(x) - y) / n)
        .collect();
    Ok((
        det_sum(&terms) / n,
        BevFeatureMap::from_data(logits.channels(), *logits.grid(), grad)?,
    ))
}

/// Soft Dice loss averaged over channels, with its gradient.
///
/// Per channel: `1 − (2·Σp·y + s) / (Σp + Σy + s)`.
pub fn dice_loss(probs: &BevFeatureMap, target: &BevFeatureMap) -> Result<(f64, BevFeatureMap)> {
    check_target(probs, target)?;
    if let Some(p) = probs.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(
            "dice input",
            format!("probability {p} outside [0, 1]"),
        ));
    }
    let channels = probs.channels();
    let mut grad = BevFeatureMap::zeros(channels, *probs.grid());
    let mut total = 0.0;
    for c in 0..channels {
        let (p, y) = (probs.channel(c), target.channel(c));
        let inter: Vec<f64> = p.iter().zip(y).map(|(a, b)| a * b).collect();
        let num = 2.0 * det_sum(&inter) + DICE_SMOOTH;
        let den = det_sum(p) + det_sum(y) + DICE_SMOOTH;
        total += 1.0 - num / den;
        let scale = 1.0 / (channels as f64 * den * den);
        for (g, &yi) in grad.channel_mut(c).iter_mut().zip(y) {
            *g = -(2.0 * yi * den - num) * scale;
        }
    }
    Ok((total / channels as f64, grad))
}

/// `λ_bce·BCE + λ_dice·Dice` of one prediction, Dice taken on `σ(logits)`.
/// The gradient is with respect to the logits.
pub fn segmentation_loss(
    logits: &BevFeatureMap,
    target: &BevFeatureMap,
    weights: &LossWeights,
) -> Result<(f64, BevFeatureMap)> {
    let (bce, mut grad) = bce_loss(logits, target)?;
    let mut probs = logits.clone();
    probs
        .data_mut()
        .par_iter_mut()
        .for_each(|x| *x = sigmoid(*x));
    let (dice, d_probs) = dice_loss(&probs, target)?;
    grad.data_mut()
        .par_iter_mut()
        .zip(d_probs.data().par_iter().zip(probs.data().par_iter()))
        .for_each(|(g, (dp, p))| *g = weights.bce * *g + weights.dice * dp * p * (1.0 - p));
    Ok((weights.bce * bce + weights.dice * dice, grad))
}

/// Main plus auxiliary segmentation loss.
#[derive(Clone, Debug)]
pub struct ComboLoss {
    pub total: f64,
    pub main: f64,
    pub aux: f64,
    pub grad_main: BevFeatureMap,
    pub grad_aux: BevFeatureMap,
}

pub fn combo_loss(
    main: &BevFeatureMap,
    aux: &BevFeatureMap,
    target: &BevFeatureMap,
    weights: &LossWeights,
) -> Result<ComboLoss> {
    main.ensure_same_shape(aux, "auxiliary prediction")?;
    let (l_main, grad_main) = segmentation_loss(main, target, weights)?;
    let (l_aux, grad_aux) = segmentation_loss(aux, target, weights)?;
    Ok(ComboLoss {
        total: l_main + l_aux,
        main: l_main,
        aux: l_aux,
        grad_main,
        grad_aux,
    })
}
