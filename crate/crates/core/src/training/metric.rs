use crate::camera_lift::sigmoid;
use crate::error::Result;
use crate::raster::BevFeatureMap;

fn iou_slice(logits: &[f64], target: &[f64], threshold: f64) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in logits.iter().zip(target) {
        let p = sigmoid(x) > threshold;
        let t = y > 0.5;
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over union of `σ(logits) > threshold` against a binary
/// target, pooled over all channels. Two empty sets score 1.
pub fn iou(logits: &BevFeatureMap, target: &BevFeatureMap, threshold: f64) -> Result<f64> {
    logits.ensure_same_shape(target, "iou target")?;
    Ok(iou_slice(logits.data(), target.data(), threshold))
}

/// [`iou`] for each channel separately.
pub fn iou_per_class(
    logits: &BevFeatureMap,
    target: &BevFeatureMap,
    threshold: f64,
) -> Result<Vec<f64>> {
    logits.ensure_same_shape(target, "iou target")?;
    Ok((0..logits.channels())
        .map(|c| iou_slice(logits.channel(c), target.channel(c), threshold))
        .collect())
}
