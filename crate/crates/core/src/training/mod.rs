//! Segmentation losses, the IoU metric, and a first-order fitter that
//! drives gradients from the loss back to every head output.

mod adam;
mod fit;
mod gradcheck;
mod loss;
mod metric;
mod model;

pub use adam::Adam;
pub use fit::{fit, init_heads, FitConfig, FitRecord, FitResult, LrScales, ParamClamps};
pub use gradcheck::{
    finite_diff_check, finite_diff_check_with, relative_error, GradCheck, ABS_FLOOR, DEFAULT_STEP,
};
pub use loss::{
    bce_loss, combo_loss, dice_loss, segmentation_loss, ComboLoss, LossWeights, DICE_SMOOTH,
};
pub use metric::{iou, iou_per_class};
pub use model::{evaluate, loss_and_grad, Evaluation, FitInputs, FitParams, LinearHead};
