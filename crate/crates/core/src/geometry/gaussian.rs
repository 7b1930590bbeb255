use super::{Mat3, Vec3};

/// An anisotropic 3D Gaussian in the ego frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian3D {
    /// Metres.
    pub mean: Vec3,
    /// Symmetric PSD, m².
    pub cov: Mat3,
    /// In `[0, 1]`.
    pub opacity: f64,
    pub feature: Vec<f64>,
}

impl Gaussian3D {
    pub fn dim(&self) -> usize {
        self.feature.len()
    }
}
