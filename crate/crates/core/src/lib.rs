//! Differentiable Gaussian splatting of camera and radar features onto a
//! bird's-eye-view grid.

pub mod bench;
pub mod camera_lift;
pub mod commands;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod radar_lift;
pub mod raster;
pub mod scene;
pub mod training;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/frames.md")]
    mod frames {}
    #[doc = include_str!("../../../book/src/camera-lift.md")]
    mod camera_lift {}
    #[doc = include_str!("../../../book/src/radar-lift.md")]
    mod radar_lift {}
    #[doc = include_str!("../../../book/src/rasterizer.md")]
    mod rasterizer {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/scenes-and-cli.md")]
    mod scenes_and_cli {}
}
