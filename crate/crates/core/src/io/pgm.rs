use std::path::Path;

use crate::error::{Error, Result};

/// Binary (P5) 8-bit greyscale image of a row-major `height × width` grid
/// whose row 0 is the smallest y. Values are min-max scaled to 0..=255;
/// rows are flipped so +y points up the image. A constant grid maps to 0.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::ShapeMismatch {
            context: "pgm raster",
            expected: vec![height, width],
            got: vec![values.len()],
        });
    }
    crate::error::ensure_finite("pgm raster", values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for row in (0..height).rev() {
        for &v in &values[row * width..(row + 1) * width] {
            let b = if span > 0.0 {
                ((v - lo) / span * 255.0).round()
            } else {
                0.0
            };
            out.push(b as u8);
        }
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    super::write_file(path, encode_pgm(values, width, height)?)?;
    Ok(())
}
