use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BevGridSpec;
use crate::raster::BevFeatureMap;

/// Header stored next to the payload as `<prefix>.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub byte_order: String,
    pub dtype: String,
    pub layout: String,
    pub shape: Vec<usize>,
}

impl TensorHeader {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            byte_order: "little-endian".into(),
            dtype: "f32".into(),
            layout: "row-major".into(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<prefix>.json` and `<prefix>.bin`.
pub fn write_tensor(prefix: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let header = TensorHeader::new(shape);
    if header.len() != data.len() {
        return Err(Error::ShapeMismatch {
            context: "tensor payload",
            expected: shape.to_vec(),
            got: vec![data.len()],
        });
    }
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Parse(e.to_string()))?;
    super::write_file(&with_ext(prefix, "json"), json + "\n")?;
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    super::write_file(&with_ext(prefix, "bin"), bytes)?;
    Ok(())
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn read_tensor(prefix: &Path) -> Result<(TensorHeader, Vec<f32>)> {
    let text = read_input(&with_ext(prefix, "json"))?;
    let header: TensorHeader =
        serde_json::from_slice(&text).map_err(|e| Error::Parse(format!("tensor header: {e}")))?;
    if header.dtype != "f32" || header.layout != "row-major" || header.byte_order != "little-endian"
    {
        return Err(Error::Parse(format!(
            "unsupported tensor encoding {}/{}/{}",
            header.dtype, header.layout, header.byte_order
        )));
    }
    let bytes = read_input(&with_ext(prefix, "bin"))?;
    if bytes.len() != 4 * header.len() {
        return Err(Error::Parse(format!(
            "payload has {} bytes, header shape {:?} needs {}",
            bytes.len(),
            header.shape,
            4 * header.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, data))
}

/// Saves a map as a `C × H × W` tensor, rounding to `f32`.
pub fn write_feature_map(prefix: &Path, map: &BevFeatureMap) -> Result<()> {
    let data: Vec<f32> = map.data().iter().map(|&v| v as f32).collect();
    write_tensor(prefix, &map.shape(), &data)
}

/// Loads a `C × H × W` tensor onto `grid`.
pub fn read_feature_map(prefix: &Path, grid: &BevGridSpec) -> Result<BevFeatureMap> {
    let (header, data) = read_tensor(prefix)?;
    match header.shape[..] {
        [c, h, w] if h == grid.height() && w == grid.width() => {
            BevFeatureMap::from_data(c, *grid, data.into_iter().map(f64::from).collect())
        }
        _ => Err(Error::ShapeMismatch {
            context: "feature tensor",
            expected: vec![0, grid.height(), grid.width()],
            got: header.shape,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("t");
        let data = vec![0.1f32, -0.0, f32::MIN_POSITIVE, 3.0e38, 1.0 / 3.0, 7.0];
        write_tensor(&prefix, &[2, 3], &data).unwrap();
        let (h, back) = read_tensor(&prefix).unwrap();
        assert_eq!(h.shape, vec![2, 3]);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&data));
        let header = std::fs::read_to_string(dir.path().join("t.json")).unwrap();
        let keys: Vec<usize> = ["byte_order", "dtype", "layout", "shape"]
            .iter()
            .map(|k| header.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("t");
        write_tensor(&prefix, &[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        std::fs::write(dir.path().join("t.bin"), [0u8; 12]).unwrap();
        assert!(matches!(read_tensor(&prefix), Err(Error::Parse(_))));
        assert!(write_tensor(&prefix, &[5], &[1.0]).is_err());
    }
}
