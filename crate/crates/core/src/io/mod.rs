//! On-disk formats: raw tensors with a JSON header, canonical scene JSON,
//! and binary PGM previews.

mod pgm;
mod scene_file;
mod tensor;

pub use pgm::{encode_pgm, write_pgm};
pub use scene_file::{read_scene, scene_from_json, scene_to_json, write_scene};
pub use tensor::{read_feature_map, read_tensor, write_feature_map, write_tensor, TensorHeader};

use std::path::Path;

/// Writes `bytes` to `path`, creating missing parent directories.
pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)
}
