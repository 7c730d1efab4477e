//! Flat little-endian f32 tensors with a JSON sidecar header.
//!
//! `clip.feat` holds the raw values in row-major order; `clip.feat.json`
//! holds `{dims, channel_names, config}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dims: Vec<usize>,
    pub channel_names: Vec<String>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl TensorHeader {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_tensor<'a>(
    path: &Path,
    header: &TensorHeader,
    values: impl IntoIterator<Item = &'a f64>,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(header.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    if bytes.len() != header.len() * 4 {
        return Err(Error::Shape(format!(
            "tensor has {} values, header dims {:?}",
            bytes.len() / 4,
            header.dims
        )));
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(header)?;
    std::fs::write(&side, text + "\n").map_err(|e| Error::io(side, e))
}

pub fn read_tensor(path: &Path) -> Result<(TensorHeader, Vec<f64>)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: TensorHeader = serde_json::from_str(&text)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != header.len() * 4 {
        return Err(Error::Shape(format!(
            "{}: {} bytes, header dims {:?} need {}",
            path.display(),
            bytes.len(),
            header.dims,
            header.len() * 4
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, values))
}
