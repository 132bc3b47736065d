//! The on-disk vector format shared by embedding tables and encoded-sentence
//! caches: a JSON manifest `<base>.json` beside a raw file `<base>.bin` of
//! `count x dim` little-endian 32-bit floats, row-major.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VecManifest {
    pub count: usize,
    pub dim: usize,
    pub dtype: String,
    pub byte_order: String,
}

pub fn manifest_path(base: &Path) -> PathBuf {
    with_extension(base, "json")
}

pub fn data_path(base: &Path) -> PathBuf {
    with_extension(base, "bin")
}

fn with_extension(base: &Path, ext: &str) -> PathBuf {
    let mut name = base.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(ext);
    base.with_file_name(name)
}

/// Write `matrix` as `<base>.json` + `<base>.bin`. Values are stored as f32.
pub fn write_matrix(base: &Path, matrix: ArrayView2<'_, f64>) -> Result<()> {
    let (count, dim) = matrix.dim();
    let manifest = VecManifest {
        count,
        dim,
        dtype: "f32".to_string(),
        byte_order: "little".to_string(),
    };
    let mpath = manifest_path(base);
    let text = serde_json::to_string(&manifest).expect("manifest serializes");
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;

    let dpath = data_path(base);
    let file = fs::File::create(&dpath).map_err(|e| Error::io(&dpath, e))?;
    let mut writer = BufWriter::new(file);
    for row in matrix.rows() {
        for v in row.iter() {
            writer
                .write_all(&(*v as f32).to_le_bytes())
                .map_err(|e| Error::io(&dpath, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(&dpath, e))?;
    Ok(())
}

/// Read a matrix previously written by [`write_matrix`]. Values are widened
/// back to f64 (exactly).
pub fn read_matrix(base: &Path) -> Result<Array2<f64>> {
    let mpath = manifest_path(base);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: VecManifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&mpath, 1, format!("bad manifest: {e}")))?;
    if manifest.dtype != "f32" {
        return Err(Error::parse(
            &mpath,
            1,
            format!("unsupported dtype `{}`", manifest.dtype),
        ));
    }
    if manifest.byte_order != "little" {
        return Err(Error::parse(
            &mpath,
            1,
            format!("unsupported byte order `{}`", manifest.byte_order),
        ));
    }

    let dpath = data_path(base);
    let bytes = fs::read(&dpath).map_err(|e| Error::io(&dpath, e))?;
    let expected = manifest
        .count
        .checked_mul(manifest.dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::parse(&mpath, 1, "manifest shape overflows"))?;
    if bytes.len() != expected {
        return Err(Error::parse(
            &dpath,
            0,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Array2::from_shape_vec((manifest.count, manifest.dim), values)
        .map_err(|e| Error::parse(&dpath, 0, e.to_string()))
}
