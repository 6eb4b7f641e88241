//! Model checkpoints: one file holding a single-line JSON header followed
//! by little-endian f32 blobs for the base embeddings and each bilinear
//! form in rating order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DecompositionMode;
use crate::model::ModelParams;

/// Header describing the stored parameters and how they were produced.
/// `rating_set` carries the actual rating values (the count alone is not
/// enough to decode expected ratings); `t_values` lists the decomposition
/// thresholds so the graph stack can be rebuilt for analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub num_nodes: usize,
    pub dim: usize,
    pub num_ratings: usize,
    pub rating_set: Vec<i32>,
    pub t_values: Vec<i32>,
    pub mode: DecompositionMode,
    pub seed: u64,
}

fn chk(field: &str, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        field: field.to_string(),
        msg: msg.into(),
    }
}

fn write_f32_matrix(out: &mut Vec<u8>, m: &Array2<f64>) {
    for &v in m.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<()> {
    if meta.num_nodes != params.num_nodes()
        || meta.dim != params.dim()
        || meta.num_ratings != params.bilinear.len()
        || meta.rating_set != params.rating_set
    {
        return Err(chk("header", "metadata does not describe these parameters"));
    }
    let header = serde_json::to_string(meta)
        .map_err(|e| chk("header", format!("serialize: {e}")))?;
    let mut bytes = header.into_bytes();
    bytes.push(b'\n');
    write_f32_matrix(&mut bytes, &params.base_embeddings);
    for q in &params.bilinear {
        write_f32_matrix(&mut bytes, q);
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn read_f32_matrix(blob: &[u8], offset: &mut usize, rows: usize, cols: usize, field: &str) -> Result<Array2<f64>> {
    let need = rows * cols * 4;
    if blob.len() < *offset + need {
        return Err(chk(
            field,
            format!(
                "blob truncated: need {} bytes at offset {}, have {}",
                need,
                *offset,
                blob.len() - *offset
            ),
        ));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for idx in 0..rows * cols {
        let at = *offset + idx * 4;
        let raw: [u8; 4] = blob[at..at + 4].try_into().expect("4-byte slice");
        values.push(f32::from_le_bytes(raw) as f64);
    }
    *offset += need;
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| chk(field, format!("shape: {e}")))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;

    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| chk("header", "no newline-terminated JSON header"))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| chk("header", "header is not UTF-8"))?;
    let meta: CheckpointMeta =
        serde_json::from_str(header).map_err(|e| chk("header", format!("parse: {e}")))?;

    if meta.rating_set.len() != meta.num_ratings {
        return Err(chk(
            "num_ratings",
            format!(
                "declares {} ratings but rating_set has {}",
                meta.num_ratings,
                meta.rating_set.len()
            ),
        ));
    }
    if meta.num_nodes == 0 || meta.dim == 0 {
        return Err(chk("num_nodes", "zero-sized parameter block"));
    }

    let blob = &bytes[newline + 1..];
    let expected = (meta.num_nodes * meta.dim + meta.num_ratings * meta.dim * meta.dim) * 4;
    if blob.len() != expected {
        return Err(chk(
            "blob",
            format!("expected {expected} payload bytes, found {}", blob.len()),
        ));
    }

    let mut offset = 0;
    let base = read_f32_matrix(blob, &mut offset, meta.num_nodes, meta.dim, "base_embeddings")?;
    let mut bilinear = Vec::with_capacity(meta.num_ratings);
    for r in &meta.rating_set {
        bilinear.push(read_f32_matrix(
            blob,
            &mut offset,
            meta.dim,
            meta.dim,
            &format!("bilinear[{r}]"),
        )?);
    }

    Ok((
        ModelParams {
            base_embeddings: base,
            bilinear,
            rating_set: meta.rating_set.clone(),
        },
        meta,
    ))
}
