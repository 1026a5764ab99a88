//! Model checkpoint file.
//!
//! ```text
//! # lskd checkpoint v1
//! seed = 7
//! epoch = 30
//! param_count = 1234
//! param_order = "layer-major; weights row-major (out x in) then bias; f64 little-endian"
//!
//! [spec]
//! ...                      (NetworkSpec as TOML)
//! %%PARAMS%%
//! <param_count × 8 bytes>
//! ```
//!
//! The header is UTF-8 TOML. The line `%%PARAMS%%` ends it; everything after
//! the following newline is the raw parameter block.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{DenseParams, Model, NetworkSpec};
use crate::error::{LabError, Result};
use crate::linalg::Matrix;

pub const MAGIC: &str = "# lskd checkpoint v1";
const SEPARATOR: &[u8] = b"%%PARAMS%%\n";
const PARAM_ORDER: &str = "layer-major; weights row-major (out x in) then bias; f64 little-endian";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub seed: u64,
    pub epoch: usize,
    pub param_count: usize,
    pub param_order: String,
    pub spec: NetworkSpec,
}

pub fn encode(model: &Model, epoch: usize) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        seed: model.seed(),
        epoch,
        param_count: model.spec().param_count(),
        param_order: PARAM_ORDER.to_string(),
        spec: model.spec().clone(),
    };
    let text = toml::to_string(&header)
        .map_err(|e| LabError::Config(format!("cannot serialize checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(text.len() + 64 + header.param_count * 8);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(text.as_bytes());
    if !text.ends_with('\n') {
        out.push(b'\n');
    }
    out.extend_from_slice(SEPARATOR);
    for v in model.flat_params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Model, CheckpointHeader)> {
    let bad = |m: &str| LabError::Data(format!("malformed checkpoint: {m}"));
    let sep_at = bytes
        .windows(SEPARATOR.len())
        .position(|w| w == SEPARATOR)
        .ok_or_else(|| bad("missing parameter separator"))?;
    let text = std::str::from_utf8(&bytes[..sep_at]).map_err(|_| bad("header is not UTF-8"))?;
    let body = text
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad("missing magic line"))?;
    let header: CheckpointHeader =
        toml::from_str(body).map_err(|e| bad(&format!("header: {e}")))?;
    header.spec.validate()?;
    let block = &bytes[sep_at + SEPARATOR.len()..];
    if header.param_count != header.spec.param_count() || block.len() != header.param_count * 8 {
        return Err(bad(&format!(
            "expected {} parameters, found {} bytes",
            header.spec.param_count(),
            block.len()
        )));
    }
    let mut values = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut layers = Vec::with_capacity(header.spec.layers.len());
    for l in &header.spec.layers {
        let w: Vec<f64> = values.by_ref().take(l.in_dim * l.out_dim).collect();
        let bias: Vec<f64> = values.by_ref().take(l.out_dim).collect();
        layers.push(DenseParams {
            weights: Matrix::from_vec(l.out_dim, l.in_dim, w)?,
            bias,
        });
    }
    let model = Model::from_parts(header.spec.clone(), layers, header.seed)?;
    Ok((model, header))
}

pub fn save(model: &Model, epoch: usize, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model, epoch)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model, CheckpointHeader)> {
    decode(&std::fs::read(path)?)
}
