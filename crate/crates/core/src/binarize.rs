//! Binary-network building blocks.
//!
//! Activations are binarized with `sign` (zero maps to `+1`). Weights are
//! binarized per output channel as `s · sign(W_r)` with `s = ‖W_r‖₁ / n`, where
//! `n` is the channel's fan-in; the real-valued latent weights `W_r` keep
//! accumulating gradient updates. Gradients cross the non-differentiable sign
//! through a clipped straight-through estimator.

use crate::error::{LabError, Result};
use crate::linalg::Matrix;

/// Straight-through estimator passes gradient where `|A_r| ≤` this bound.
pub const DEFAULT_CLIP_BOUND: f64 = 1.0;

/// Latent weights of binary layers are clamped to `±LATENT_WEIGHT_BOUND` after each update.
pub const LATENT_WEIGHT_BOUND: f64 = 1.5;

#[inline]
pub fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

pub fn sign_activation(a_r: &[f64]) -> Vec<f64> {
    a_r.iter().map(|&v| sign(v)).collect()
}

/// Scale of one channel: its mean absolute weight.
pub fn channel_scale(channel: &[f64]) -> f64 {
    channel.iter().map(|w| w.abs()).sum::<f64>() / channel.len() as f64
}

/// Channel-wise binarization where each row of `w_r` is one output channel.
pub fn binarize_weights(w_r: &Matrix) -> Result<Matrix> {
    if w_r.cols() == 0 {
        return Err(LabError::Spec("cannot binarize an empty channel".into()));
    }
    if !w_r.is_finite() {
        return Err(LabError::InvalidInput("latent weights must be finite".into()));
    }
    Ok(binarize_matrix_rows(w_r))
}

pub(crate) fn binarize_matrix_rows(w_r: &Matrix) -> Matrix {
    let mut out = w_r.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let s = channel_scale(row);
        row.iter_mut().for_each(|w| *w = s * sign(*w));
    }
    out
}

/// Clipped straight-through estimator: identity where `|A_r| ≤ clip_bound`, zero elsewhere.
pub fn ste_backward(grad_wrt_binary: &[f64], a_r: &[f64], clip_bound: f64) -> Result<Vec<f64>> {
    if !(clip_bound > 0.0) {
        return Err(LabError::InvalidCoefficient(format!(
            "clip bound must be positive, got {clip_bound}"
        )));
    }
    if grad_wrt_binary.len() != a_r.len() {
        return Err(LabError::Shape(format!(
            "gradient has length {}, activations {}",
            grad_wrt_binary.len(),
            a_r.len()
        )));
    }
    Ok(grad_wrt_binary
        .iter()
        .zip(a_r)
        .map(|(&g, &a)| if a.abs() <= clip_bound { g } else { 0.0 })
        .collect())
}

/// A dense layer whose forward pass uses binarized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDenseLayer {
    latent: Matrix,
    clip_bound: f64,
}

impl BinaryDenseLayer {
    pub fn new(latent: Matrix, clip_bound: f64) -> Result<Self> {
        if latent.cols() == 0 {
            return Err(LabError::Spec("binary layer needs fan-in ≥ 1".into()));
        }
        if !latent.is_finite() {
            return Err(LabError::InvalidInput("latent weights must be finite".into()));
        }
        if !(clip_bound > 0.0) {
            return Err(LabError::InvalidCoefficient(format!(
                "clip bound must be positive, got {clip_bound}"
            )));
        }
        Ok(Self { latent, clip_bound })
    }

    pub fn fan_in(&self) -> usize {
        self.latent.cols()
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    pub fn latent(&self) -> &Matrix {
        &self.latent
    }

    pub fn binarized(&self) -> Matrix {
        binarize_matrix_rows(&self.latent)
    }

    /// Binary pre-activations `W_b · sign(x)` for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.fan_in() {
            return Err(LabError::Shape(format!(
                "input has length {}, layer fan-in is {}",
                x.len(),
                self.fan_in()
            )));
        }
        let xb = sign_activation(x);
        let wb = self.binarized();
        Ok(wb.iter_rows().map(|row| crate::linalg::dot(row, &xb)).collect())
    }

    /// Applies a latent update and clamps to `±LATENT_WEIGHT_BOUND`.
    pub fn apply_update(&mut self, delta: &Matrix) -> Result<()> {
        if delta.rows() != self.latent.rows() || delta.cols() != self.latent.cols() {
            return Err(LabError::Shape("update does not match latent weights".into()));
        }
        for (w, d) in self.latent.as_mut_slice().iter_mut().zip(delta.as_slice()) {
            *w = (*w + d).clamp(-LATENT_WEIGHT_BOUND, LATENT_WEIGHT_BOUND);
        }
        Ok(())
    }
}
