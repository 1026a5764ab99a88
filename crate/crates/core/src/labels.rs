//! Target distributions and training losses: label smoothing, softmax with
//! temperature, cross-entropy, KL divergence, the mixed hard/soft distillation
//! objective and the smoothed binary-logistic correction curve.
//!
//! Every function here is pure. The slice-level helpers (`softmax_into`,
//! `cross_entropy_slice`, ...) skip validation and are what the training loop
//! calls per example; the typed wrappers validate once at the boundary.

use crate::error::{shape_mismatch, LabError, Result};

/// Floor applied to probabilities before taking a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelKind {
    OneHot,
    Smoothed(f64),
}

/// A target distribution over `K` classes: one-hot or label-smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    values: Vec<f64>,
    kind: LabelKind,
}

impl LabelVector {
    pub fn one_hot(class_index: usize, num_classes: usize) -> Result<Self> {
        check_class(class_index, num_classes)?;
        let mut values = vec![0.0; num_classes];
        values[class_index] = 1.0;
        Ok(Self {
            values,
            kind: LabelKind::OneHot,
        })
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[f64]> for LabelVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// A discrete probability distribution (non-negative, sums to one within `1e-9`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::InvalidInput("empty probability vector".into()));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(LabError::InvalidInput(format!(
                "probability entry {v} outside [0, 1]"
            )));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(LabError::InvalidInput(format!(
                "probabilities sum to {s}, not 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Pre-softmax network outputs; every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::InvalidInput("empty logit vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(LabError::InvalidInput(format!("non-finite logit {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for LogitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Weights of the mixed objective `λ·CE(hard) + (1−λ)·CE(soft, T)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DistillConfig {
    /// Weight on the hard-label term.
    pub lambda: f64,
    pub temperature: f64,
    /// Multiply the soft term (loss and gradient) by `T²`.
    #[serde(default)]
    pub rescale_grad_by_t2: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            temperature: 1.0,
            rescale_grad_by_t2: false,
        }
    }
}

impl DistillConfig {
    /// Hard/soft ratios explored as presets alongside soft-only distillation.
    pub const LAMBDA_PRESETS: [f64; 3] = [0.3, 0.5, 0.7];

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(LabError::InvalidCoefficient(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LabError::InvalidCoefficient(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    fn soft_weight(&self) -> f64 {
        let w = 1.0 - self.lambda;
        if self.rescale_grad_by_t2 {
            w * self.temperature * self.temperature
        } else {
            w
        }
    }
}

fn check_class(class_index: usize, num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(LabError::InvalidClassCount(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if class_index >= num_classes {
        return Err(LabError::InvalidInput(format!(
            "class index {class_index} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(LabError::InvalidCoefficient(format!(
            "smoothing alpha must lie in [0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Label smoothing: `1−α` on the true class, `α/(K−1)` on every other class.
pub fn smooth_labels(class_index: usize, alpha: f64, num_classes: usize) -> Result<LabelVector> {
    check_class(class_index, num_classes)?;
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return LabelVector::one_hot(class_index, num_classes);
    }
    let mut values = vec![0.0; num_classes];
    fill_smoothed(class_index, alpha, &mut values);
    Ok(LabelVector {
        values,
        kind: LabelKind::Smoothed(alpha),
    })
}

/// Writes the smoothed target for `class_index` into `out` (length `K ≥ 2`).
pub fn fill_smoothed(class_index: usize, alpha: f64, out: &mut [f64]) {
    let off = alpha / (out.len() - 1) as f64;
    out.fill(off);
    out[class_index] = 1.0 - alpha;
}

/// Temperature softmax into `out`; max-subtracted so large logits cannot overflow.
pub fn softmax_into(z: &[f64], temperature: f64, out: &mut [f64]) {
    let inv_t = 1.0 / temperature;
    let m = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v * inv_t));
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v * inv_t - m).exp();
        s += *o;
    }
    let inv = 1.0 / s;
    out.iter_mut().for_each(|o| *o *= inv);
}

pub fn softmax(z: &LogitVector, temperature: f64) -> Result<ProbVector> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(LabError::InvalidInput(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let mut out = vec![0.0; z.len()];
    softmax_into(z.values(), temperature, &mut out);
    Ok(ProbVector(out))
}

/// `−Σ target_c · ln max(p_c, 1e-12)` on raw slices of equal length.
pub fn cross_entropy_slice(p: &[f64], target: &[f64]) -> f64 {
    -p.iter()
        .zip(target)
        .map(|(&pc, &tc)| if tc == 0.0 { 0.0 } else { tc * pc.max(LOG_FLOOR).ln() })
        .sum::<f64>()
}

pub fn cross_entropy(p: &ProbVector, target: &impl AsRef<[f64]>) -> Result<f64> {
    let t = target.as_ref();
    if t.len() != p.len() {
        return Err(shape_mismatch("cross-entropy target", p.len(), t.len()));
    }
    Ok(cross_entropy_slice(p.values(), t))
}

/// Shannon entropy in nats with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// `Σ pT_c · ln(pT_c / max(pS_c, 1e-12))`, with zero-mass teacher entries skipped.
pub fn kl_divergence(p_teacher: &ProbVector, p_student: &ProbVector) -> Result<f64> {
    if p_teacher.len() != p_student.len() {
        return Err(shape_mismatch(
            "kl-divergence student",
            p_teacher.len(),
            p_student.len(),
        ));
    }
    Ok(p_teacher
        .values()
        .iter()
        .zip(p_student.values())
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &s)| t * (t.ln() - s.max(LOG_FLOOR).ln()))
        .sum())
}

/// Gradient of `CE(softmax(z / T), target)` with respect to the logits:
/// `(softmax(z, T) − target) / T`. At `T = 1` this is exactly `p − y`.
pub fn ce_gradient_logits(
    z: &LogitVector,
    target: &impl AsRef<[f64]>,
    temperature: f64,
) -> Result<Vec<f64>> {
    let t = target.as_ref();
    if t.len() != z.len() {
        return Err(shape_mismatch("gradient target", z.len(), t.len()));
    }
    let p = softmax(z, temperature)?;
    let inv_t = 1.0 / temperature;
    Ok(p.values()
        .iter()
        .zip(t)
        .map(|(pc, tc)| (pc - tc) * inv_t)
        .collect())
}

/// Reusable buffers for per-example distillation loss evaluation.
#[derive(Debug, Clone)]
pub struct DistillScratch {
    p_hard: Vec<f64>,
    p_soft: Vec<f64>,
    q_soft: Vec<f64>,
}

impl DistillScratch {
    pub fn new(num_classes: usize) -> Self {
        Self {
            p_hard: vec![0.0; num_classes],
            p_soft: vec![0.0; num_classes],
            q_soft: vec![0.0; num_classes],
        }
    }
}

/// Loss and logit-gradient of the mixed objective for one example.
///
/// `hard` is the hard target (one-hot or smoothed); `z_teacher` is treated as
/// a constant. `grad` receives the derivative with respect to `z_student`.
pub fn distill_loss_grad_slice(
    z_student: &[f64],
    z_teacher: &[f64],
    hard: &[f64],
    cfg: &DistillConfig,
    scratch: &mut DistillScratch,
    grad: &mut [f64],
) -> f64 {
    let lambda = cfg.lambda;
    let t = cfg.temperature;
    let w_soft = cfg.soft_weight();
    grad.fill(0.0);
    let mut loss = 0.0;
    if lambda > 0.0 {
        softmax_into(z_student, 1.0, &mut scratch.p_hard);
        loss += lambda * cross_entropy_slice(&scratch.p_hard, hard);
        for ((g, p), y) in grad.iter_mut().zip(&scratch.p_hard).zip(hard) {
            *g += lambda * (p - y);
        }
    }
    if w_soft > 0.0 {
        softmax_into(z_student, t, &mut scratch.p_soft);
        softmax_into(z_teacher, t, &mut scratch.q_soft);
        loss += w_soft * cross_entropy_slice(&scratch.p_soft, &scratch.q_soft);
        let k = w_soft / t;
        for ((g, p), q) in grad.iter_mut().zip(&scratch.p_soft).zip(&scratch.q_soft) {
            *g += k * (p - q);
        }
    }
    loss
}

/// `λ·CE(softmax(zS), hard) + (1−λ)·CE(softmax(zS, T), softmax(zT, T))`.
pub fn distill_loss(
    z_student: &LogitVector,
    z_teacher: &LogitVector,
    hard: &LabelVector,
    cfg: &DistillConfig,
) -> Result<f64> {
    cfg.validate()?;
    let k = z_student.len();
    if z_teacher.len() != k {
        return Err(shape_mismatch("teacher logits", k, z_teacher.len()));
    }
    if hard.len() != k {
        return Err(shape_mismatch("hard label", k, hard.len()));
    }
    let mut scratch = DistillScratch::new(k);
    let mut grad = vec![0.0; k];
    Ok(distill_loss_grad_slice(
        z_student.values(),
        z_teacher.values(),
        hard.values(),
        cfg,
        &mut scratch,
        &mut grad,
    ))
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary logistic loss against a smoothed positive target:
/// `−(1−α)·ln σ(z) − α·ln(1 − σ(z))`.
pub fn smoothed_logistic_loss(z: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * softplus(-z) + alpha * softplus(z)
}

pub fn smoothed_logistic_curve(z_grid: &[f64], alpha: f64) -> Result<Vec<(f64, f64)>> {
    check_alpha(alpha)?;
    Ok(z_grid
        .iter()
        .map(|&z| (z, smoothed_logistic_loss(z, alpha)))
        .collect())
}

/// `steps` evenly spaced points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / (steps - 1) as f64;
            (0..steps).map(|i| lo + h * i as f64).collect()
        }
    }
}
