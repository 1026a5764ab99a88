//! Central finite-difference verification of [`Model::backward`].

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::Model;
use crate::error::Result;
use crate::labels::{cross_entropy_slice, softmax_into};
use crate::linalg::Matrix;

/// Minimum probes drawn from the parameter vector (all parameters if fewer exist).
pub const MIN_PROBES: usize = 50;

/// Gradients below this magnitude are compared in absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// A batch loss: returns the batch-mean loss and each example's logit gradient.
pub trait BatchLoss {
    fn evaluate(&self, logits: &Matrix) -> (f64, Matrix);
}

impl<F> BatchLoss for F
where
    F: Fn(&Matrix) -> (f64, Matrix),
{
    fn evaluate(&self, logits: &Matrix) -> (f64, Matrix) {
        self(logits)
    }
}

/// Softmax cross-entropy against fixed per-row targets.
#[derive(Debug, Clone)]
pub struct CrossEntropyLoss {
    pub targets: Matrix,
}

impl BatchLoss for CrossEntropyLoss {
    fn evaluate(&self, logits: &Matrix) -> (f64, Matrix) {
        let k = logits.cols();
        let mut grad = Matrix::zeros(logits.rows(), k);
        let mut p = vec![0.0; k];
        let mut total = 0.0;
        for (r, z) in logits.iter_rows().enumerate() {
            let t = self.targets.row(r);
            softmax_into(z, 1.0, &mut p);
            total += cross_entropy_slice(&p, t);
            for ((g, pv), tv) in grad.row_mut(r).iter_mut().zip(&p).zip(t) {
                *g = pv - tv;
            }
        }
        (total / logits.rows() as f64, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes: usize,
    /// Probes discarded because the perturbation flipped a ReLU/sign pattern.
    pub kink_skips: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Maximum relative error between backprop and central differences with step `eps`.
pub fn grad_check(model: &Model, loss: &impl BatchLoss, batch: &Matrix, eps: f64) -> Result<f64> {
    Ok(grad_check_report(model, loss, batch, eps, MIN_PROBES, 0)?.max_relative_error)
}

pub fn grad_check_report(
    model: &Model,
    loss: &impl BatchLoss,
    batch: &Matrix,
    eps: f64,
    probes: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let record = model.forward(batch)?;
    let (_, upstream) = loss.evaluate(record.logits());
    let analytic = model.backward(&record, &upstream)?.flat();
    let pattern = record.kink_pattern(model.spec());

    let base = model.flat_params();
    let n = base.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // draw a shuffled candidate list so kinked probes can be replaced
    let candidates = sample(&mut rng, n, n).into_vec();
    let want = probes.max(MIN_PROBES).min(n);

    let mut probe = model.clone();
    let mut eval_at = |params: &[f64]| -> Result<(f64, Vec<bool>)> {
        probe.set_flat_params(params)?;
        let rec = probe.forward(batch)?;
        Ok((loss.evaluate(rec.logits()).0, rec.kink_pattern(probe.spec())))
    };

    let mut worst = 0.0f64;
    let mut used = 0;
    let mut skips = 0;
    let mut params = base.clone();
    for &i in &candidates {
        if used == want {
            break;
        }
        params[i] = base[i] + eps;
        let (plus, pat_plus) = eval_at(&params)?;
        params[i] = base[i] - eps;
        let (minus, pat_minus) = eval_at(&params)?;
        params[i] = base[i];
        if pat_plus != pattern || pat_minus != pattern {
            skips += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
        used += 1;
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        probes: used,
        kink_skips: skips,
    })
}
