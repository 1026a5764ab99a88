use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binarize;
use crate::error::{LabError, Result};
use crate::labels::LogitVector;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    None,
    /// Sign to {−1, +1} forward, clipped straight-through estimator backward.
    BinarySign,
}

impl Activation {
    fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::BinarySign)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Forward with channel-wise binarized weights, keeping real latent weights.
    #[serde(default)]
    pub binary_weights: bool,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            binary_weights: false,
        }
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Dense chain `input → hidden[0] → … → num_classes`; the output layer is linear.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        num_classes: usize,
        activation: Activation,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(LayerSpec::dense(prev, h, activation));
            prev = h;
        }
        layers.push(LayerSpec::dense(prev, num_classes, Activation::None));
        let spec = Self {
            input_dim,
            num_classes,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Binary MLP: every hidden unit emits sign activations; hidden layers after
    /// the first use binarized weights. First and last layers keep real weights.
    pub fn binary_mlp(input_dim: usize, hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut spec = Self::mlp(input_dim, hidden, num_classes, Activation::BinarySign)?;
        let n = spec.layers.len();
        for layer in &mut spec.layers[1..n - 1] {
            layer.binary_weights = true;
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(LabError::Spec(
                "need at least one hidden layer so a penultimate activation exists".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(LabError::Spec(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        let mut prev = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(LabError::Spec(format!("layer {i} has a zero dimension")));
            }
            if l.in_dim != prev {
                return Err(LabError::Spec(format!(
                    "layer {i} expects {} inputs but the previous stage emits {prev}",
                    l.in_dim
                )));
            }
            prev = l.out_dim;
        }
        if prev != self.num_classes {
            return Err(LabError::Spec(format!(
                "final layer emits {prev} logits for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn penultimate_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].in_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }
}

/// Weights (`out × in`, row `o` feeds output unit `o`) and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weights: Matrix::zeros(spec.out_dim, spec.in_dim),
            bias: vec![0.0; spec.out_dim],
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(&self.bias)
    }
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed)
}

/// Network parameters plus the identity used to detect stale forward records.
#[derive(Debug)]
pub struct Model {
    spec: NetworkSpec,
    layers: Vec<DenseParams>,
    seed: u64,
    ste_clip: f64,
    id: u64,
    version: u64,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            seed: self.seed,
            ste_clip: self.ste_clip,
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

/// Glorot-uniform weights, zero biases, reproducible from `seed`.
pub fn init_model(spec: &NetworkSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layers
        .iter()
        .map(|l| {
            let bound = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
            let mut p = DenseParams::zeros(l);
            for w in p.weights.as_mut_slice() {
                *w = rng.random_range(-bound..=bound);
            }
            p
        })
        .collect();
    Ok(Model {
        spec: spec.clone(),
        layers,
        seed,
        ste_clip: binarize::DEFAULT_CLIP_BOUND,
        id: fresh_id(),
        version: 0,
    })
}

/// Activations cached by [`Model::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    model_id: u64,
    model_version: u64,
    /// `inputs[l]` is what layer `l` consumed; the last entry is the penultimate activation.
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix>,
    /// Effective weights used in the forward pass (binarized where applicable).
    effective: Vec<Option<Matrix>>,
    logits: Matrix,
}

impl ForwardRecord {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn logit_vector(&self, i: usize) -> Result<LogitVector> {
        LogitVector::new(self.logits.row(i).to_vec())
    }

    pub fn penultimate(&self) -> &Matrix {
        self.inputs.last().expect("validated spec has layers")
    }

    pub fn batch_len(&self) -> usize {
        self.logits.rows()
    }

    /// Sign pattern of every kinked pre-activation, for probe rejection in the gradient checker.
    pub(crate) fn kink_pattern(&self, spec: &NetworkSpec) -> Vec<bool> {
        let mut out = Vec::new();
        for (l, layer) in spec.layers.iter().enumerate() {
            if layer.activation.has_kink() {
                out.extend(self.pre[l].as_slice().iter().map(|&v| v >= 0.0));
            }
        }
        out
    }
}

/// Per-layer parameter gradients, same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseParams>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            layers: model.spec.layers.iter().map(DenseParams::zeros).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

impl Model {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[DenseParams] {
        &self.layers
    }

    pub fn ste_clip(&self) -> f64 {
        self.ste_clip
    }

    pub fn set_ste_clip(&mut self, clip: f64) -> Result<()> {
        if !(clip > 0.0) {
            return Err(LabError::InvalidCoefficient(format!(
                "STE clip bound must be positive, got {clip}"
            )));
        }
        self.ste_clip = clip;
        Ok(())
    }

    /// Mutable access to raw parameters; invalidates outstanding forward records.
    pub fn layers_mut(&mut self) -> &mut [DenseParams] {
        self.version += 1;
        &mut self.layers
    }

    pub(crate) fn from_parts(
        spec: NetworkSpec,
        layers: Vec<DenseParams>,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        for (l, (s, p)) in spec.layers.iter().zip(&layers).enumerate() {
            if p.weights.rows() != s.out_dim
                || p.weights.cols() != s.in_dim
                || p.bias.len() != s.out_dim
            {
                return Err(LabError::Shape(format!("layer {l} parameters do not match spec")));
            }
        }
        if layers.len() != spec.layers.len() {
            return Err(LabError::Shape("layer count does not match spec".into()));
        }
        Ok(Self {
            spec,
            layers,
            seed,
            ste_clip: binarize::DEFAULT_CLIP_BOUND,
            id: fresh_id(),
            version: 0,
        })
    }

    /// Parameters in checkpoint order: layer-major, weights (row-major) then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.spec.param_count() {
            return Err(LabError::Shape(format!(
                "expected {} parameters, got {}",
                self.spec.param_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for l in self.layers_mut() {
            for w in l.weights.as_mut_slice() {
                *w = it.next().unwrap();
            }
            for b in &mut l.bias {
                *b = it.next().unwrap();
            }
        }
        Ok(())
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.layers.iter().flat_map(|l| l.values()) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    fn effective_weights(&self, l: usize) -> Option<Matrix> {
        if self.spec.layers[l].binary_weights {
            Some(binarize::binarize_matrix_rows(&self.layers[l].weights))
        } else {
            None
        }
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardRecord> {
        if batch.cols() != self.spec.input_dim {
            return Err(LabError::Shape(format!(
                "input has {} features, network expects {}",
                batch.cols(),
                self.spec.input_dim
            )));
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut effective = Vec::with_capacity(n_layers);
        let mut x = batch.clone();
        for (l, (spec, params)) in self.spec.layers.iter().zip(&self.layers).enumerate() {
            let eff = self.effective_weights(l);
            let w = eff.as_ref().unwrap_or(&params.weights);
            let z = affine(&x, w, &params.bias);
            let a = activate(&z, spec.activation);
            inputs.push(x);
            pre.push(z);
            effective.push(eff);
            x = a;
        }
        Ok(ForwardRecord {
            model_id: self.id,
            model_version: self.version,
            inputs,
            pre,
            effective,
            logits: x,
        })
    }

    /// Logits only, without keeping caches.
    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch)?.logits)
    }

    /// Gradients of the batch-mean loss, given each example's loss gradient on its logits.
    pub fn backward(&self, record: &ForwardRecord, loss_grad_on_logits: &Matrix) -> Result<Gradients> {
        if record.model_id != self.id || record.model_version != self.version {
            return Err(LabError::Cache(
                "forward record was produced by a different or since-updated model".into(),
            ));
        }
        let n = record.batch_len();
        if loss_grad_on_logits.rows() != n || loss_grad_on_logits.cols() != self.spec.num_classes
        {
            return Err(LabError::Shape(format!(
                "logit gradient is {}x{}, expected {}x{}",
                loss_grad_on_logits.rows(),
                loss_grad_on_logits.cols(),
                n,
                self.spec.num_classes
            )));
        }
        let inv_n = 1.0 / n as f64;
        let mut grads = Gradients::zeros_like(self);
        let mut upstream = loss_grad_on_logits.clone();
        for l in (0..self.layers.len()).rev() {
            let spec = &self.spec.layers[l];
            let dz = activation_backward(&upstream, &record.pre[l], spec.activation, self.ste_clip);
            let input = &record.inputs[l];
            let g = &mut grads.layers[l];
            for (dz_row, x_row) in dz.iter_rows().zip(input.iter_rows()) {
                for (o, &d) in dz_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    for (gw, &xv) in g.weights.row_mut(o).iter_mut().zip(x_row) {
                        *gw += d * xv;
                    }
                }
            }
            g.weights.as_mut_slice().iter_mut().for_each(|v| *v *= inv_n);
            g.bias.iter_mut().for_each(|v| *v *= inv_n);
            if l > 0 {
                let w = record.effective[l].as_ref().unwrap_or(&self.layers[l].weights);
                let mut next = Matrix::zeros(n, spec.in_dim);
                for (i, dz_row) in dz.iter_rows().enumerate() {
                    let out = next.row_mut(i);
                    for (o, &d) in dz_row.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        for (ov, &wv) in out.iter_mut().zip(w.row(o)) {
                            *ov += d * wv;
                        }
                    }
                }
                upstream = next;
            }
        }
        Ok(grads)
    }
}

fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let mut z = Matrix::zeros(x.rows(), w.rows());
    for (i, x_row) in x.iter_rows().enumerate() {
        let z_row = z.row_mut(i);
        for (o, zv) in z_row.iter_mut().enumerate() {
            *zv = b[o] + crate::linalg::dot(w.row(o), x_row);
        }
    }
    z
}

fn activate(z: &Matrix, act: Activation) -> Matrix {
    let mut a = z.clone();
    let s = a.as_mut_slice();
    match act {
        Activation::None => {}
        Activation::Relu => s.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Tanh => s.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::BinarySign => s.iter_mut().for_each(|v| *v = binarize::sign(*v)),
    }
    a
}

fn activation_backward(upstream: &Matrix, pre: &Matrix, act: Activation, clip: f64) -> Matrix {
    let mut dz = upstream.clone();
    let d = dz.as_mut_slice();
    let p = pre.as_slice();
    match act {
        Activation::None => {}
        Activation::Relu => d.iter_mut().zip(p).for_each(|(g, &z)| {
            if z <= 0.0 {
                *g = 0.0
            }
        }),
        Activation::Tanh => d.iter_mut().zip(p).for_each(|(g, &z)| {
            let t = z.tanh();
            *g *= 1.0 - t * t;
        }),
        Activation::BinarySign => d.iter_mut().zip(p).for_each(|(g, &z)| {
            if z.abs() > clip {
                *g = 0.0
            }
        }),
    }
    dz
}
