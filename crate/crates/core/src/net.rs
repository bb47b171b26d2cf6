//! Dense ReLU networks with binary parameter masks.
//!
//! Hidden layers apply `max(0, ·)`; the last layer is linear and any softmax
//! lives inside [`LossKind::SoftmaxCrossEntropy`]. Masked entries are stored
//! as exact zeros, so the forward pass never needs to consult the masks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{rng_from_seed, Error, Result};

/// Layer widths `[n_0, n_1, …, n_L]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Architecture {
    widths: Vec<usize>,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least input and output widths, got {} entries",
                widths.len()
            )));
        }
        if let Some(pos) = widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidArchitecture(format!("width {pos} is zero")));
        }
        Ok(Self { widths })
    }

    /// `[inputs, width, …, width, outputs]` with `depth` weight layers.
    pub fn uniform(inputs: usize, width: usize, depth: usize, outputs: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArchitecture("depth must be at least 1".into()));
        }
        let mut widths = vec![inputs];
        widths.extend(core::iter::repeat(width).take(depth - 1));
        widths.push(outputs);
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    /// `(outputs, inputs)` of weight layer `layer`.
    pub fn layer_shape(&self, layer: usize) -> (usize, usize) {
        (self.widths[layer + 1], self.widths[layer])
    }

    pub fn weight_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn bias_count(&self) -> usize {
        self.widths[1..].iter().sum()
    }
}

impl TryFrom<Vec<usize>> for Architecture {
    type Error = Error;

    fn try_from(widths: Vec<usize>) -> Result<Self> {
        Self::new(widths)
    }
}

impl From<Architecture> for Vec<usize> {
    fn from(arch: Architecture) -> Self {
        arch.widths
    }
}

/// Uniform initialization: `w ~ U[-σ_l, σ_l]`, `b ~ U[-∏_{k≤l} σ_k, ∏_{k≤l} σ_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub sigma_w: Vec<f64>,
    pub seed: u64,
}

impl InitSpec {
    /// `σ_l = 1/√n_{l-1}` for every layer.
    pub fn fan_in(arch: &Architecture, seed: u64) -> Self {
        let sigma_w = arch.widths()[..arch.depth()]
            .iter()
            .map(|&n| 1.0 / libm::sqrt(n as f64))
            .collect();
        Self { sigma_w, seed }
    }

    pub fn constant(arch: &Architecture, sigma: f64, seed: u64) -> Self {
        Self {
            sigma_w: vec![sigma; arch.depth()],
            seed,
        }
    }

    /// Half-width of the bias distribution of each layer.
    pub fn bias_ranges(&self) -> Vec<f64> {
        self.sigma_w
            .iter()
            .scan(1.0, |acc, s| {
                *acc *= s;
                Some(*acc)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `(outputs, inputs)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inputs + col]
    }

    #[inline]
    pub fn weight_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.weights[row * self.inputs + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.inputs..(row + 1) * self.inputs]
    }
}

/// Anything shaped like the parameters of a network: the parameters
/// themselves, gradients, optimizer moments and saliency scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<LayerParams>,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = (0..arch.depth())
            .map(|l| {
                let (out, inp) = arch.layer_shape(l);
                LayerParams::zeros(inp, out)
            })
            .collect();
        Self { layers }
    }

    /// Total number of entries, weights and biases.
    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs == b.inputs
                    && a.outputs == b.outputs
                    && a.weights.len() == b.weights.len()
                    && a.biases.len() == b.biases.len()
            })
    }

    /// All entries in canonical order: per layer, weights row-major then biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn fill(&mut self, value: f64) {
        self.iter_mut().for_each(|v| *v = value);
    }

    pub fn dot(&self, other: &Params) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Params) {
        self.iter_mut()
            .zip(other.iter())
            .for_each(|(a, b)| *a += alpha * b);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Params {
        let mut out = self.clone();
        out.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerMask {
    /// Row-major `(outputs, inputs)`, like [`LayerParams::weights`].
    pub weights: Vec<bool>,
    pub biases: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Masks {
    pub layers: Vec<LayerMask>,
}

impl Masks {
    pub fn filled(arch: &Architecture, keep: bool) -> Self {
        let layers = (0..arch.depth())
            .map(|l| {
                let (out, inp) = arch.layer_shape(l);
                LayerMask {
                    weights: vec![keep; out * inp],
                    biases: vec![keep; out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn ones(arch: &Architecture) -> Self {
        Self::filled(arch, true)
    }

    pub fn zeros(arch: &Architecture) -> Self {
        Self::filled(arch, false)
    }

    pub fn matches(&self, arch: &Architecture) -> bool {
        self.layers.len() == arch.depth()
            && self.layers.iter().enumerate().all(|(l, m)| {
                let (out, inp) = arch.layer_shape(l);
                m.weights.len() == out * inp && m.biases.len() == out
            })
    }

    pub fn kept_weights(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.iter().filter(|&&k| k).count())
            .sum()
    }

    pub fn kept_biases(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.biases.iter().filter(|&&k| k).count())
            .sum()
    }

    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn total_biases(&self) -> usize {
        self.layers.iter().map(|l| l.biases.len()).sum()
    }

    /// Fraction of kept weight entries (biases excluded).
    pub fn weight_density(&self) -> f64 {
        self.kept_weights() as f64 / self.total_weights() as f64
    }

    /// Fraction of kept entries counting biases too.
    pub fn density_all(&self) -> f64 {
        (self.kept_weights() + self.kept_biases()) as f64
            / (self.total_weights() + self.total_biases()) as f64
    }

    /// Mask entries in the canonical [`Params::iter`] order.
    pub fn iter(&self) -> impl Iterator<Item = &bool> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::SoftmaxCrossEntropy => "softmax-cross-entropy",
        }
    }
}

/// Borrowed targets of a batch.
#[derive(Debug, Clone, Copy)]
pub enum TargetBatch<'a> {
    /// Row-major `(n, n_L)` regression targets.
    Values(&'a [f64]),
    Classes(&'a [usize]),
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    grad_out: Vec<f64>,
}

impl Workspace {
    pub fn new(arch: &Architecture) -> Self {
        Self {
            acts: arch.widths().iter().map(|&w| vec![0.0; w]).collect(),
            deltas: arch.widths()[1..].iter().map(|&w| vec![0.0; w]).collect(),
            grad_out: vec![0.0; arch.output_dim()],
        }
    }

    /// Output of the most recent forward pass.
    pub fn output(&self) -> &[f64] {
        &self.acts[self.acts.len() - 1]
    }

    /// Activations of the most recent forward pass, input first.
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.acts
    }
}

/// Dense ReLU MLP whose parameters carry binary masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedMLP {
    arch: Architecture,
    params: Params,
    masks: Masks,
}

impl MaskedMLP {
    /// Samples parameters uniformly; all masks start at one.
    pub fn new(arch: Architecture, init: &InitSpec) -> Result<Self> {
        if init.sigma_w.len() != arch.depth() {
            return Err(Error::DimensionMismatch {
                expected: arch.depth(),
                actual: init.sigma_w.len(),
            });
        }
        if let Some(s) = init.sigma_w.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::OutOfRange(format!("sigma_w must be positive, got {s}")));
        }
        let mut rng = rng_from_seed(init.seed);
        let mut params = Params::zeros(&arch);
        for ((layer, &sigma), range) in params
            .layers
            .iter_mut()
            .zip(&init.sigma_w)
            .zip(init.bias_ranges())
        {
            for w in &mut layer.weights {
                *w = rng.random_range(-sigma..=sigma);
            }
            for b in &mut layer.biases {
                *b = rng.random_range(-range..=range);
            }
        }
        let masks = Masks::ones(&arch);
        Ok(Self {
            arch,
            params,
            masks,
        })
    }

    pub fn zeros(arch: Architecture) -> Self {
        let params = Params::zeros(&arch);
        let masks = Masks::ones(&arch);
        Self {
            arch,
            params,
            masks,
        }
    }

    /// Assembles a network; masked entries are zeroed.
    pub fn from_parts(arch: Architecture, params: Params, masks: Masks) -> Result<Self> {
        if !params.same_shape(&Params::zeros(&arch)) {
            return Err(Error::ShapeMismatch("parameters do not fit architecture".into()));
        }
        let mut net = Self::zeros(arch);
        net.params = params;
        net.apply_mask(masks)?;
        Ok(net)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable access to the raw parameters. Masked entries must stay zero;
    /// call [`MaskedMLP::enforce_mask`] after bulk edits.
    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    /// Replaces the masks and sets every masked entry to exactly zero.
    pub fn apply_mask(&mut self, masks: Masks) -> Result<()> {
        if !masks.matches(&self.arch) {
            return Err(Error::ShapeMismatch("mask does not fit architecture".into()));
        }
        self.masks = masks;
        self.enforce_mask();
        Ok(())
    }

    pub fn enforce_mask(&mut self) {
        for (p, m) in self.params.iter_mut().zip(self.masks.iter()) {
            if !m {
                *p = 0.0;
            }
        }
    }

    /// ρ: kept weight entries over all weight entries.
    pub fn sparsity(&self) -> f64 {
        self.masks.weight_density()
    }

    /// Like [`MaskedMLP::sparsity`] but counting biases as well.
    pub fn sparsity_all(&self) -> f64 {
        self.masks.density_all()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.arch)
    }

    pub fn forward(&self, x: &[f64]) -> Result<alloc::vec::Vec<f64>> {
        let mut ws = self.workspace();
        self.check_input(x)?;
        self.forward_into(x, &mut ws);
        Ok(ws.output().to_vec())
    }

    /// Activations of every layer, the input first and the output last.
    pub fn forward_all(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut ws = self.workspace();
        self.check_input(x)?;
        self.forward_into(x, &mut ws);
        Ok(ws.acts)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Hot-path forward pass into `ws`. Panics if `x` has the wrong length.
    pub fn forward_into(&self, x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let depth = self.arch.depth();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            let hidden = l + 1 < depth;
            for (o, z) in out.iter_mut().enumerate() {
                let pre = dot(layer.row(o), input) + layer.biases[o];
                *z = if hidden && pre <= 0.0 { 0.0 } else { pre };
            }
        }
    }

    /// Backpropagates `grad_out` (dLoss/dOutput) through the pass stored in
    /// `ws`, adding the parameter gradients into `grads`.
    pub fn backward_into(&self, ws: &mut Workspace, grad_out: &[f64], grads: &mut Params) {
        let depth = self.arch.depth();
        ws.deltas[depth - 1].copy_from_slice(grad_out);
        for l in (0..depth).rev() {
            let layer = &self.params.layers[l];
            let g = &mut grads.layers[l];
            let input = &ws.acts[l];
            let (lower, upper) = ws.deltas.split_at_mut(l);
            let delta = &upper[0];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                axpy(&mut g.weights[o * layer.inputs..(o + 1) * layer.inputs], d, input);
            }
            if l > 0 {
                let prev = &mut lower[l - 1];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(prev, d, layer.row(o));
                    }
                }
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
    }

    /// Mean loss over a batch.
    pub fn loss(&self, inputs: &[f64], targets: TargetBatch<'_>, kind: LossKind) -> Result<f64> {
        let n = self.batch_len(inputs, targets, kind)?;
        let mut ws = self.workspace();
        let d = self.arch.input_dim();
        let mut total = 0.0;
        for s in 0..n {
            self.forward_into(&inputs[s * d..(s + 1) * d], &mut ws);
            let out = &ws.acts[ws.acts.len() - 1];
            total += sample_loss(kind, out, targets, s, None);
        }
        Ok(total / n as f64)
    }

    /// Mean loss over a batch and its gradient with respect to every
    /// parameter, masked ones included.
    pub fn loss_and_grad(
        &self,
        inputs: &[f64],
        targets: TargetBatch<'_>,
        kind: LossKind,
    ) -> Result<(f64, Params)> {
        let mut grads = Params::zeros(&self.arch);
        let mut ws = self.workspace();
        let loss = self.loss_and_grad_into(inputs, targets, kind, &mut ws, &mut grads)?;
        Ok((loss, grads))
    }

    /// Allocation-free variant of [`MaskedMLP::loss_and_grad`]; `grads` is overwritten.
    pub fn loss_and_grad_into(
        &self,
        inputs: &[f64],
        targets: TargetBatch<'_>,
        kind: LossKind,
        ws: &mut Workspace,
        grads: &mut Params,
    ) -> Result<f64> {
        let n = self.batch_len(inputs, targets, kind)?;
        grads.fill(0.0);
        let d = self.arch.input_dim();
        let scale = 1.0 / n as f64;
        let mut total = 0.0;
        let mut grad_out = core::mem::take(&mut ws.grad_out);
        for s in 0..n {
            self.forward_into(&inputs[s * d..(s + 1) * d], ws);
            let out = &ws.acts[ws.acts.len() - 1];
            total += sample_loss(kind, out, targets, s, Some((&mut grad_out, scale)));
            self.backward_into(ws, &grad_out, grads);
        }
        ws.grad_out = grad_out;
        Ok(total * scale)
    }

    fn batch_len(&self, inputs: &[f64], targets: TargetBatch<'_>, kind: LossKind) -> Result<usize> {
        let d = self.arch.input_dim();
        if inputs.is_empty() {
            return Err(Error::Empty);
        }
        if inputs.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: inputs.len() % d,
            });
        }
        let n = inputs.len() / d;
        let m = self.arch.output_dim();
        match (kind, targets) {
            (LossKind::Mse, TargetBatch::Values(t)) => {
                if t.len() != n * m {
                    return Err(Error::DimensionMismatch {
                        expected: n * m,
                        actual: t.len(),
                    });
                }
            }
            (LossKind::SoftmaxCrossEntropy, TargetBatch::Classes(c)) => {
                if c.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: c.len(),
                    });
                }
                if let Some(&bad) = c.iter().find(|&&c| c >= m) {
                    return Err(Error::OutOfRange(format!("class {bad} with {m} outputs")));
                }
            }
            (kind, _) => return Err(Error::LossTargetMismatch { kind: kind.name() }),
        }
        Ok(n)
    }
}

/// Loss of sample `s`; optionally writes `scale * dLoss/dOutput`.
fn sample_loss(
    kind: LossKind,
    out: &[f64],
    targets: TargetBatch<'_>,
    s: usize,
    grad: Option<(&mut Vec<f64>, f64)>,
) -> f64 {
    let m = out.len();
    match (kind, targets) {
        (LossKind::Mse, TargetBatch::Values(t)) => {
            let t = &t[s * m..(s + 1) * m];
            let inv_m = 1.0 / m as f64;
            let loss = out
                .iter()
                .zip(t)
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
                * inv_m;
            if let Some((g, scale)) = grad {
                for ((g, y), t) in g.iter_mut().zip(out).zip(t) {
                    *g = 2.0 * (y - t) * inv_m * scale;
                }
            }
            loss
        }
        (LossKind::SoftmaxCrossEntropy, TargetBatch::Classes(c)) => {
            let label = c[s];
            let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = out.iter().map(|z| libm::exp(z - max)).sum();
            let log_z = max + libm::log(sum);
            if let Some((g, scale)) = grad {
                for (i, (g, z)) in g.iter_mut().zip(out).enumerate() {
                    let p = libm::exp(z - log_z);
                    *g = (p - if i == label { 1.0 } else { 0.0 }) * scale;
                }
            }
            log_z - out[label]
        }
        _ => unreachable!("batch_len validates loss/target pairing"),
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}
