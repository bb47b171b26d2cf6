//! Mini-batch Adam training and held-out evaluation.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::net::{MaskedMLP, Params, TargetBatch};
use crate::optim::Adam;
use crate::{rng_from_seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Reusable gather buffers for shuffled mini-batches.
struct BatchBuf {
    inputs: Vec<f64>,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl BatchBuf {
    fn new() -> Self {
        Self {
            inputs: Vec::new(),
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn fill(&mut self, data: &Dataset, idx: &[usize]) -> (&[f64], TargetBatch<'_>) {
        self.inputs.clear();
        for &i in idx {
            self.inputs.extend_from_slice(data.input(i));
        }
        let targets = match &data.targets {
            Targets::Values { dim, data } => {
                self.values.clear();
                for &i in idx {
                    self.values.extend_from_slice(&data[i * dim..(i + 1) * dim]);
                }
                TargetBatch::Values(&self.values)
            }
            Targets::Classes { labels, .. } => {
                self.labels.clear();
                self.labels.extend(idx.iter().map(|&i| labels[i]));
                TargetBatch::Classes(&self.labels)
            }
        };
        (&self.inputs, targets)
    }
}

/// Runs `cfg.epochs` epochs of Adam over shuffled mini-batches. Only
/// unmasked parameters change.
pub fn fit(net: &mut MaskedMLP, data: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    if cfg.batch_size == 0 {
        return Err(Error::OutOfRange("batch size 0".into()));
    }
    let kind = data.loss_kind();
    let mut adam = Adam::new(net.arch(), cfg.lr);
    let mut grads = Params::zeros(net.arch());
    let mut ws = net.workspace();
    let mut buf = BatchBuf::new();
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, t) = buf.fill(data, chunk);
            net.loss_and_grad_into(x, t, kind, &mut ws, &mut grads)?;
            let masks = net.masks().clone();
            adam.step(net.params_mut(), &grads, &masks);
        }
    }
    Ok(())
}

/// Accuracy for classification, mean squared error (over samples and
/// outputs) for regression.
pub fn evaluate(net: &MaskedMLP, data: &Dataset) -> Result<f64> {
    evaluate_scaled(net, data, None)
}

/// Like [`evaluate`] with the outputs multiplied elementwise by `scale`.
pub fn evaluate_scaled(net: &MaskedMLP, data: &Dataset, scale: Option<&[f64]>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    if data.input_dim != net.arch().input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.arch().input_dim(),
            actual: data.input_dim,
        });
    }
    let m = net.arch().output_dim();
    if let Some(s) = scale {
        if s.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: s.len(),
            });
        }
    }
    let mut ws = net.workspace();
    let mut out = alloc::vec![0.0; m];
    let n = data.len();
    match &data.targets {
        Targets::Values { dim, data: t } => {
            if *dim != m {
                return Err(Error::DimensionMismatch { expected: m, actual: *dim });
            }
            let mut sq = 0.0;
            for i in 0..n {
                net.forward_into(data.input(i), &mut ws);
                scaled(ws.output(), scale, &mut out);
                sq += out
                    .iter()
                    .zip(&t[i * m..(i + 1) * m])
                    .map(|(y, t)| (y - t) * (y - t))
                    .sum::<f64>();
            }
            Ok(sq / (n * m) as f64)
        }
        Targets::Classes { labels, .. } => {
            let mut correct = 0usize;
            for (i, &label) in labels.iter().enumerate() {
                net.forward_into(data.input(i), &mut ws);
                scaled(ws.output(), scale, &mut out);
                if argmax(&out) == label {
                    correct += 1;
                }
            }
            Ok(correct as f64 / n as f64)
        }
    }
}

fn scaled(y: &[f64], scale: Option<&[f64]>, out: &mut [f64]) {
    match scale {
        Some(s) => out
            .iter_mut()
            .zip(y.iter().zip(s))
            .for_each(|(o, (y, s))| *o = y * s),
        None => out.copy_from_slice(y),
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// [`fit`] on `train`, then the [`evaluate`] metric on `test`.
pub fn train(net: &mut MaskedMLP, train: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<f64> {
    fit(net, train, cfg)?;
    evaluate(net, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_circle, gen_relu, split};
    use crate::net::{Architecture, InitSpec, Masks};

    fn net(widths: &[usize], seed: u64) -> MaskedMLP {
        let a = Architecture::new(widths.to_vec()).unwrap();
        MaskedMLP::new(a.clone(), &InitSpec::fan_in(&a, seed)).unwrap()
    }

    #[test]
    fn zero_epochs_leave_everything_alone() {
        let d = gen_relu(200, 0.01, 1).unwrap();
        let (tr, te) = split(&d, 0.1, 1).unwrap();
        let mut n = net(&[1, 8, 1], 3);
        let before = n.clone();
        let initial = evaluate(&n, &te).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert_eq!(train(&mut n, &tr, &te, &cfg).unwrap(), initial);
        assert_eq!(n, before);
    }

    #[test]
    fn masked_entries_survive_training() {
        let d = gen_circle(600, 0.0, 2).unwrap();
        let mut n = net(&[2, 16, 16, 4], 4);
        let mut m = Masks::ones(n.arch());
        for (i, k) in m.layers[1].weights.iter_mut().enumerate() {
            *k = i % 3 == 0;
        }
        m.layers[0].biases[5] = false;
        n.apply_mask(m.clone()).unwrap();
        fit(&mut n, &d, &TrainConfig { epochs: 2, ..TrainConfig::default() }).unwrap();
        for (p, keep) in n.params().iter().zip(m.iter()) {
            if !keep {
                assert_eq!(p.to_bits(), 0.0f64.to_bits());
            }
        }
    }

    #[test]
    fn training_reduces_relu_error() {
        let d = gen_relu(2000, 0.01, 1).unwrap();
        let (tr, te) = split(&d, 0.1, 1).unwrap();
        let mut n = net(&[1, 16, 16, 1], 5);
        let before = evaluate(&n, &te).unwrap();
        let after = train(&mut n, &tr, &te, &TrainConfig::default()).unwrap();
        assert!(after < before / 5.0, "{before} -> {after}");
    }

    #[test]
    fn training_is_deterministic() {
        let d = gen_circle(500, 0.01, 1).unwrap();
        let mut a = net(&[2, 10, 4], 6);
        let mut b = a.clone();
        let cfg = TrainConfig { epochs: 2, seed: 9, ..TrainConfig::default() };
        fit(&mut a, &d, &cfg).unwrap();
        fit(&mut b, &d, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.0, 1.0, 1.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
