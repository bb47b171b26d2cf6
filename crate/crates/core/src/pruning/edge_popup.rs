use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::net::{Architecture, MaskedMLP, Masks, Params, TargetBatch};
use crate::optim::SgdMomentum;
use crate::pruning::scores::score_random;
use crate::pruning::select::layer_quotas;
use crate::pruning::strategies::PruneOutcome;
use crate::{rng_from_seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePopupOptions {
    pub epochs: usize,
    /// Lower the keep fraction to `ρ^{i/E}` in epoch `i` instead of using
    /// `ρ` throughout.
    pub anneal: bool,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EdgePopupOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            anneal: false,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Keep fraction used during epoch `epoch` (1-based) of `epochs`.
pub fn edge_popup_keep_fraction(rho: f64, epoch: usize, epochs: usize, anneal: bool) -> f64 {
    if !anneal || epochs == 0 || epoch >= epochs {
        return rho;
    }
    libm::pow(rho, epoch as f64 / epochs as f64)
}

fn quota(n: usize, frac: f64) -> usize {
    (libm::round(frac * n as f64) as usize).min(n)
}

fn top_by_abs(scores: &[f64], k: usize, out: &mut [bool], idx: &mut Vec<usize>) {
    out.iter_mut().for_each(|b| *b = false);
    idx.clear();
    idx.extend(0..scores.len());
    if k < idx.len() {
        let cmp = |a: &usize, b: &usize| {
            libm::fabs(scores[*b])
                .total_cmp(&libm::fabs(scores[*a]))
                .then(a.cmp(b))
        };
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    for &i in idx.iter() {
        out[i] = true;
    }
}

/// Per-layer top fraction of `|scores|`: weights by largest-remainder
/// quotas of `frac`, biases by `round(frac · n_l)` per layer.
fn popup_mask(scores: &Params, arch: &Architecture, frac: f64, masks: &mut Masks, idx: &mut Vec<usize>) {
    let q = layer_quotas(arch, frac);
    for (l, (s, m)) in scores.layers.iter().zip(masks.layers.iter_mut()).enumerate() {
        top_by_abs(&s.weights, q[l], &mut m.weights, idx);
        top_by_abs(&s.biases, quota(s.biases.len(), frac), &mut m.biases, idx);
    }
}

/// Trains one score per weight and bias with the parameters of `net`
/// frozen; the forward pass uses the top-scoring fraction of every layer
/// and score gradients pass straight through the selection. `net` is left
/// untouched.
pub fn edge_popup(net: &MaskedMLP, rho: f64, data: &Dataset, opts: &EdgePopupOptions) -> Result<PruneOutcome> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::OutOfRange(alloc::format!("density {rho} not in (0, 1]")));
    }
    if data.is_empty() {
        return Err(Error::Empty);
    }
    if opts.batch_size == 0 {
        return Err(Error::OutOfRange("batch size 0".into()));
    }
    let arch = net.arch().clone();
    let base = net.params();
    let kind = data.loss_kind();
    let mut scores = score_random(net, opts.seed);
    let mut masks = Masks::ones(&arch);
    let mut idx = Vec::new();
    let mut eff = MaskedMLP::zeros(arch.clone());
    let mut ws = eff.workspace();
    let mut grads = Params::zeros(&arch);
    let mut sgd = SgdMomentum::new(&arch, opts.momentum, opts.weight_decay);
    let mut rng = rng_from_seed(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    let mut ls = Vec::new();
    let mut densities = Vec::with_capacity(opts.epochs);
    for e in 0..opts.epochs {
        let frac = edge_popup_keep_fraction(rho, e + 1, opts.epochs, opts.anneal);
        let lr = 0.5 * opts.lr * (1.0 + libm::cos(core::f64::consts::PI * e as f64 / opts.epochs as f64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(opts.batch_size) {
            popup_mask(&scores, &arch, frac, &mut masks, &mut idx);
            for ((w, b), keep) in eff.params_mut().iter_mut().zip(base.iter()).zip(masks.iter()) {
                *w = if *keep { *b } else { 0.0 };
            }
            xs.clear();
            for &i in chunk {
                xs.extend_from_slice(data.input(i));
            }
            let t = match &data.targets {
                Targets::Values { dim, data } => {
                    vs.clear();
                    for &i in chunk {
                        vs.extend_from_slice(&data[i * dim..(i + 1) * dim]);
                    }
                    TargetBatch::Values(&vs)
                }
                Targets::Classes { labels, .. } => {
                    ls.clear();
                    ls.extend(chunk.iter().map(|&i| labels[i]));
                    TargetBatch::Classes(&ls)
                }
            };
            eff.loss_and_grad_into(&xs, t, kind, &mut ws, &mut grads)?;
            // straight-through: ∂L/∂s = ∂L/∂W_eff ∘ W ∘ sign(s), the last
            // factor because entries are ranked by |s|
            for ((g, w), s) in grads.iter_mut().zip(base.iter()).zip(scores.iter()) {
                *g *= if *s < 0.0 { -w } else { *w };
            }
            sgd.step(&mut scores, &grads, lr);
        }
        popup_mask(&scores, &arch, frac, &mut masks, &mut idx);
        densities.push(masks.weight_density());
    }
    let mut final_masks = Masks::ones(&arch);
    popup_mask(&scores, &arch, rho, &mut final_masks, &mut idx);
    Ok(PruneOutcome { masks: final_masks, densities })
}
