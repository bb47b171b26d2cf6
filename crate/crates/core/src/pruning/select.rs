use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::net::{Architecture, Masks};
use crate::pruning::ScoreSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// One ranking over every weight of the network.
    Global,
    /// Each layer keeps its own share of weights.
    Local,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::OutOfRange(alloc::format!("density {rho} not in (0, 1]")));
    }
    Ok(())
}

fn target_count(rho: f64, total: usize) -> usize {
    (libm::round(rho * total as f64) as usize).min(total)
}

/// Per-layer weight counts for density `rho`: `⌊ρ N_l⌋` plus one extra for
/// the layers with the largest remainders (earlier layers first on ties),
/// so that the counts add up to `round(ρ N)`.
pub fn layer_quotas(arch: &Architecture, rho: f64) -> Vec<usize> {
    let sizes: Vec<usize> = (0..arch.depth())
        .map(|l| {
            let (o, i) = arch.layer_shape(l);
            o * i
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let exact: Vec<f64> = sizes.iter().map(|&n| rho * n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|&e| libm::floor(e) as usize).collect();
    let want = target_count(rho, total);
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - quota[a] as f64, exact[b] - quota[b] as f64);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = want.saturating_sub(quota.iter().sum());
    for &l in order.iter().cycle().take(sizes.len() * 2) {
        if missing == 0 {
            break;
        }
        if quota[l] < sizes[l] {
            quota[l] += 1;
            missing -= 1;
        }
    }
    quota
}

fn key(s: f64) -> f64 {
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

/// Keeps the `count` best-scoring of `candidates` (flat indices into
/// `scores`); ties go to the lower index.
fn top(scores: &[f64], mut candidates: Vec<usize>, count: usize) -> Vec<usize> {
    if count < candidates.len() {
        let cmp = |a: &usize, b: &usize| key(scores[*b]).total_cmp(&key(scores[*a])).then(a.cmp(b));
        candidates.select_nth_unstable_by(count, cmp);
        candidates.truncate(count);
    }
    candidates
}

/// Top-`ρ` weights by score (see [`select_mask_within`] with every entry
/// available).
pub fn select_mask(scores: &ScoreSet, arch: &Architecture, rho: f64, scope: Scope) -> Result<Masks> {
    select_mask_within(scores, &Masks::ones(arch), rho, scope)
}

/// Keeps `round(ρ N)` weights chosen among those already kept in `current`,
/// ranked by score (highest first, ties to the earlier `(layer, row, col)`).
/// `ρ` is relative to all weights, not to the currently kept ones. Biases
/// are kept when their neuron keeps at least one incoming weight and the
/// bias was kept before.
pub fn select_mask_within(scores: &ScoreSet, current: &Masks, rho: f64, scope: Scope) -> Result<Masks> {
    check_rho(rho)?;
    let aligned = scores.layers.len() == current.layers.len()
        && scores
            .layers
            .iter()
            .zip(&current.layers)
            .all(|(s, m)| s.weights.len() == m.weights.len() && s.biases.len() == m.biases.len());
    if !aligned {
        return Err(Error::ShapeMismatch("scores do not match the masks".into()));
    }
    let mut out = Masks {
        layers: current
            .layers
            .iter()
            .map(|m| crate::net::LayerMask {
                weights: vec![false; m.weights.len()],
                biases: vec![false; m.biases.len()],
            })
            .collect(),
    };
    match scope {
        Scope::Global => {
            // flat index over all weights in canonical order
            let mut flat = Vec::new();
            let mut offsets = Vec::with_capacity(scores.layers.len());
            for l in &scores.layers {
                offsets.push(flat.len());
                flat.extend_from_slice(&l.weights);
            }
            let kept: Vec<bool> = current.layers.iter().flat_map(|m| m.weights.iter().copied()).collect();
            let candidates: Vec<usize> = (0..flat.len()).filter(|&i| kept[i]).collect();
            let count = target_count(rho, flat.len());
            for i in top(&flat, candidates, count) {
                let l = offsets.partition_point(|&o| o <= i) - 1;
                out.layers[l].weights[i - offsets[l]] = true;
            }
        }
        Scope::Local => {
            let arch = arch_of(current);
            for (l, quota) in layer_quotas(&arch, rho).into_iter().enumerate() {
                let w = &scores.layers[l].weights;
                let candidates: Vec<usize> = (0..w.len()).filter(|&i| current.layers[l].weights[i]).collect();
                for i in top(w, candidates, quota) {
                    out.layers[l].weights[i] = true;
                }
            }
        }
    }
    for (l, m) in out.layers.iter_mut().enumerate() {
        let n = m.biases.len();
        let inputs = if n == 0 { 0 } else { m.weights.len() / n };
        for o in 0..n {
            m.biases[o] = current.layers[l].biases[o] && m.weights[o * inputs..(o + 1) * inputs].iter().any(|&k| k);
        }
    }
    Ok(out)
}

/// Architecture implied by the mask shapes.
fn arch_of(m: &Masks) -> Architecture {
    let mut widths = Vec::with_capacity(m.layers.len() + 1);
    for l in &m.layers {
        let outs = l.biases.len();
        if widths.is_empty() {
            widths.push(if outs == 0 { 0 } else { l.weights.len() / outs });
        }
        widths.push(outs);
    }
    Architecture::new(widths).expect("masks come from a valid architecture")
}
