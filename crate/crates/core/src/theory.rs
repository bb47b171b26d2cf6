//! Error budgets and existence probabilities for sparse tickets, with Monte
//! Carlo checks.
//!
//! The per-layer tolerance is
//!
//! ```text
//! ε_l = ε / ( L · √(n_l k_l,max) · (1 + S_l) · ∏_{k>l} (‖W_k‖ + ε/L) )
//! ```
//!
//! where `S_l` bounds the 1-norm of the input to layer `l` over the domain
//! `[-1, 1]^n₀` and `‖W‖ = √(‖W‖₁ ‖W‖_∞)` bounds the spectral norm. If every
//! parameter of layer `l` moves by at most `ε_l`, the network output moves by
//! at most `ε`. Matching each target neuron against `n_l,0` uniform mother
//! neurons then gives the existence bound
//! `∏_l (1 − Σ_i (1 − ε_l^{k_i})^{n_l,0})`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::net::{Architecture, Params};
use crate::tickets::{check_fits, SparseTicket};
use crate::{rng_from_seed, Error, Result};

/// Margin applied to grid-estimated sup norms.
pub const SUP_NORM_SAFETY: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps: f64,
    /// Tolerance per layer, capped at `ε / L`.
    pub eps_l: Vec<f64>,
    /// The formula's value before the cap.
    pub eps_l_raw: Vec<f64>,
    /// Bound on the input 1-norm of every layer.
    pub sup_norms: Vec<f64>,
    /// Upper bound on the spectral norm of each target weight matrix.
    pub weight_norms: Vec<f64>,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange(alloc::format!("eps {eps} not in (0, 1)")));
    }
    Ok(())
}

// `√(‖W‖₁ ‖W‖_∞)` from the largest column and row sums. It bounds the
// spectral norm, which is what carries an error through `W v` in the 2-norm.
// The largest entry alone does not, and the Circle ticket violates the
// budget with it.
fn spectral_bounds(t: &SparseTicket) -> Vec<f64> {
    let params = t.to_params();
    params
        .layers
        .iter()
        .map(|l| {
            let mut cols = vec![0.0f64; l.inputs];
            let mut row_max = 0.0f64;
            for r in 0..l.outputs {
                let mut sum = 0.0;
                for (c, w) in l.row(r).iter().enumerate() {
                    sum += w.abs();
                    cols[c] += w.abs();
                }
                row_max = row_max.max(sum);
            }
            libm::sqrt(row_max * cols.iter().copied().fold(0.0, f64::max))
        })
        .collect()
}

/// Per-layer tolerances for an overall output error of `eps`.
/// `sup_norms[l]` bounds the 1-norm of the input to layer `l`.
pub fn eps_layer(eps: f64, target: &SparseTicket, sup_norms: &[f64]) -> Result<ErrorBudget> {
    check_eps(eps)?;
    let depth = target.depth();
    if sup_norms.len() != depth {
        return Err(Error::DimensionMismatch {
            expected: depth,
            actual: sup_norms.len(),
        });
    }
    let norms = spectral_bounds(target);
    let l_f = depth as f64;
    let mut raw = vec![0.0; depth];
    // ∏_{k>l} (‖W_k‖ + ε/L), built from the top.
    let mut tail = 1.0;
    for l in (0..depth).rev() {
        let n_l = target.arch.layer_shape(l).0 as f64;
        let k = target.max_in_degree(l).max(1) as f64;
        raw[l] = eps / (l_f * libm::sqrt(n_l * k) * (1.0 + sup_norms[l]) * tail);
        tail *= norms[l] + eps / l_f;
    }
    let cap = eps / l_f;
    Ok(ErrorBudget {
        eps,
        eps_l: raw.iter().map(|&e| e.min(cap)).collect(),
        eps_l_raw: raw,
        sup_norms: sup_norms.to_vec(),
        weight_norms: norms,
    })
}

/// Evaluation points covering `[-1, 1]^dim`: `points` evenly spaced values
/// in one dimension, a `side × side` lattice with `side² ≥ points` otherwise.
/// Returned flattened, one point after another.
pub fn domain_grid(dim: usize, points: usize) -> Vec<f64> {
    let side = match dim {
        0 => return Vec::new(),
        1 => points.max(2),
        d => {
            let mut s = libm::floor(libm::pow(points as f64, 1.0 / d as f64)) as usize;
            while libm::pow(s as f64, d as f64) < points as f64 {
                s += 1;
            }
            s.max(2)
        }
    };
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (side - 1) as f64;
    let total = side.pow(dim as u32);
    let mut out = Vec::with_capacity(total * dim);
    for mut idx in 0..total {
        let start = out.len();
        for _ in 0..dim {
            out.push(coord(idx % side));
            idx /= side;
        }
        out[start..].reverse();
    }
    out
}

/// Points used when sup norms are estimated: 10⁴ in one dimension and
/// 200 × 200 in two.
fn sup_grid(dim: usize) -> Vec<f64> {
    match dim {
        1 => domain_grid(1, 10_000),
        2 => domain_grid(2, 200 * 200),
        d => domain_grid(d, 10_000),
    }
}

/// Largest input 1-norm seen by each layer of the ticket on a dense grid,
/// times [`SUP_NORM_SAFETY`].
pub fn estimate_sup_norms(target: &SparseTicket) -> Vec<f64> {
    let net = target.to_dense();
    let dim = target.arch.input_dim();
    let grid = sup_grid(dim);
    let mut ws = net.workspace();
    let mut sup = vec![0.0f64; target.depth()];
    for x in grid.chunks(dim) {
        net.forward_into(x, &mut ws);
        for (s, a) in sup.iter_mut().zip(ws.activations()) {
            *s = s.max(a.iter().map(|v| v.abs()).sum());
        }
    }
    sup.iter().map(|s| s * SUP_NORM_SAFETY).collect()
}

/// Shifts every nonzero entry of the ticket by an independent
/// `U[-ε_l, ε_l]` draw `trials` times and returns the largest Euclidean
/// output deviation seen over `grid_points` domain points.
pub fn verify_error_propagation(
    target: &SparseTicket,
    budget: &ErrorBudget,
    trials: usize,
    grid_points: usize,
    seed: u64,
) -> Result<f64> {
    if budget.eps_l.len() != target.depth() {
        return Err(Error::DimensionMismatch {
            expected: target.depth(),
            actual: budget.eps_l.len(),
        });
    }
    let base = target.to_dense();
    let dim = target.arch.input_dim();
    let grid = domain_grid(dim, grid_points);
    let mut ws = base.workspace();
    let clean: Vec<Vec<f64>> = grid
        .chunks(dim)
        .map(|x| {
            base.forward_into(x, &mut ws);
            ws.output().to_vec()
        })
        .collect();
    let mut rng = rng_from_seed(seed);
    let mut net = base.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let p: &mut Params = net.params_mut();
        for w in &target.weights {
            let e = budget.eps_l[w.layer];
            *p.layers[w.layer].weight_mut(w.row, w.col) = w.value + rng.random_range(-e..=e);
        }
        for b in &target.biases {
            let e = budget.eps_l[b.layer];
            p.layers[b.layer].biases[b.index] = b.value + rng.random_range(-e..=e);
        }
        for (x, y) in grid.chunks(dim).zip(&clean) {
            net.forward_into(x, &mut ws);
            let d: f64 = ws.output().iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            worst = worst.max(libm::sqrt(d));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBound {
    pub target_width: usize,
    pub mother_width: usize,
    pub k_max: usize,
    pub eps_l: f64,
    /// Union bound on the chance that some target neuron has no match.
    pub failure: f64,
    /// `max(0, 1 − failure)`.
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceBound {
    pub layers: Vec<LayerBound>,
    /// Product of the unclamped layer terms; may be negative.
    pub raw: f64,
    /// Product of the clamped terms, in `[0, 1]`.
    pub probability: f64,
}

/// `Σ_i (1 − ε_l^{k_i})^{n}` for in-degrees `ks` and `n` candidates.
pub fn layer_failure(eps_l: f64, ks: &[usize], n: usize) -> f64 {
    ks.iter()
        .map(|&k| libm::pow(1.0 - libm::pow(eps_l, k as f64), n as f64))
        .sum()
}

/// Lower bound on the probability that a uniformly initialised mother
/// network contains a rescaled `eps`-approximation of `target`. With
/// `normal_init` every tolerance is halved.
pub fn existence_lower_bound(
    eps: f64,
    target: &SparseTicket,
    mother: &Architecture,
    sup_norms: &[f64],
    normal_init: bool,
) -> Result<ExistenceBound> {
    check_fits(target, mother)?;
    let budget = eps_layer(eps, target, sup_norms)?;
    let mut layers = Vec::with_capacity(target.depth());
    let (mut raw, mut probability) = (1.0, 1.0);
    for l in 0..target.depth() {
        let eps_l = if normal_init { budget.eps_l[l] / 2.0 } else { budget.eps_l[l] };
        if eps_l >= 1.0 {
            return Err(Error::DegenerateTolerance { layer: l, eps_l });
        }
        let ks = target.in_degrees(l);
        let n = mother.layer_shape(l).0;
        let failure = layer_failure(eps_l, &ks, n);
        let term = (1.0 - failure).max(0.0);
        raw *= 1.0 - failure;
        probability *= term;
        layers.push(LayerBound {
            target_width: ks.len(),
            mother_width: n,
            k_max: ks.iter().copied().max().unwrap_or(0),
            eps_l,
            failure,
            term,
        });
    }
    Ok(ExistenceBound { layers, raw, probability })
}

/// Output rescaling `∏ 1/σ_l` that maps uniform `U[-1, 1]` parameters back
/// to layer scales `σ_l`.
pub fn scaling_factor(sigmas: &[f64]) -> f64 {
    sigmas.iter().map(|s| 1.0 / s).product()
}

/// Fraction of `trials` random layers of `width` candidate neurons in which
/// every target neuron gets its own candidate whose parameters are all
/// within `eps_l` of it.
///
/// Each target neuron reads its own independent `U[-1, 1]` parameters of
/// every candidate, as after the previous layer has been matched. Targets
/// must satisfy `|θ| ≤ 1 − eps_l`, where a single parameter matches with
/// probability exactly `eps_l`.
pub fn match_frequency(
    targets: &[Vec<f64>],
    eps_l: f64,
    width: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Empty);
    }
    if !(eps_l > 0.0 && eps_l <= 1.0) {
        return Err(Error::OutOfRange(alloc::format!("eps_l {eps_l}")));
    }
    if targets.iter().flatten().any(|t| t.abs() > 1.0 - eps_l) {
        return Err(Error::OutOfRange(alloc::format!(
            "target parameters must lie within ±{}",
            1.0 - eps_l
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut adj = vec![vec![false; width]; targets.len()];
    let mut hits = 0usize;
    for _ in 0..trials {
        for (i, t) in targets.iter().enumerate() {
            for slot in adj[i].iter_mut() {
                let mut ok = true;
                // draw every parameter so the stream does not depend on outcomes
                for &theta in t {
                    let m: f64 = rng.random_range(-1.0..=1.0);
                    ok &= (theta - m).abs() <= eps_l;
                }
                *slot = ok;
            }
        }
        if perfect_matching(&adj, width) {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Whether every row of the bipartite graph can be matched to a distinct
/// column (augmenting paths).
fn perfect_matching(adj: &[Vec<bool>], cols: usize) -> bool {
    fn augment(i: usize, adj: &[Vec<bool>], seen: &mut [bool], owner: &mut [usize]) -> bool {
        for c in 0..seen.len() {
            if adj[i][c] && !seen[c] {
                seen[c] = true;
                if owner[c] == usize::MAX || augment(owner[c], adj, seen, owner) {
                    owner[c] = i;
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![usize::MAX; cols];
    (0..adj.len()).all(|i| {
        let mut seen = vec![false; cols];
        augment(i, adj, &mut seen, &mut owner)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceCheck {
    pub eps_l: f64,
    pub bound: f64,
    pub frequency: f64,
    /// Binomial standard error of `frequency` at the bound.
    pub std_err: f64,
}

/// Monte Carlo check of one layer of the existence bound: the tolerance of
/// `layer` comes from [`eps_layer`] with grid-estimated sup norms, and each
/// trial draws fresh candidates for that layer's neurons. Compared against
/// the layer term `1 − Σ_i (1 − ε_l^{k_i})^{n_l,0}`.
pub fn verify_existence_bound(
    eps: f64,
    target: &SparseTicket,
    layer: usize,
    mother: &Architecture,
    trials: usize,
    seed: u64,
) -> Result<ExistenceCheck> {
    if layer >= target.depth() {
        return Err(Error::OutOfRange(alloc::format!("layer {layer}")));
    }
    let sup = estimate_sup_norms(target);
    let bound = existence_lower_bound(eps, target, mother, &sup, false)?;
    let LayerBound { eps_l, term, mother_width, .. } = bound.layers[layer];
    let params = target.to_params();
    let p = &params.layers[layer];
    let support = target.support();
    let s = &support.layers[layer];
    let targets: Vec<Vec<f64>> = (0..p.outputs)
        .map(|i| {
            let mut v = Vec::new();
            if s.biases[i] {
                v.push(p.biases[i]);
            }
            let row = &s.weights[i * p.inputs..(i + 1) * p.inputs];
            v.extend(row.iter().enumerate().filter(|(_, &k)| k).map(|(j, _)| p.weight(i, j)));
            v
        })
        .collect();
    let frequency = match_frequency(&targets, eps_l, mother_width, trials, seed)?;
    Ok(ExistenceCheck {
        eps_l,
        bound: term,
        frequency,
        std_err: libm::sqrt(term * (1.0 - term) / trials as f64),
    })
}

/// Chance that a random ReLU network with the given layer widths has a path
/// of positive weights through every layer: `∏ (1 − 0.5^{n_l})`.
pub fn relu_path_prob(widths: &[usize]) -> f64 {
    widths
        .iter()
        .map(|&n| 1.0 - libm::pow(0.5, n as f64))
        .product()
}

/// Simulates the layer-by-layer search for a positive path: from the
/// current neuron, draw the weights to the `n_l` neurons of the next layer
/// and continue from any positive one.
pub fn relu_path_frequency(widths: &[usize], trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Empty);
    }
    let mut rng = rng_from_seed(seed);
    let mut hits = 0usize;
    for _ in 0..trials {
        let mut alive = true;
        for &n in widths {
            let mut any = false;
            for _ in 0..n {
                any |= rng.random_range(-1.0f64..1.0) > 0.0;
            }
            alive &= any;
        }
        hits += alive as usize;
    }
    Ok(hits as f64 / trials as f64)
}
