//! Hand-built sparse target networks ("tickets") for the three tasks, plus
//! the univariate piecewise-linear construction they share.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::{helix_point, Task, CIRCLE_THRESHOLDS};
use crate::net::{Architecture, MaskedMLP, Masks, Params};
use crate::{Error, Result};

/// Knots used for each squared component of the circle ticket.
pub const CIRCLE_KNOTS: usize = 10;
/// Knots used for the helix coordinates.
pub const HELIX_KNOTS: usize = 30;
/// Steepness of the circle decision logits.
pub const CIRCLE_HEAD_GAIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    Linear,
    SoftmaxLogits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEntry {
    pub layer: usize,
    pub index: usize,
    pub value: f64,
}

/// A target network given by its nonzero entries only. Entries are kept
/// sorted by `(layer, row, col)` and `(layer, index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseTicket {
    pub arch: Architecture,
    pub task: Task,
    pub head: Head,
    pub weights: Vec<WeightEntry>,
    pub biases: Vec<BiasEntry>,
}

impl SparseTicket {
    /// Validates bounds, nonzero values and uniqueness, then sorts.
    pub fn new(
        arch: Architecture,
        task: Task,
        head: Head,
        mut weights: Vec<WeightEntry>,
        mut biases: Vec<BiasEntry>,
    ) -> Result<Self> {
        let depth = arch.depth();
        for w in &weights {
            if w.layer >= depth {
                return Err(Error::ShapeMismatch(alloc::format!("weight layer {}", w.layer)));
            }
            let (out, inp) = arch.layer_shape(w.layer);
            if w.row >= out || w.col >= inp {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "weight ({}, {}, {}) outside {out}x{inp}",
                    w.layer,
                    w.row,
                    w.col
                )));
            }
            check_value(w.value)?;
        }
        for b in &biases {
            if b.layer >= depth || b.index >= arch.layer_shape(b.layer).0 {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "bias ({}, {})",
                    b.layer,
                    b.index
                )));
            }
            check_value(b.value)?;
        }
        weights.sort_by_key(|w| (w.layer, w.row, w.col));
        biases.sort_by_key(|b| (b.layer, b.index));
        if weights
            .windows(2)
            .any(|p| (p[0].layer, p[0].row, p[0].col) == (p[1].layer, p[1].row, p[1].col))
            || biases
                .windows(2)
                .any(|p| (p[0].layer, p[0].index) == (p[1].layer, p[1].index))
        {
            return Err(Error::ShapeMismatch("duplicate entry".into()));
        }
        Ok(Self {
            arch,
            task,
            head,
            weights,
            biases,
        })
    }

    pub fn depth(&self) -> usize {
        self.arch.depth()
    }

    /// Number of nonzero weight entries.
    pub fn weight_nnz(&self) -> usize {
        self.weights.len()
    }

    /// In-degree of every neuron of `layer`: nonzero incoming weights plus
    /// one for a nonzero bias.
    pub fn in_degrees(&self, layer: usize) -> Vec<usize> {
        let mut k = vec![0; self.arch.layer_shape(layer).0];
        for w in self.weights.iter().filter(|w| w.layer == layer) {
            k[w.row] += 1;
        }
        for b in self.biases.iter().filter(|b| b.layer == layer) {
            k[b.index] += 1;
        }
        k
    }

    pub fn max_in_degree(&self, layer: usize) -> usize {
        self.in_degrees(layer).into_iter().max().unwrap_or(0)
    }

    pub fn to_params(&self) -> Params {
        let mut p = Params::zeros(&self.arch);
        for w in &self.weights {
            *p.layers[w.layer].weight_mut(w.row, w.col) = w.value;
        }
        for b in &self.biases {
            p.layers[b.layer].biases[b.index] = b.value;
        }
        p
    }

    /// Support of the ticket as masks over its own architecture.
    pub fn support(&self) -> Masks {
        let mut m = Masks::zeros(&self.arch);
        for w in &self.weights {
            let inputs = self.arch.layer_shape(w.layer).1;
            m.layers[w.layer].weights[w.row * inputs + w.col] = true;
        }
        for b in &self.biases {
            m.layers[b.layer].biases[b.index] = true;
        }
        m
    }

    /// Dense network of the ticket's own shape, masked to its support.
    pub fn to_dense(&self) -> MaskedMLP {
        MaskedMLP::from_parts(self.arch.clone(), self.to_params(), self.support())
            .expect("ticket shapes are consistent")
    }

    /// Collects the kept nonzero entries of a dense network.
    pub fn from_dense(net: &MaskedMLP, task: Task, head: Head) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, (p, m)) in net.params().layers.iter().zip(&net.masks().layers).enumerate() {
            for (i, (&v, &keep)) in p.weights.iter().zip(&m.weights).enumerate() {
                if keep && v != 0.0 {
                    weights.push(WeightEntry {
                        layer: l,
                        row: i / p.inputs,
                        col: i % p.inputs,
                        value: v,
                    });
                }
            }
            for (i, (&v, &keep)) in p.biases.iter().zip(&m.biases).enumerate() {
                if keep && v != 0.0 {
                    biases.push(BiasEntry { layer: l, index: i, value: v });
                }
            }
        }
        Self {
            arch: net.arch().clone(),
            task,
            head,
            weights,
            biases,
        }
    }

    /// Evaluates the ticket straight from its entry lists.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim(),
                actual: x.len(),
            });
        }
        let depth = self.depth();
        let mut act = x.to_vec();
        let (mut wi, mut bi) = (0, 0);
        for l in 0..depth {
            let mut next = vec![0.0; self.arch.layer_shape(l).0];
            while wi < self.weights.len() && self.weights[wi].layer == l {
                let w = self.weights[wi];
                next[w.row] += w.value * act[w.col];
                wi += 1;
            }
            while bi < self.biases.len() && self.biases[bi].layer == l {
                let b = self.biases[bi];
                next[b.index] += b.value;
                bi += 1;
            }
            if l + 1 < depth {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            act = next;
        }
        Ok(act)
    }
}

fn check_value(v: f64) -> Result<()> {
    if v == 0.0 || !v.is_finite() {
        return Err(Error::OutOfRange(alloc::format!("ticket entry value {v}")));
    }
    Ok(())
}

/// Forward pass of the densified ticket.
pub fn eval_ticket(t: &SparseTicket, x: &[f64]) -> Result<Vec<f64>> {
    t.to_dense().forward(x)
}

/// Weight nonzeros of `t` over the weight count of a mother network of the
/// same depth that is at least as wide everywhere.
pub fn ticket_sparsity_in(t: &SparseTicket, mother: &Architecture) -> Result<f64> {
    check_fits(t, mother)?;
    Ok(t.weight_nnz() as f64 / mother.weight_count() as f64)
}

pub(crate) fn check_fits(t: &SparseTicket, mother: &Architecture) -> Result<()> {
    if mother.depth() != t.depth() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "mother depth {} vs ticket depth {}",
            mother.depth(),
            t.depth()
        )));
    }
    let (tw, mw) = (t.arch.widths(), mother.widths());
    if tw[0] != mw[0] {
        return Err(Error::DimensionMismatch { expected: tw[0], actual: mw[0] });
    }
    if tw[tw.len() - 1] != mw[mw.len() - 1] {
        return Err(Error::DimensionMismatch {
            expected: tw[tw.len() - 1],
            actual: mw[mw.len() - 1],
        });
    }
    for (l, (&a, &b)) in tw.iter().zip(mw).enumerate().skip(1) {
        if b < a {
            return Err(Error::WidthInsufficient { layer: l - 1, mother: b, target: a });
        }
    }
    Ok(())
}

/// Strictly increasing knots with a sign per hinge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    knots: Vec<f64>,
    signs: Vec<f64>,
}

impl KnotGrid {
    pub fn new(knots: Vec<f64>, signs: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Empty);
        }
        if knots.len() != signs.len() {
            return Err(Error::DimensionMismatch {
                expected: knots.len(),
                actual: signs.len(),
            });
        }
        if let Some(i) = knots.windows(2).position(|p| !(p[0] < p[1])) {
            return Err(Error::DuplicateKnots { index: i + 1 });
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::OutOfRange("non-finite knot".into()));
        }
        if signs.iter().any(|&p| p != 1.0 && p != -1.0) {
            return Err(Error::OutOfRange("hinge signs must be +1 or -1".into()));
        }
        Ok(Self { knots, signs })
    }

    /// `n` equally spaced knots covering `[lo, hi]` inclusive, all signs +1.
    pub fn equidistant(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        if n == 1 {
            return Self::new(vec![lo], vec![1.0]);
        }
        let h = (hi - lo) / (n - 1) as f64;
        let mut knots: Vec<f64> = (0..n).map(|j| lo + h * j as f64).collect();
        knots[n - 1] = hi;
        Self::new(knots, vec![1.0; n])
    }

    /// Same knots with signs `+1, -1, +1, …`.
    pub fn alternating(mut self) -> Self {
        for (j, p) in self.signs.iter_mut().enumerate() {
            *p = if j % 2 == 0 { 1.0 } else { -1.0 };
        }
        self
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Step past the last knot used for the final slope: the last spacing,
    /// or 1 for a single knot.
    pub fn tail(&self) -> f64 {
        match self.knots.len() {
            0 | 1 => 1.0,
            n => self.knots[n - 1] - self.knots[n - 2],
        }
    }
}

/// `g(x) = Σ_j a_j φ(p_j (x − s_j)) + b` over a [`KnotGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pwl {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Pwl {
    pub fn eval(&self, grid: &KnotGrid, x: f64) -> f64 {
        self.a
            .iter()
            .zip(grid.knots().iter().zip(grid.signs()))
            .map(|(a, (s, p))| a * (p * (x - s)).max(0.0))
            .sum::<f64>()
            + self.b
    }
}

/// Interpolating ReLU expansion of `f` on `grid`, exact at every knot and on
/// `[s_1, s_N]` piecewise linear.
///
/// The slope-change coefficients `a_j` describe the increasing hinges
/// `φ(x − s_j)`. A flipped hinge `φ(s_j − x)` equals `φ(x − s_j) − (x − s_j)`,
/// so its stray linear part is cancelled by adding `a_j` to the first
/// (increasing) hinge; the constant left over lands in `b`. This needs
/// `p_1 = +1` whenever any later sign is negative.
pub fn univariate_pwl(f: impl Fn(f64) -> f64, grid: &KnotGrid) -> Result<Pwl> {
    let s = grid.knots();
    let p = grid.signs();
    let n = s.len();
    let mut m = Vec::with_capacity(n);
    for j in 0..n {
        let (x0, x1) = (s[j], if j + 1 < n { s[j + 1] } else { s[j] + grid.tail() });
        m.push((f(x1) - f(x0)) / (x1 - x0));
    }
    let mut a = Vec::with_capacity(n);
    a.push(m[0]);
    for j in 1..n {
        a.push(m[j] - m[j - 1]);
    }
    if (1..n).any(|j| p[j] < 0.0) {
        if p[0] < 0.0 {
            return Err(Error::OutOfRange(
                "the first hinge must be increasing when later hinges are flipped".into(),
            ));
        }
        let flipped: f64 = (1..n).filter(|&j| p[j] < 0.0).map(|j| a[j]).sum();
        a[0] += flipped;
    }
    let mut pwl = Pwl { a, b: 0.0 };
    pwl.b = f(s[0]) - pwl.eval(grid, s[0]);
    Ok(pwl)
}

/// Dense accumulator that turns into a [`SparseTicket`], dropping zeros.
struct Builder {
    arch: Architecture,
    weights: BTreeMap<(usize, usize, usize), f64>,
    biases: BTreeMap<(usize, usize), f64>,
}

impl Builder {
    fn new(widths: Vec<usize>) -> Result<Self> {
        Ok(Self {
            arch: Architecture::new(widths)?,
            weights: BTreeMap::new(),
            biases: BTreeMap::new(),
        })
    }

    fn w(&mut self, layer: usize, row: usize, col: usize, v: f64) {
        *self.weights.entry((layer, row, col)).or_insert(0.0) += v;
    }

    fn b(&mut self, layer: usize, index: usize, v: f64) {
        *self.biases.entry((layer, index)).or_insert(0.0) += v;
    }

    fn finish(self, task: Task, head: Head) -> Result<SparseTicket> {
        let weights = self
            .weights
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((layer, row, col), value)| WeightEntry { layer, row, col, value })
            .collect();
        let biases = self
            .biases
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((layer, index), value)| BiasEntry { layer, index, value })
            .collect();
        SparseTicket::new(self.arch, task, head, weights, biases)
    }
}

/// One unit-weight neuron per layer: evaluates to `max(0, x)`.
pub fn build_relu_ticket(depth: usize) -> Result<SparseTicket> {
    if depth == 0 {
        return Err(Error::DepthTooSmall { task: "relu", depth, min: 1 });
    }
    let mut b = Builder::new(vec![1; depth + 1])?;
    for l in 0..depth {
        b.w(l, 0, 0, 1.0);
    }
    b.finish(Task::Relu, Head::Linear)
}

/// Ring classifier on `[-1, 1]²`.
///
/// * layer 0: `φ(±x₁), φ(±x₂)`;
/// * layer 1: `|x₁|, |x₂|` (folds into the first quadrant);
/// * `depth − 4` mirror layers. Mirror `i` (from 0) reflects the current
///   vector `v` about the axis at angle `π / 2^(i+2)`, emitting the parallel
///   part and the two signed halves of the perpendicular part. The next
///   layer reads the folded vector `(parallel, |perp|)`;
/// * one layer of hinges approximating `t ↦ t²` for each component with
///   `knots` knots;
/// * a linear head `z_c = β (c·g − Σ_{k≤c} t_k)` where `g` is the summed
///   squares and `t_k` the ring thresholds, so that `argmax z` is the ring
///   index of `g`.
pub fn build_circle_ticket(depth: usize, knots: usize) -> Result<SparseTicket> {
    if depth < 4 {
        return Err(Error::DepthTooSmall { task: "circle", depth, min: 4 });
    }
    let mirrors = depth - 4;
    // Components fed to the squaring layer: (neuron index, upper range).
    let comps: Vec<(usize, f64)> = if mirrors == 0 {
        vec![(0, 1.0), (1, 1.0)]
    } else {
        let last = PI / libm::pow(2.0, (mirrors + 1) as f64);
        let r = core::f64::consts::SQRT_2;
        vec![(0, r), (1, r * libm::sin(last)), (2, r * libm::sin(last))]
    };
    let mut widths = vec![2, 4, 2];
    widths.extend(core::iter::repeat(3).take(mirrors));
    widths.push(comps.len() * knots);
    widths.push(4);
    let mut b = Builder::new(widths)?;

    b.w(0, 0, 0, 1.0);
    b.w(0, 1, 0, -1.0);
    b.w(0, 2, 1, 1.0);
    b.w(0, 3, 1, -1.0);
    b.w(1, 0, 0, 1.0);
    b.w(1, 0, 1, 1.0);
    b.w(1, 1, 2, 1.0);
    b.w(1, 1, 3, 1.0);

    for i in 0..mirrors {
        let l = 2 + i;
        let angle = PI / libm::pow(2.0, (i + 2) as f64);
        let (c, s) = (libm::cos(angle), libm::sin(angle));
        // Folded vector of the previous layer as combinations of its neurons.
        let v: [&[(usize, f64)]; 2] = if i == 0 {
            [&[(0, 1.0)], &[(1, 1.0)]]
        } else {
            [&[(0, 1.0)], &[(1, 1.0), (2, 1.0)]]
        };
        // parallel = c v₀ + s v₁, perpendicular = −s v₀ + c v₁
        let rows = [[c, s], [-s, c], [s, -c]];
        for (row, coef) in rows.iter().enumerate() {
            for (k, terms) in v.iter().enumerate() {
                for &(col, w) in terms.iter() {
                    b.w(l, row, col, coef[k] * w);
                }
            }
        }
    }

    let sq = depth - 2;
    let mut pwls = Vec::new();
    for (c, &(col, range)) in comps.iter().enumerate() {
        let grid = KnotGrid::equidistant(0.0, range, knots)?;
        let pwl = univariate_pwl(|t| t * t, &grid)?;
        for (j, &s) in grid.knots().iter().enumerate() {
            let row = c * knots + j;
            b.w(sq, row, col, 1.0);
            b.b(sq, row, -s);
        }
        pwls.push(pwl);
    }

    let head = depth - 1;
    let mut cum = 0.0;
    for class in 1..4 {
        cum += CIRCLE_THRESHOLDS[class - 1];
        let scale = CIRCLE_HEAD_GAIN * class as f64;
        let mut bias = -CIRCLE_HEAD_GAIN * cum;
        for (c, pwl) in pwls.iter().enumerate() {
            for (j, &a) in pwl.a.iter().enumerate() {
                b.w(head, class, c * knots + j, scale * a);
            }
            bias += scale * pwl.b;
        }
        b.b(head, class, bias);
    }
    b.finish(Task::Circle, Head::SoftmaxLogits)
}

/// Recovers the summed-squares value `g` from circle ticket logits.
pub fn circle_score_from_logits(z: &[f64]) -> f64 {
    (z[1] - z[0]) / CIRCLE_HEAD_GAIN + CIRCLE_THRESHOLDS[0]
}

/// Helix regressor on `[-1, 1]`.
///
/// * layer 0: `u = φ(x + 1) ∈ [0, 2]`;
/// * layer 1: hinges `φ(p_j (u − s_j))` on `knots` equidistant knots of
///   `[0, 2]` with alternating signs, plus a carrier neuron `φ(u)`;
/// * layer 2: `φ(g_i(u) + 1)` for the first two coordinates and the carrier
///   again, followed by identity layers;
/// * output: subtract the `+1` shift, and `f₃ = 3u/8 + 1/4` from the carrier.
///
/// For depth 3 the output layer reads the hinges directly.
pub fn build_helix_ticket(depth: usize, knots: usize) -> Result<SparseTicket> {
    if depth < 3 {
        return Err(Error::DepthTooSmall { task: "helix", depth, min: 3 });
    }
    let grid = KnotGrid::equidistant(0.0, 2.0, knots)?.alternating();
    let f = |i: usize| move |u: f64| helix_point(u - 1.0)[i];
    let pwls = [univariate_pwl(f(0), &grid)?, univariate_pwl(f(1), &grid)?];
    let carrier = knots;
    let mut widths = vec![1, 1, knots + 1];
    widths.extend(core::iter::repeat(3).take(depth - 2));
    let mut b = Builder::new(widths)?;

    b.w(0, 0, 0, 1.0);
    b.b(0, 0, 1.0);
    for (j, (&s, &p)) in grid.knots().iter().zip(grid.signs()).enumerate() {
        b.w(1, j, 0, p);
        b.b(1, j, -p * s);
    }
    b.w(1, carrier, 0, 1.0);

    let out = depth - 1;
    // Offset added to the two pwl coordinates while they travel through
    // hidden layers, removed again at the output.
    let shift = if depth == 3 { 0.0 } else { 1.0 };
    for (i, pwl) in pwls.iter().enumerate() {
        for (j, &a) in pwl.a.iter().enumerate() {
            b.w(2, i, j, a);
        }
        b.b(2, i, pwl.b + shift);
    }
    if depth == 3 {
        b.w(2, 2, carrier, 3.0 / 8.0);
        b.b(2, 2, 0.25);
    } else {
        b.w(2, 2, carrier, 1.0);
        for l in 3..out {
            for i in 0..3 {
                b.w(l, i, i, 1.0);
            }
        }
        for i in 0..2 {
            b.w(out, i, i, 1.0);
            b.b(out, i, -shift);
        }
        b.w(out, 2, 2, 3.0 / 8.0);
        b.b(out, 2, 0.25);
    }
    b.finish(Task::Helix, Head::Linear)
}

/// Ticket for `task` at `depth` with the default knot counts.
pub fn build_ticket(task: Task, depth: usize) -> Result<SparseTicket> {
    match task {
        Task::Relu => build_relu_ticket(depth),
        Task::Circle => build_circle_ticket(depth, CIRCLE_KNOTS),
        Task::Helix => build_helix_ticket(depth, HELIX_KNOTS),
    }
}
