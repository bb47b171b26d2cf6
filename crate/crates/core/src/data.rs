//! Synthetic tasks: a ReLU unit, ring classification and a helix.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::net::{LossKind, TargetBatch};
use crate::{rng_from_seed, Error, Result};

/// Ring boundaries on the squared radius.
pub const CIRCLE_THRESHOLDS: [f64; 3] = [0.2, 0.5, 0.7];
pub const CIRCLE_CLASSES: usize = 4;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;
pub const DEFAULT_FLIP_RATE: f64 = 0.01;
pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Relu,
    Circle,
    Helix,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Relu, Task::Circle, Task::Helix];

    pub fn name(self) -> &'static str {
        match self {
            Task::Relu => "relu",
            Task::Circle => "circle",
            Task::Helix => "helix",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            Task::Relu | Task::Helix => 1,
            Task::Circle => 2,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            Task::Relu => 1,
            Task::Circle => CIRCLE_CLASSES,
            Task::Helix => 3,
        }
    }

    pub fn loss_kind(self) -> LossKind {
        match self {
            Task::Circle => LossKind::SoftmaxCrossEntropy,
            Task::Relu | Task::Helix => LossKind::Mse,
        }
    }
}

impl core::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Task::Relu),
            "circle" => Ok(Task::Circle),
            "helix" => Ok(Task::Helix),
            other => Err(Error::OutOfRange(alloc::format!("unknown task {other:?}"))),
        }
    }
}

impl core::fmt::Display for Task {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    /// Row-major `(n, dim)`.
    Values { dim: usize, data: Vec<f64> },
    Classes { classes: usize, labels: Vec<usize> },
}

impl Targets {
    pub fn as_batch(&self) -> TargetBatch<'_> {
        match self {
            Targets::Values { data, .. } => TargetBatch::Values(data),
            Targets::Classes { labels, .. } => TargetBatch::Classes(labels),
        }
    }

    fn len(&self) -> usize {
        match self {
            Targets::Values { dim, data } => data.len() / dim,
            Targets::Classes { labels, .. } => labels.len(),
        }
    }

    fn slice(&self, start: usize, end: usize) -> TargetBatch<'_> {
        match self {
            Targets::Values { dim, data } => TargetBatch::Values(&data[start * dim..end * dim]),
            Targets::Classes { labels, .. } => TargetBatch::Classes(&labels[start..end]),
        }
    }

    fn gather(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Values { dim, data } => Targets::Values {
                dim: *dim,
                data: idx
                    .iter()
                    .flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
            },
            Targets::Classes { classes, labels } => Targets::Classes {
                classes: *classes,
                labels: idx.iter().map(|&i| labels[i]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: Task,
    pub input_dim: usize,
    /// Row-major `(n, input_dim)`, every entry in `[-1, 1]`.
    pub inputs: Vec<f64>,
    pub targets: Targets,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Contiguous samples `start..end` as a borrowed batch.
    pub fn batch(&self, start: usize, end: usize) -> (&[f64], TargetBatch<'_>) {
        (
            &self.inputs[start * self.input_dim..end * self.input_dim],
            self.targets.slice(start, end),
        )
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            task: self.task,
            input_dim: self.input_dim,
            inputs: idx
                .iter()
                .flat_map(|&i| self.input(i).iter().copied())
                .collect(),
            targets: self.targets.gather(idx),
            seed: self.seed,
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        self.task.loss_kind()
    }
}

/// `(f₁, f₂, f₃)` of the helix at `x ∈ [-1, 1]`.
pub fn helix_point(x: f64) -> [f64; 3] {
    let t = 5.0 * PI + 3.0 * PI * x;
    let r = t / (8.0 * PI);
    [r * libm::cos(t), r * libm::sin(t), r]
}

/// Ring index of a squared radius: `[0,0.2)`, `[0.2,0.5)`, `[0.5,0.7)`, `[0.7,∞)`.
pub fn circle_class(r2: f64) -> usize {
    CIRCLE_THRESHOLDS.iter().take_while(|&&t| r2 >= t).count()
}

/// Adjacent ring whose boundary is closest in squared radius; the innermost
/// ring can only move out and the outermost only in.
pub fn flipped_class(class: usize, r2: f64) -> usize {
    match class {
        0 => 1,
        c if c == CIRCLE_CLASSES - 1 => c - 1,
        c => {
            let lower = CIRCLE_THRESHOLDS[c - 1];
            let upper = CIRCLE_THRESHOLDS[c];
            if r2 - lower <= upper - r2 {
                c - 1
            } else {
                c + 1
            }
        }
    }
}

fn noise(sigma: f64) -> Result<Option<Normal<f64>>> {
    if sigma == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, sigma)
        .map(Some)
        .map_err(|_| Error::OutOfRange(alloc::format!("noise sigma {sigma}")))
}

/// `y = max(0, x) + N(0, σ²)` with `x ~ U[-1, 1]`.
pub fn gen_relu(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty);
    }
    let normal = noise(noise_sigma)?;
    let mut rng = rng_from_seed(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..=1.0);
        let e = normal.map_or(0.0, |d| d.sample(&mut rng));
        inputs.push(x);
        data.push(x.max(0.0) + e);
    }
    Ok(Dataset {
        task: Task::Relu,
        input_dim: 1,
        inputs,
        targets: Targets::Values { dim: 1, data },
        seed,
    })
}

/// Ring labels for `x ~ U[-1, 1]²`, each flipped to a neighbouring ring with
/// probability `flip_rate`.
pub fn gen_circle(n: usize, flip_rate: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty);
    }
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::OutOfRange(alloc::format!("flip rate {flip_rate}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut inputs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.random_range(-1.0..=1.0);
        let x2: f64 = rng.random_range(-1.0..=1.0);
        let u: f64 = rng.random();
        let r2 = x1 * x1 + x2 * x2;
        let clean = circle_class(r2);
        inputs.extend([x1, x2]);
        labels.push(if u < flip_rate { flipped_class(clean, r2) } else { clean });
    }
    Ok(Dataset {
        task: Task::Circle,
        input_dim: 2,
        inputs,
        targets: Targets::Classes {
            classes: CIRCLE_CLASSES,
            labels,
        },
        seed,
    })
}

/// Helix coordinates plus independent `N(0, σ²)` noise per output.
pub fn gen_helix(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty);
    }
    let normal = noise(noise_sigma)?;
    let mut rng = rng_from_seed(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..=1.0);
        inputs.push(x);
        for f in helix_point(x) {
            data.push(f + normal.map_or(0.0, |d| d.sample(&mut rng)));
        }
    }
    Ok(Dataset {
        task: Task::Helix,
        input_dim: 1,
        inputs,
        targets: Targets::Values { dim: 3, data },
        seed,
    })
}

/// Generates a task with its default noise model.
pub fn generate(task: Task, n: usize, seed: u64) -> Result<Dataset> {
    match task {
        Task::Relu => gen_relu(n, DEFAULT_NOISE_SIGMA, seed),
        Task::Circle => gen_circle(n, DEFAULT_FLIP_RATE, seed),
        Task::Helix => gen_helix(n, DEFAULT_NOISE_SIGMA, seed),
    }
}

/// Seeded shuffle into `(train, test)` with `round(n * test_frac)` test samples.
pub fn split(d: &Dataset, test_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::OutOfRange(alloc::format!("test fraction {test_frac}")));
    }
    let n = d.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let n_test = libm::round(n as f64 * test_frac) as usize;
    let (test, train) = idx.split_at(n_test);
    Ok((d.subset(train), d.subset(test)))
}
