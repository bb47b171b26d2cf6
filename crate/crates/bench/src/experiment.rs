//! Plant a ticket, prune the mother with every configured method and
//! density, and evaluate the result before and after training.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use plantbench_core::data::{generate, split, DEFAULT_SAMPLES, DEFAULT_TEST_FRACTION};
use plantbench_core::planting::extract_subnet;
use plantbench_core::pruning::{
    detect_layer_collapse, edge_popup, multishot, singleshot, EdgePopupOptions, Method,
    MultishotOptions, Scope, SingleshotOptions,
};
use plantbench_core::tickets::{build_ticket, ticket_sparsity_in};
use plantbench_core::train::{evaluate, evaluate_scaled, fit, TrainConfig};
use plantbench_core::{
    plant, Architecture, Dataset, InitSpec, MaskedMLP, Masks, PlantOptions, PlantReport,
    SparseTicket, Task,
};

use crate::recovery::recovery_metrics;

// Mixed into the repetition seed so that data, pruning scores and training
// draw from streams independent of the mother's initialization. Sharing the
// stream makes random scores a copy of the weight ranking.
const DATA_SEED_SALT: u64 = 0xda7a_5eed;
const PRUNE_SEED_SALT: u64 = 0x5c0e_5a17;
const TRAIN_SEED_SALT: u64 = 0x7a1e_0b5e;

/// Weight range of the mother in every layer. Edge-popup cannot find strong
/// tickets under the fan-in scale `1/√n`: the masked outputs stay too small
/// to beat the class prior.
pub const DEFAULT_SIGMA: f64 = 0.5;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "PLANTBENCH_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SparsityTarget {
    /// The density of the planted ticket inside the mother.
    Planted,
    Density(f64),
}

impl fmt::Display for SparsityTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparsityTarget::Planted => f.write_str("planted"),
            SparsityTarget::Density(d) => write!(f, "{d}"),
        }
    }
}

impl FromStr for SparsityTarget {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        if s.eq_ignore_ascii_case("planted") {
            return Ok(SparsityTarget::Planted);
        }
        let d: f64 = s.parse().with_context(|| format!("bad sparsity {s:?}"))?;
        if !(d > 0.0 && d <= 1.0) {
            bail!("sparsity {d} not in (0, 1]");
        }
        Ok(SparsityTarget::Density(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Singleshot,
    Multishot,
    EdgePopup,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Singleshot => "singleshot",
            StrategyKind::Multishot => "multishot",
            StrategyKind::EdgePopup => "edge-popup",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "singleshot" => Ok(StrategyKind::Singleshot),
            "multishot" => Ok(StrategyKind::Multishot),
            "edge-popup" | "edgepopup" => Ok(StrategyKind::EdgePopup),
            other => bail!("unknown strategy {other:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Multishot rounds, or SynFlow score-prune rounds for singleshot.
    pub rounds: usize,
    pub epochs_per_round: usize,
    pub scope: Scope,
    /// edge-popup only.
    pub anneal: bool,
    /// edge-popup score-training epochs.
    pub popup_epochs: usize,
}

impl Strategy {
    pub fn singleshot() -> Self {
        Self {
            kind: StrategyKind::Singleshot,
            rounds: 1,
            epochs_per_round: 5,
            scope: Scope::Global,
            anneal: false,
            popup_epochs: 10,
        }
    }

    pub fn multishot() -> Self {
        Self {
            kind: StrategyKind::Multishot,
            rounds: 10,
            ..Self::singleshot()
        }
    }

    pub fn edge_popup(anneal: bool) -> Self {
        Self {
            kind: StrategyKind::EdgePopup,
            anneal,
            ..Self::singleshot()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub depth: usize,
    pub width: usize,
    pub sparsities: Vec<SparsityTarget>,
    /// Ignored by edge-popup, which is its own method.
    pub methods: Vec<Method>,
    pub strategy: Strategy,
    pub repetitions: usize,
    /// Repetition `i` uses seed `seed + i`.
    pub seed: u64,
    /// Training epochs after pruning; 0 skips training.
    pub epochs: usize,
    pub samples: usize,
    /// Weight range of the mother: `U[-σ, σ]` in every layer, or
    /// `σ_l = 1/√n_{l-1}` when `None`.
    pub sigma: Option<f64>,
    /// Add a row for the planted support itself at every repetition.
    pub oracle: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Circle,
            depth: 5,
            width: 100,
            sparsities: vec![
                SparsityTarget::Planted,
                SparsityTarget::Density(0.01),
                SparsityTarget::Density(0.1),
                SparsityTarget::Density(0.5),
                SparsityTarget::Density(1.0),
            ],
            methods: Method::ALL.to_vec(),
            strategy: Strategy::singleshot(),
            repetitions: 25,
            seed: 0,
            epochs: 10,
            samples: DEFAULT_SAMPLES,
            sigma: Some(DEFAULT_SIGMA),
            oracle: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        if self.sparsities.is_empty() {
            bail!("no sparsity targets");
        }
        if self.strategy.kind != StrategyKind::EdgePopup && self.methods.is_empty() {
            bail!("no pruning methods");
        }
        if self.strategy.rounds == 0 {
            bail!("rounds must be at least 1");
        }
        if self.sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            bail!("sigma must be positive");
        }
        if self.width == 0 || self.samples < 10 {
            bail!("width and sample count must be positive");
        }
        Ok(())
    }

    pub fn init(&self, arch: &Architecture, seed: u64) -> InitSpec {
        mother_init(arch, self.sigma, seed)
    }

    pub fn arch(&self) -> anyhow::Result<Architecture> {
        Ok(Architecture::uniform(
            self.task.input_dim(),
            self.width,
            self.depth,
            self.task.output_dim(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: Task,
    pub method: String,
    pub strategy: String,
    pub target: SparsityTarget,
    pub target_density: f64,
    /// Kept fraction of weight entries.
    pub achieved: f64,
    /// Kept fraction of weights and biases together.
    pub achieved_all: f64,
    /// Masked mother with its original parameters.
    pub post_prune: f64,
    /// Planted rows only: outputs multiplied by the planting scale.
    pub post_prune_rescaled: Option<f64>,
    pub post_train: f64,
    pub seed: u64,
    pub collapse: bool,
    pub iou: f64,
    pub recovered: f64,
}

/// Everything a repetition shares across methods and densities.
pub struct Repetition {
    pub seed: u64,
    pub ticket: SparseTicket,
    pub planted: MaskedMLP,
    pub report: PlantReport,
    pub train: Dataset,
    pub test: Dataset,
}

/// `U[-σ, σ]` weights in every layer, or the fan-in scale when `sigma` is
/// `None`; biases follow the product of the scales.
pub fn mother_init(arch: &Architecture, sigma: Option<f64>, seed: u64) -> InitSpec {
    match sigma {
        Some(s) => InitSpec::constant(arch, s, seed),
        None => InitSpec::fan_in(arch, seed),
    }
}

pub fn data_seed(seed: u64) -> u64 {
    seed ^ DATA_SEED_SALT
}

pub fn prune_seed(seed: u64) -> u64 {
    seed ^ PRUNE_SEED_SALT
}

pub fn train_seed(seed: u64) -> u64 {
    seed ^ TRAIN_SEED_SALT
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Repetition> {
    let arch = cfg.arch()?;
    let ticket = build_ticket(cfg.task, cfg.depth)
        .with_context(|| format!("building the {} ticket of depth {}", cfg.task, cfg.depth))?;
    let mother = MaskedMLP::new(arch.clone(), &cfg.init(&arch, seed))?;
    let (planted, report) =
        plant(&ticket, &mother, PlantOptions::default()).context("planting the ticket")?;
    let data = generate(cfg.task, cfg.samples, data_seed(seed))?;
    let (train, test) = split(&data, DEFAULT_TEST_FRACTION, data_seed(seed))?;
    Ok(Repetition {
        seed,
        ticket,
        planted,
        report,
        train,
        test,
    })
}

/// Runs the pruning strategy on the planted mother and returns the masks.
pub fn prune(
    cfg: &ExperimentConfig,
    rep: &Repetition,
    method: Option<Method>,
    density: f64,
) -> anyhow::Result<Masks> {
    let s = &cfg.strategy;
    let seed = prune_seed(rep.seed);
    let outcome = match (s.kind, method) {
        (StrategyKind::EdgePopup, _) => edge_popup(
            &rep.planted,
            density,
            &rep.train,
            &EdgePopupOptions {
                epochs: s.popup_epochs,
                anneal: s.anneal,
                seed,
                ..EdgePopupOptions::default()
            },
        )?,
        (StrategyKind::Singleshot, Some(m)) => singleshot(
            &rep.planted,
            m,
            density,
            Some(&rep.train),
            &SingleshotOptions {
                scope: s.scope,
                synflow_iterations: s.rounds,
                seed,
                ..SingleshotOptions::default()
            },
        )?,
        (StrategyKind::Multishot, Some(m)) => multishot(
            &rep.planted,
            m,
            density,
            &rep.train,
            &MultishotOptions {
                rounds: s.rounds,
                train: TrainConfig {
                    epochs: s.epochs_per_round,
                    seed: train_seed(rep.seed),
                    ..TrainConfig::default()
                },
                scope: s.scope,
                seed,
                ..MultishotOptions::default()
            },
        )?,
        (_, None) => bail!("{} needs a pruning method", s.kind.name()),
    };
    Ok(outcome.masks)
}

fn train_cfg(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        seed: train_seed(seed),
        ..TrainConfig::default()
    }
}

struct Measured {
    achieved: f64,
    achieved_all: f64,
    post_prune: f64,
    post_train: f64,
    collapse: bool,
    iou: f64,
    recovered: f64,
}

/// Evaluates `masks` on the planted mother: untrained, then after training.
fn measure(cfg: &ExperimentConfig, rep: &Repetition, masks: Masks) -> anyhow::Result<Measured> {
    let mut net = rep.planted.clone();
    net.apply_mask(masks)?;
    let collapse = detect_layer_collapse(net.masks(), net.arch()).collapsed();
    let rec = recovery_metrics(net.masks(), &rep.report)?;
    let post_prune = evaluate(&net, &rep.test)?;
    let (achieved, achieved_all) = (net.masks().weight_density(), net.masks().density_all());
    let post_train = if cfg.epochs == 0 {
        post_prune
    } else {
        fit(&mut net, &rep.train, &train_cfg(cfg, rep.seed))?;
        evaluate(&net, &rep.test)?
    };
    Ok(Measured {
        achieved,
        achieved_all,
        post_prune,
        post_train,
        collapse,
        iou: rec.iou,
        recovered: rec.recovered,
    })
}

#[derive(Debug, Clone, Copy)]
enum Cell {
    Prune(Option<Method>, SparsityTarget),
    Oracle,
}

fn run_cell(cfg: &ExperimentConfig, rep: &Repetition, cell: Cell) -> anyhow::Result<ResultRow> {
    match cell {
        Cell::Prune(method, target) => {
            let density = match target {
                SparsityTarget::Planted => ticket_sparsity_in(&rep.ticket, rep.planted.arch())?,
                SparsityTarget::Density(d) => d,
            };
            let masks = prune(cfg, rep, method, density).with_context(|| {
                let m = method.map_or("edge-popup", Method::name);
                format!("pruning with {m} at {target} (seed {})", rep.seed)
            })?;
            let m = measure(cfg, rep, masks)?;
            Ok(ResultRow {
                task: cfg.task,
                method: method.map_or("edge-popup", Method::name).to_string(),
                strategy: cfg.strategy.kind.name().to_string(),
                target,
                target_density: density,
                achieved: m.achieved,
                achieved_all: m.achieved_all,
                post_prune: m.post_prune,
                post_prune_rescaled: None,
                post_train: m.post_train,
                seed: rep.seed,
                collapse: m.collapse,
                iou: m.iou,
                recovered: m.recovered,
            })
        }
        Cell::Oracle => {
            let subnet = extract_subnet(&rep.planted, &rep.report)?;
            let rescaled = evaluate_scaled(&subnet, &rep.test, Some(&rep.report.lambda_out))?;
            let m = measure(cfg, rep, subnet.masks().clone())?;
            Ok(ResultRow {
                task: cfg.task,
                method: "planted".into(),
                strategy: "oracle".into(),
                target: SparsityTarget::Planted,
                target_density: m.achieved,
                achieved: m.achieved,
                achieved_all: m.achieved_all,
                post_prune: m.post_prune,
                post_prune_rescaled: Some(rescaled),
                post_train: m.post_train,
                seed: rep.seed,
                collapse: m.collapse,
                iou: m.iou,
                recovered: m.recovered,
            })
        }
    }
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let methods: Vec<Option<Method>> = match cfg.strategy.kind {
        StrategyKind::EdgePopup => vec![None],
        _ => cfg.methods.iter().copied().map(Some).collect(),
    };
    let mut out = Vec::new();
    if cfg.oracle && cfg.sparsities.contains(&SparsityTarget::Planted) {
        out.push(Cell::Oracle);
    }
    for &m in &methods {
        for &s in &cfg.sparsities {
            out.push(Cell::Prune(m, s));
        }
    }
    out
}

fn run_all(cfg: &ExperimentConfig) -> anyhow::Result<Vec<ResultRow>> {
    let reps: Vec<Repetition> = (0..cfg.repetitions as u64)
        .into_par_iter()
        .map(|i| prepare(cfg, cfg.seed.wrapping_add(i)))
        .collect::<anyhow::Result<_>>()?;
    let cells = cells(cfg);
    let jobs: Vec<(usize, Cell)> = (0..reps.len())
        .flat_map(|r| cells.iter().map(move |&c| (r, c)))
        .collect();
    jobs.into_par_iter()
        .map(|(r, c)| run_cell(cfg, &reps[r], c))
        .collect()
}

/// Rows come out grouped by repetition, then method, then density, no
/// matter how many threads run them.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<Vec<ResultRow>> {
    cfg.validate()?;
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| run_all(cfg)),
        _ => run_all(cfg),
    }
}
