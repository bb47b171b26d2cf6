use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::net::{MaskedMLP, Masks};
use crate::pruning::scores::{score_grasp, score_magnitude, score_random, score_snip, score_synflow};
use crate::pruning::select::{select_mask_within, Scope};
use crate::pruning::ScoreSet;
use crate::train::{fit, TrainConfig};
use crate::{Error, Result};

/// Samples used by the data-dependent scores.
pub const DEFAULT_SCORE_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Magnitude,
    Random,
    Snip,
    Grasp,
    Synflow,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Magnitude,
        Method::Random,
        Method::Snip,
        Method::Grasp,
        Method::Synflow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Magnitude => "magnitude",
            Method::Random => "random",
            Method::Snip => "snip",
            Method::Grasp => "grasp",
            Method::Synflow => "synflow",
        }
    }

    pub fn needs_data(self) -> bool {
        matches!(self, Method::Snip | Method::Grasp)
    }
}

impl core::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::OutOfRange(alloc::format!("unknown method {s:?}")))
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scores `net` as it stands (masked entries are already zero). Data
/// methods use the first `batch` samples of `data`.
pub fn score(method: Method, net: &MaskedMLP, data: Option<&Dataset>, batch: usize, seed: u64) -> Result<ScoreSet> {
    match method {
        Method::Magnitude => Ok(score_magnitude(net)),
        Method::Random => Ok(score_random(net, seed)),
        Method::Synflow => Ok(score_synflow(net)),
        Method::Snip | Method::Grasp => {
            let d = data.ok_or(Error::MissingData { method: method.name() })?;
            if d.is_empty() {
                return Err(Error::Empty);
            }
            let (x, t) = d.batch(0, batch.clamp(1, d.len()));
            if method == Method::Snip {
                score_snip(net, x, t, d.loss_kind())
            } else {
                score_grasp(net, x, t, d.loss_kind())
            }
        }
    }
}

/// Scheduled density after round `round` of `rounds`: `ρ^{round/rounds}`.
pub fn schedule_density(rho: f64, round: usize, rounds: usize) -> f64 {
    if round >= rounds {
        return rho;
    }
    libm::pow(rho, round as f64 / rounds as f64)
}

/// Masks plus the weight density reached after each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    pub masks: Masks,
    pub densities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleshotOptions {
    pub scope: Scope,
    /// Score-and-prune rounds without training in between; only SynFlow
    /// uses more than one.
    pub synflow_iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SingleshotOptions {
    fn default() -> Self {
        Self {
            scope: Scope::Global,
            synflow_iterations: 1,
            batch_size: DEFAULT_SCORE_BATCH,
            seed: 0,
        }
    }
}

fn start_masks(net: &MaskedMLP) -> Masks {
    net.masks().clone()
}

pub fn singleshot(
    net: &MaskedMLP,
    method: Method,
    rho: f64,
    data: Option<&Dataset>,
    opts: &SingleshotOptions,
) -> Result<PruneOutcome> {
    if method.needs_data() && data.is_none() {
        return Err(Error::MissingData { method: method.name() });
    }
    let rounds = if method == Method::Synflow {
        opts.synflow_iterations.max(1)
    } else {
        1
    };
    let mut work = net.clone();
    let mut masks = start_masks(net);
    let mut densities = Vec::with_capacity(rounds);
    for r in 1..=rounds {
        let scores = score(method, &work, data, opts.batch_size, opts.seed)?;
        masks = select_mask_within(&scores, &masks, schedule_density(rho, r, rounds), opts.scope)?;
        densities.push(masks.weight_density());
        if r < rounds {
            work.apply_mask(masks.clone())?;
        }
    }
    Ok(PruneOutcome { masks, densities })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultishotOptions {
    pub rounds: usize,
    /// Training used inside each round; `train.epochs` is the per-round
    /// budget.
    pub train: TrainConfig,
    pub scope: Scope,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MultishotOptions {
    fn default() -> Self {
        Self {
            rounds: 10,
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            scope: Scope::Global,
            batch_size: DEFAULT_SCORE_BATCH,
            seed: 0,
        }
    }
}

/// Train, prune to `ρ^{r/R}`, reset to the initial parameters; `R` times.
/// `net` itself is not modified.
pub fn multishot(
    net: &MaskedMLP,
    method: Method,
    rho: f64,
    data: &Dataset,
    opts: &MultishotOptions,
) -> Result<PruneOutcome> {
    if opts.rounds == 0 {
        return Err(Error::OutOfRange(String::from("multishot needs at least one round")));
    }
    let mut masks = start_masks(net);
    let mut densities = Vec::with_capacity(opts.rounds);
    for r in 1..=opts.rounds {
        let mut work = net.clone();
        work.apply_mask(masks.clone())?;
        let mut cfg = opts.train.clone();
        cfg.seed = opts.train.seed.wrapping_add(r as u64);
        fit(&mut work, data, &cfg)?;
        let seed = opts.seed.wrapping_add(r as u64);
        let scores = score(method, &work, Some(data), opts.batch_size, seed)?;
        masks = select_mask_within(&scores, &masks, schedule_density(rho, r, opts.rounds), opts.scope)?;
        densities.push(masks.weight_density());
    }
    Ok(PruneOutcome { masks, densities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_circle;
    use crate::net::{Architecture, InitSpec};

    fn mother(seed: u64) -> MaskedMLP {
        let a = Architecture::uniform(2, 20, 3, 4).unwrap();
        MaskedMLP::new(a.clone(), &InitSpec::fan_in(&a, seed)).unwrap()
    }

    #[test]
    fn schedule_values() {
        assert!(libm::fabs(schedule_density(0.01, 5, 10) - 0.1) < 1e-15);
        assert_eq!(schedule_density(0.01, 10, 10), 0.01);
        let s: Vec<f64> = (1..=10).map(|r| schedule_density(0.2, r, 10)).collect();
        assert!(s.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("edge".parse::<Method>().is_err());
    }

    #[test]
    fn data_methods_need_data() {
        let n = mother(1);
        for m in [Method::Snip, Method::Grasp] {
            let e = singleshot(&n, m, 0.5, None, &SingleshotOptions::default()).unwrap_err();
            assert!(matches!(e, Error::MissingData { .. }));
        }
        assert!(singleshot(&n, Method::Synflow, 0.5, None, &SingleshotOptions::default()).is_ok());
    }

    #[test]
    fn singleshot_hits_the_target() {
        let n = mother(2);
        let d = gen_circle(64, 0.0, 3).unwrap();
        let total = n.arch().weight_count() as f64;
        for m in Method::ALL {
            for rho in [0.03, 0.5, 1.0] {
                let out = singleshot(&n, m, rho, Some(&d), &SingleshotOptions::default()).unwrap();
                assert!(libm::fabs(out.masks.weight_density() - rho) <= 0.5 / total + 1e-12, "{m} {rho}");
            }
        }
    }

    #[test]
    fn iterative_synflow_follows_its_schedule() {
        let n = mother(4);
        let opts = SingleshotOptions {
            synflow_iterations: 20,
            ..Default::default()
        };
        let out = singleshot(&n, Method::Synflow, 0.05, None, &opts).unwrap();
        assert_eq!(out.densities.len(), 20);
        assert!(out.densities.windows(2).all(|w| w[1] <= w[0]));
        let total = n.arch().weight_count() as f64;
        assert!(libm::fabs(out.densities[19] - 0.05) <= 0.5 / total + 1e-12);
    }

    #[test]
    fn multishot_schedule_and_input_untouched() {
        let n = mother(5);
        let before = n.clone();
        let d = gen_circle(200, 0.0, 6).unwrap();
        let opts = MultishotOptions {
            rounds: 4,
            train: TrainConfig {
                epochs: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = multishot(&n, Method::Magnitude, 0.1, &d, &opts).unwrap();
        assert_eq!(n, before);
        let total = n.arch().weight_count() as f64;
        for (r, &got) in out.densities.iter().enumerate() {
            let want = schedule_density(0.1, r + 1, 4);
            assert!(libm::fabs(got - want) <= 0.5 / total + 1e-12);
        }
    }
}
