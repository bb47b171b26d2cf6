use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};

use plantbench_core::data::{generate, DEFAULT_SAMPLES};
use plantbench_core::planting::extract_subnet;
use plantbench_core::pruning::{Method, Scope};
use plantbench_core::theory::{
    domain_grid, eps_layer, estimate_sup_norms, existence_lower_bound, relu_path_prob,
    verify_error_propagation,
};
use plantbench_core::tickets::{build_ticket, ticket_sparsity_in};
use plantbench_core::{plant, Architecture, MaskedMLP, PlantOptions, Task};

use crate::config::{config_args, load_config};
use crate::experiment::{mother_init, run_experiment, ExperimentConfig, SparsityTarget, Strategy, StrategyKind};
use crate::io::{write_dataset_csv, write_json, PlantBundle};
use crate::tsv::{aggregate_path, to_tsv, write_aggregate_tsv, write_tsv};

#[derive(Debug, Parser)]
#[command(name = "plantbench", version, about = "Plant lottery tickets in random ReLU networks and try to find them again")]
pub struct Cli {
    /// key = value file supplying defaults for any flag
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a ticket, plant it into a random mother and check the round trip
    Plant(PlantArgs),
    /// Prune planted mothers and write a TSV of results
    Prune(PruneArgs),
    /// Existence bounds for a ticket and mother width
    Theory(TheoryArgs),
    /// Export a generated dataset as CSV
    Data(DataArgs),
}

#[derive(Debug, Args)]
pub struct NetArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long, default_value_t = 5)]
    pub depth: usize,
    #[arg(long, default_value_t = 100)]
    pub width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl NetArgs {
    fn arch(&self) -> anyhow::Result<Architecture> {
        Ok(Architecture::uniform(self.task.input_dim(), self.width, self.depth, self.task.output_dim())?)
    }
}

#[derive(Debug, Args)]
pub struct PlantArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Points on the domain grid used for the round-trip check
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    /// Mother weights uniform in [-sigma, sigma]; "fan-in" for 1/sqrt(inputs)
    #[arg(long, default_value = "0.5", value_parser = parse_sigma)]
    pub sigma: Sigma,
    /// JSON file for the ticket, report and support
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Target density, or "planted" (repeatable)
    #[arg(long = "sparsity")]
    pub sparsity: Vec<SparsityTarget>,
    /// magnitude, random, snip, grasp or synflow (repeatable)
    #[arg(long = "method")]
    pub method: Vec<Method>,
    /// singleshot, multishot or edge-popup
    #[arg(long, default_value = "singleshot")]
    pub strategy: StrategyKind,
    /// Multishot rounds, or SynFlow rounds for singleshot
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Training epochs after pruning
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Training epochs inside each multishot round
    #[arg(long, default_value_t = 5)]
    pub round_epochs: usize,
    /// Score-training epochs for edge-popup
    #[arg(long, default_value_t = 10)]
    pub popup_epochs: usize,
    /// Anneal the edge-popup keep fraction
    #[arg(long)]
    pub anneal: bool,
    /// global or local
    #[arg(long, default_value = "global", value_parser = parse_scope)]
    pub scope: Scope,
    /// Repetitions (default 25, or 10 for multishot and edge-popup)
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Mother weights uniform in [-sigma, sigma]; "fan-in" for 1/sqrt(inputs)
    #[arg(long, default_value = "0.5", value_parser = parse_sigma)]
    pub sigma: Sigma,
    /// Skip the row for the planted support itself
    #[arg(long)]
    pub no_oracle: bool,
    /// Raw TSV path; the summary goes next to it as NAME.agg.tsv
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Target sup-norm accuracy (repeatable)
    #[arg(long = "eps", default_value = "0.1")]
    pub eps: Vec<f64>,
    /// Halve the tolerances as for normally distributed parameters
    #[arg(long)]
    pub normal: bool,
    /// Also perturb the ticket this many times and report the worst deviation
    #[arg(long, default_value_t = 0)]
    pub verify: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct Sigma(pub Option<f64>);

fn parse_sigma(s: &str) -> Result<Sigma, String> {
    if s.eq_ignore_ascii_case("fan-in") {
        return Ok(Sigma(None));
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Sigma(Some(v))),
        _ => Err(format!("expected a positive number or fan-in, got {s:?}")),
    }
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    match s.to_ascii_lowercase().as_str() {
        "global" => Ok(Scope::Global),
        "local" => Ok(Scope::Local),
        other => Err(format!("unknown scope {other:?}")),
    }
}

/// Inserts the entries of `--config FILE` that the subcommand understands
/// and the command line leaves unset.
pub fn expand_config(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strs.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strs.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = path else { return Ok(args) };
    let cfg = load_config(path.as_ref())?;
    let cmd = Cli::command();
    let Some(sub) = strs.iter().skip(1).find_map(|a| cmd.find_subcommand(a)) else {
        return Ok(args);
    };
    let known: Vec<(String, bool)> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(|l| (l.to_string(), a.get_action().takes_values())))
        .collect();
    let relevant = cfg
        .into_iter()
        .filter(|(k, _)| k != "config" && known.iter().any(|(l, _)| l == k))
        .collect();
    let flags: Vec<&str> = known.iter().filter(|(_, v)| !v).map(|(l, _)| l.as_str()).collect();
    let mut out = args;
    out.extend(config_args(&relevant, &strs, &flags).into_iter().map(OsString::from));
    Ok(out)
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Plant(a) => plant_cmd(a, stdout),
        Command::Prune(a) => prune_cmd(a, stdout),
        Command::Theory(a) => theory_cmd(a, stdout),
        Command::Data(a) => data_cmd(a, stdout),
    }
}

fn plant_cmd(a: PlantArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let ticket = build_ticket(a.net.task, a.net.depth)?;
    let arch = a.net.arch()?;
    let mother = MaskedMLP::new(arch.clone(), &mother_init(&arch, a.sigma.0, a.net.seed))?;
    let (planted, report) = plant(&ticket, &mother, PlantOptions::default())?;
    let subnet = extract_subnet(&planted, &report)?;
    let dim = arch.input_dim();
    let mut worst: f64 = 0.0;
    for x in domain_grid(dim, a.points).chunks(dim) {
        let y = subnet.forward(x)?;
        let t = ticket.eval(x)?;
        for ((y, l), t) in y.iter().zip(&report.lambda_out).zip(&t) {
            worst = worst.max((y * l - t).abs());
        }
    }
    writeln!(out, "task\t{}", a.net.task)?;
    writeln!(out, "ticket_weights\t{}", ticket.weight_nnz())?;
    writeln!(out, "ticket_density\t{}", ticket_sparsity_in(&ticket, &arch)?)?;
    writeln!(out, "lambda_out\t{:?}", report.lambda_out)?;
    writeln!(out, "max_deviation\t{worst:e}")?;
    if let Some(path) = a.out {
        let bundle = PlantBundle {
            support: report.support()?,
            ticket,
            report,
            seed: a.net.seed,
            max_deviation: worst,
        };
        write_json(&bundle, &path)?;
    }
    Ok(())
}

fn prune_cmd(a: PruneArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut strategy = match a.strategy {
        StrategyKind::Singleshot => Strategy::singleshot(),
        StrategyKind::Multishot => Strategy::multishot(),
        StrategyKind::EdgePopup => Strategy::edge_popup(a.anneal),
    };
    if let Some(r) = a.rounds {
        strategy.rounds = r;
    }
    strategy.epochs_per_round = a.round_epochs;
    strategy.popup_epochs = a.popup_epochs;
    strategy.scope = a.scope;
    let defaults = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        task: a.net.task,
        depth: a.net.depth,
        width: a.net.width,
        sparsities: if a.sparsity.is_empty() { defaults.sparsities } else { a.sparsity },
        methods: if a.method.is_empty() { defaults.methods } else { a.method },
        repetitions: a.reps.unwrap_or(match a.strategy {
            StrategyKind::Singleshot => 25,
            _ => 10,
        }),
        strategy,
        seed: a.net.seed,
        epochs: a.epochs,
        samples: a.samples,
        sigma: a.sigma.0,
        oracle: !a.no_oracle,
    };
    let rows = run_experiment(&cfg)?;
    match a.out {
        Some(path) => {
            write_tsv(&rows, &path)?;
            write_aggregate_tsv(&rows, &aggregate_path(&path))?;
        }
        None => out.write_all(to_tsv(&rows).as_bytes())?,
    }
    Ok(())
}

fn theory_cmd(a: TheoryArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let ticket = build_ticket(a.net.task, a.net.depth)?;
    let arch = a.net.arch()?;
    let sup = estimate_sup_norms(&ticket);
    let hidden = &arch.widths()[1..arch.depth()];
    writeln!(out, "# {} ticket, mother {:?}", a.net.task, arch.widths())?;
    writeln!(out, "relu_path_prob\t{}", relu_path_prob(hidden))?;
    writeln!(out, "eps\tlayer\ttarget_width\tmother_width\tk_max\teps_l\tfailure\tterm")?;
    for &eps in &a.eps {
        if !(eps > 0.0) {
            bail!("eps must be positive, got {eps}");
        }
        let b = existence_lower_bound(eps, &ticket, &arch, &sup, a.normal)
            .with_context(|| format!("bound at eps {eps}"))?;
        for (l, lb) in b.layers.iter().enumerate() {
            writeln!(
                out,
                "{eps}\t{l}\t{}\t{}\t{}\t{:e}\t{:e}\t{}",
                lb.target_width, lb.mother_width, lb.k_max, lb.eps_l, lb.failure, lb.term
            )?;
        }
        writeln!(out, "{eps}\tall\tprobability\t{}\traw\t{}", b.probability, b.raw)?;
        if a.verify > 0 {
            let budget = eps_layer(eps, &ticket, &sup)?;
            let worst = verify_error_propagation(&ticket, &budget, a.verify, 1000, a.net.seed)?;
            writeln!(out, "{eps}\tall\tmax_perturbation_deviation\t{worst:e}")?;
        }
    }
    Ok(())
}

fn data_cmd(a: DataArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let d = generate(a.task, a.samples, a.seed)?;
    match a.out {
        Some(path) => write_dataset_csv(&d, &path),
        None => Ok(out.write_all(crate::io::dataset_csv(&d).as_bytes())?),
    }
}
