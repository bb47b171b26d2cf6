//! Tab-separated result tables: one row per run, plus per-group summaries
//! (mean, minimum and maximum over repetitions).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};

use crate::experiment::{ResultRow, SparsityTarget};

pub const RAW_HEADER: [&str; 14] = [
    "task",
    "method",
    "strategy",
    "target",
    "target_density",
    "achieved",
    "achieved_all",
    "post_prune",
    "post_prune_rescaled",
    "post_train",
    "seed",
    "collapse",
    "iou",
    "recovered",
];

fn header() -> String {
    RAW_HEADER.join("\t")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Floats use the shortest representation that parses back exactly.
pub fn to_tsv(rows: &[ResultRow]) -> String {
    let mut s = header();
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.task,
            r.method,
            r.strategy,
            r.target,
            r.target_density,
            r.achieved,
            r.achieved_all,
            r.post_prune,
            opt(r.post_prune_rescaled),
            r.post_train,
            r.seed,
            r.collapse,
            r.iou,
            r.recovered,
        );
    }
    s
}

pub fn parse_tsv(text: &str) -> anyhow::Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header() => {}
        Some(h) => bail!("unexpected header {h:?}"),
        None => bail!("empty table"),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        ensure!(f.len() == RAW_HEADER.len(), "line {}: {} fields", n + 2, f.len());
        let num = |i: usize| -> anyhow::Result<f64> {
            f[i].parse().with_context(|| format!("line {}: {} = {:?}", n + 2, RAW_HEADER[i], f[i]))
        };
        rows.push(ResultRow {
            task: f[0].parse()?,
            method: f[1].to_string(),
            strategy: f[2].to_string(),
            target: f[3].parse::<SparsityTarget>()?,
            target_density: num(4)?,
            achieved: num(5)?,
            achieved_all: num(6)?,
            post_prune: num(7)?,
            post_prune_rescaled: if f[8] == "NA" { None } else { Some(num(8)?) },
            post_train: num(9)?,
            seed: f[10].parse().with_context(|| format!("line {}: seed", n + 2))?,
            collapse: f[11].parse().with_context(|| format!("line {}: collapse", n + 2))?,
            iou: num(12)?,
            recovered: num(13)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let (mut n, mut sum, mut min, mut max) = (0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        (n > 0).then(|| Summary {
            mean: sum / n as f64,
            min,
            max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: String,
    pub method: String,
    pub strategy: String,
    pub target: String,
    pub runs: usize,
    pub target_density: f64,
    pub achieved: f64,
    pub post_prune: Summary,
    pub post_prune_rescaled: Option<Summary>,
    pub post_train: Summary,
    pub collapsed_runs: usize,
    pub iou: f64,
}

/// Groups by (task, method, strategy, target) in order of first appearance.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, String, String, String)> = Vec::new();
    for r in rows {
        let k = (r.task.to_string(), r.method.clone(), r.strategy.clone(), r.target.to_string());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(task, method, strategy, target)| {
            let g: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| {
                    r.task.to_string() == task
                        && r.method == method
                        && r.strategy == strategy
                        && r.target.to_string() == target
                })
                .collect();
            let mean = |f: fn(&ResultRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / g.len() as f64;
            AggregateRow {
                runs: g.len(),
                target_density: mean(|r| r.target_density),
                achieved: mean(|r| r.achieved),
                post_prune: Summary::of(g.iter().map(|r| r.post_prune)).expect("nonempty group"),
                post_prune_rescaled: Summary::of(g.iter().filter_map(|r| r.post_prune_rescaled)),
                post_train: Summary::of(g.iter().map(|r| r.post_train)).expect("nonempty group"),
                collapsed_runs: g.iter().filter(|r| r.collapse).count(),
                iou: mean(|r| r.iou),
                task,
                method,
                strategy,
                target,
            }
        })
        .collect()
}

pub fn aggregate_tsv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(
        "task\tmethod\tstrategy\ttarget\truns\ttarget_density\tachieved\t\
         post_prune_mean\tpost_prune_min\tpost_prune_max\t\
         post_prune_rescaled_mean\tpost_prune_rescaled_min\tpost_prune_rescaled_max\t\
         post_train_mean\tpost_train_min\tpost_train_max\tcollapsed_runs\tiou_mean\n",
    );
    for a in rows {
        let r = a.post_prune_rescaled;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            a.task,
            a.method,
            a.strategy,
            a.target,
            a.runs,
            a.target_density,
            a.achieved,
            a.post_prune.mean,
            a.post_prune.min,
            a.post_prune.max,
            opt(r.map(|r| r.mean)),
            opt(r.map(|r| r.min)),
            opt(r.map(|r| r.max)),
            a.post_train.mean,
            a.post_train.min,
            a.post_train.max,
            a.collapsed_runs,
            a.iou,
        );
    }
    s
}

pub fn write_tsv(rows: &[ResultRow], path: &Path) -> anyhow::Result<()> {
    fs::write(path, to_tsv(rows)).with_context(|| format!("writing {}", path.display()))
}

pub fn write_aggregate_tsv(rows: &[ResultRow], path: &Path) -> anyhow::Result<()> {
    fs::write(path, aggregate_tsv(&aggregate(rows)))
        .with_context(|| format!("writing {}", path.display()))
}

/// `results.tsv` → `results.agg.tsv`.
pub fn aggregate_path(raw: &Path) -> std::path::PathBuf {
    let stem = raw.file_stem().map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    raw.with_file_name(format!("{stem}.agg.tsv"))
}
