use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use plantbench_core::{Dataset, Masks, PlantReport, SparseTicket, Targets};

/// What `plant` writes: the ticket, where it went, and the planted support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantBundle {
    pub ticket: SparseTicket,
    pub report: PlantReport,
    pub support: Masks,
    pub seed: u64,
    /// Largest deviation of the rescaled subnet from the ticket on the check
    /// grid.
    pub max_deviation: f64,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// CSV with columns `x0..`, then `y0..` for regression or `label`.
pub fn dataset_csv(d: &Dataset) -> String {
    let mut cols: Vec<String> = (0..d.input_dim).map(|i| format!("x{i}")).collect();
    match &d.targets {
        Targets::Values { dim, .. } => cols.extend((0..*dim).map(|i| format!("y{i}"))),
        Targets::Classes { .. } => cols.push("label".into()),
    }
    let mut s = cols.join(",");
    s.push('\n');
    for i in 0..d.len() {
        let mut fields: Vec<String> = d.input(i).iter().map(f64::to_string).collect();
        match &d.targets {
            Targets::Values { dim, data } => {
                fields.extend(data[i * dim..(i + 1) * dim].iter().map(f64::to_string))
            }
            Targets::Classes { labels, .. } => fields.push(labels[i].to_string()),
        }
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn write_dataset_csv(d: &Dataset, path: &Path) -> anyhow::Result<()> {
    fs::write(path, dataset_csv(d)).with_context(|| format!("writing {}", path.display()))
}
