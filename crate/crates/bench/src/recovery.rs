use anyhow::ensure;
use serde::{Deserialize, Serialize};

use plantbench_core::{Masks, PlantReport};

/// Overlap between kept weight positions and the planted ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    /// Intersection over union.
    pub iou: f64,
    /// Fraction of planted weights that survived.
    pub recovered: f64,
    pub found: usize,
    pub planted: usize,
    pub common: usize,
}

pub fn recovery_metrics(found: &Masks, report: &PlantReport) -> anyhow::Result<RecoveryStats> {
    ensure!(found.matches(&report.arch), "masks do not match the planted architecture");
    let support = report.support()?;
    let (mut common, mut union, mut planted) = (0, 0, 0);
    for (f, p) in found.layers.iter().zip(&support.layers) {
        for (&a, &b) in f.weights.iter().zip(&p.weights) {
            common += usize::from(a && b);
            union += usize::from(a || b);
            planted += usize::from(b);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Ok(RecoveryStats {
        iou: ratio(common, union),
        recovered: ratio(common, planted),
        found: found.kept_weights(),
        planted,
        common,
    })
}
