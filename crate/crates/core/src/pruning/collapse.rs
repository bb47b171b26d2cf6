use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::net::{Architecture, Masks};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// Layers without a single kept weight.
    pub collapsed_layers: Vec<usize>,
    /// No chain of kept weights leads from any input to any output.
    pub flow_interrupted: bool,
}

impl CollapseReport {
    pub fn collapsed(&self) -> bool {
        !self.collapsed_layers.is_empty() || self.flow_interrupted
    }
}

pub fn detect_layer_collapse(masks: &Masks, arch: &Architecture) -> CollapseReport {
    let collapsed_layers = masks
        .layers
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.weights.iter().any(|&k| k))
        .map(|(l, _)| l)
        .collect();
    let mut reach = vec![true; arch.input_dim()];
    for (l, m) in masks.layers.iter().enumerate() {
        let (outs, ins) = arch.layer_shape(l);
        reach = (0..outs)
            .map(|o| (0..ins).any(|i| reach[i] && m.weights[o * ins + i]))
            .collect();
    }
    CollapseReport {
        collapsed_layers,
        flow_interrupted: !reach.iter().any(|&r| r),
    }
}
