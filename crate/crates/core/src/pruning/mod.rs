//! Pruning: saliency scores, mask selection, pruning schedules, edge-popup
//! and layer-collapse detection.
//!
//! Every score is a [`Params`](crate::Params) aligned with the network, one
//! value per weight and bias. Sparsity targets always refer to weight
//! entries; a bias survives exactly when its neuron keeps an incoming
//! weight.

mod collapse;
mod edge_popup;
mod scores;
mod select;
mod strategies;

pub use collapse::{detect_layer_collapse, CollapseReport};
pub use edge_popup::{edge_popup, edge_popup_keep_fraction, EdgePopupOptions};
pub use scores::{
    hessian_gradient_product, score_grasp, score_magnitude, score_random, score_snip,
    score_synflow, ScoreSet,
};
pub use select::{layer_quotas, select_mask, select_mask_within, Scope};
pub use strategies::{
    multishot, schedule_density, score, singleshot, Method, MultishotOptions, PruneOutcome,
    SingleshotOptions, DEFAULT_SCORE_BATCH,
};
