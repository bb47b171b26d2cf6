//! Core algorithms for planting sparse "winning tickets" into random ReLU
//! networks and checking whether pruning methods can find them again.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation on `f64`: network evaluation and backpropagation, Adam,
//! the three ground-truth ticket constructions, the planting algorithm,
//! the existence-bound calculators, dataset generators and the pruning
//! methods. File formats, the CLI and experiment orchestration live in the
//! `plantbench` crate.
//!
//! Layers are indexed from 0 in code. Layer `l` maps activations of width
//! `widths[l]` to width `widths[l + 1]`; its weight matrix is stored
//! row-major with shape `(outputs, inputs)` so that row `i` holds the
//! incoming weights of neuron `i`.

#![no_std]

extern crate alloc;

pub mod data;
mod error;
pub mod net;
pub mod optim;
pub mod planting;
pub mod pruning;
pub mod theory;
pub mod tickets;
pub mod train;

pub use data::{Dataset, Targets, Task};
pub use error::{Error, Result};
pub use net::{Architecture, InitSpec, LossKind, MaskedMLP, Masks, Params};
pub use planting::{plant, PlantOptions, PlantReport};
pub use tickets::SparseTicket;

/// Seeded generator used everywhere a random stream is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
