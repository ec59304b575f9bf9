//! Forward-only image classification with per-class Hopfield networks.
//!
//! Training accumulates Hebbian pixel-pair statistics per class
//! ([`hebbian::accumulate`]), normalizes them ([`hebbian::normalize`]) and
//! optionally prunes each pixel to its strongest connections
//! ([`hebbian::sparsify`]). Inference either scores an image by Ising energy
//! under every class ([`energy::classify`]) or lets coupled phase oscillators
//! relax it first ([`kuramoto::classify_kuramoto`]).

pub mod bench;
pub mod data;
pub mod energy;
pub mod error;
pub mod hebbian;
pub mod kuramoto;
pub mod model_io;
pub mod oracle;
pub mod tournament;

pub use error::{Error, Result};
