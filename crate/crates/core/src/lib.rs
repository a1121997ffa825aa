//! Deterministic federated-learning simulator.
//!
//! Synthetic image data is split across virtual clients (IID or with
//! Dirichlet label skew), trained with FedAvg, and optionally rebalanced
//! every round by having the selected clients synthesize augmented images
//! until their label histograms match the per-label maximum.

pub mod augment;
pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
