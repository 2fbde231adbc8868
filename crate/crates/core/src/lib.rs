//! Spectral analysis and training of contrastive collaborative-filtering
//! models.
//!
//! The crate covers interaction loading and per-user splits ([`data`]), the
//! bipartite interaction graph ([`graph`]), an exact dense spectral lab
//! ([`spectral`]), contrastive and pairwise losses with analytic gradients
//! ([`losses`]), embedding encoders ([`encoder`]), SGD training
//! ([`train`]), and full-ranking evaluation ([`eval`]).

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod graph;
pub mod losses;
pub mod spectral;
pub mod train;
pub mod verify;

pub use config::ExperimentConfig;
pub use data::{InteractionDataset, SplitDataset, SplitRatios};
pub use error::{Error, Result};
pub use graph::{BipartiteGraph, SparseMatrix};
