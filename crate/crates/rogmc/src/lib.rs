//! Rating-ordinality graph matrix completion.
//!
//! The library decomposes a user-item rating graph into an interest graph
//! plus per-rating-level subgraphs, propagates embeddings through each with
//! a weight-free GNN, ties the views together with an interest
//! regularizer, and decodes rating distributions with per-rating bilinear
//! forms. Modules follow the pipeline: `data` (loading, filtering,
//! splitting, masking), `graph` (sparse graphs and decomposition), `model`
//! (parameters, propagation, decoder), `train` (losses, gradients, Adam,
//! the training loop), `eval` (RMSE, ablation variants, distance
//! analysis).

// Linked for the BLAS-backed ndarray matrix products.
extern crate blas_src;

// Training allocates and frees large gradient/gather buffers every epoch;
// the default allocator returns them to the kernel each time and the page
// faults dominate sys time. mimalloc keeps the segments cached.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
