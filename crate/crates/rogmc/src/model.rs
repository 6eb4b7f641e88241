//! Forward computation: weight-free propagation on each subgraph, layer
//! aggregation, representation accumulation across preference levels, and
//! the bilinear ordinal decoder.
//!
//! Everything here is linear in the base embeddings until the softmax, which
//! is what makes the closed-form backward pass in the training module exact.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DecomposedGraphs, SparseBipartiteGraph};

/// Aggregation over propagation layers 0..L.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerAgg {
    Mean,
    Sum,
}

impl LayerAgg {
    /// Weight applied to every layer when aggregating L+1 layers.
    pub fn layer_weight(self, num_layers: usize) -> f64 {
        match self {
            LayerAgg::Mean => 1.0 / num_layers as f64,
            LayerAgg::Sum => 1.0,
        }
    }
}

impl FromStr for LayerAgg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(LayerAgg::Mean),
            "sum" => Ok(LayerAgg::Sum),
            other => Err(Error::InvalidConfig(format!("unknown layer aggregation '{other}'"))),
        }
    }
}

impl fmt::Display for LayerAgg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerAgg::Mean => write!(f, "mean"),
            LayerAgg::Sum => write!(f, "sum"),
        }
    }
}

/// Trainable state: one shared base embedding table (layer 0 of every
/// subgraph) and one bilinear matrix per rating value.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// (num_users + num_items) x d.
    pub base_embeddings: Array2<f64>,
    /// One d x d matrix per rating in `rating_set`, same order.
    pub bilinear: Vec<Array2<f64>>,
    pub rating_set: Vec<i32>,
}

impl ModelParams {
    /// Base embeddings ~ N(0, 0.1^2); each Q_r = I + 0.01 * N(0, 1).
    /// Draw order is fixed (embeddings row-major, then Q_r in rating
    /// order), so a seed fully determines the parameters.
    pub fn init(num_nodes: usize, dim: usize, rating_set: &[i32], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base_dist = Normal::new(0.0, 0.1).expect("valid sigma");
        let noise_dist = Normal::new(0.0, 1.0).expect("valid sigma");

        let mut base = Vec::with_capacity(num_nodes * dim);
        for _ in 0..num_nodes * dim {
            base.push(base_dist.sample(&mut rng));
        }
        let base_embeddings =
            Array2::from_shape_vec((num_nodes, dim), base).expect("shape matches");

        let bilinear = rating_set
            .iter()
            .map(|_| {
                let mut q = Array2::<f64>::eye(dim);
                for v in q.iter_mut() {
                    *v += 0.01 * noise_dist.sample(&mut rng);
                }
                q
            })
            .collect();

        ModelParams {
            base_embeddings,
            bilinear,
            rating_set: rating_set.to_vec(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.base_embeddings.nrows()
    }

    pub fn dim(&self) -> usize {
        self.base_embeddings.ncols()
    }
}

/// Runs L propagation steps from `base`, returning all L+1 layers.
pub fn propagate(
    graph: &SparseBipartiteGraph,
    base: &Array2<f64>,
    num_layers: usize,
) -> Result<Vec<Array2<f64>>> {
    if base.nrows() != graph.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "base has {} rows, graph has {} nodes",
            base.nrows(),
            graph.num_nodes()
        )));
    }
    let mut layers = Vec::with_capacity(num_layers + 1);
    layers.push(base.clone());
    for l in 0..num_layers {
        let mut next = Array2::zeros(base.dim());
        graph.propagate_step(&layers[l], &mut next);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("propagation layer {}", l + 1)));
        }
        layers.push(next);
    }
    Ok(layers)
}

/// Combines layers 0..L into one representation (mean by default).
pub fn aggregate_layers(layers: &[Array2<f64>], agg: LayerAgg) -> Array2<f64> {
    assert!(!layers.is_empty(), "need at least the base layer");
    let mut out = layers[0].clone();
    for layer in &layers[1..] {
        out += layer;
    }
    if agg == LayerAgg::Mean {
        out /= layers.len() as f64;
    }
    out
}

/// All intermediate representations of one forward pass, retained so the
/// backward pass can replay the linear pipeline exactly.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer embeddings per level graph, aligned with `graphs.levels`.
    pub level_layers: Vec<Vec<Array2<f64>>>,
    pub interest_layers: Vec<Array2<f64>>,
    /// Aggregated h_t per level.
    pub h_levels: Vec<Array2<f64>>,
    pub h_interest: Array2<f64>,
    /// Final representation: sum of h_t over levels (h_I excluded).
    pub h: Array2<f64>,
    pub num_layers: usize,
    pub agg: LayerAgg,
    /// User rows come first in every matrix; items start at this offset.
    pub num_users: usize,
}

/// Propagates the shared base through the interest graph and every level
/// graph, aggregates layers, and accumulates h = sum over levels of h_t.
pub fn forward(
    graphs: &DecomposedGraphs,
    params: &ModelParams,
    num_layers: usize,
    agg: LayerAgg,
) -> Result<ForwardCache> {
    let interest_layers = propagate(&graphs.interest, &params.base_embeddings, num_layers)?;
    let h_interest = aggregate_layers(&interest_layers, agg);

    let mut level_layers = Vec::with_capacity(graphs.levels.len());
    let mut h_levels = Vec::with_capacity(graphs.levels.len());
    for level in &graphs.levels {
        let layers = propagate(&level.graph, &params.base_embeddings, num_layers)?;
        h_levels.push(aggregate_layers(&layers, agg));
        level_layers.push(layers);
    }

    let mut h = Array2::zeros(params.base_embeddings.dim());
    for h_t in &h_levels {
        h += h_t;
    }

    Ok(ForwardCache {
        level_layers,
        interest_layers,
        h_levels,
        h_interest,
        h,
        num_layers,
        agg,
        num_users: graphs.interest.num_users,
    })
}

/// z^r = h_u^T Q_r h_v for every rating r.
pub fn decode_logits(
    h_u: ArrayView1<f64>,
    h_v: ArrayView1<f64>,
    bilinear: &[Array2<f64>],
) -> Vec<f64> {
    bilinear.iter().map(|q| h_u.dot(&q.dot(&h_v))).collect()
}

/// Max-subtracted softmax over the rating logits.
pub fn predict_distribution(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Expected rating under the decoded distribution; always within
/// [min R, max R].
pub fn predict_rating(probs: &[f64], rating_set: &[i32]) -> f64 {
    probs
        .iter()
        .zip(rating_set)
        .map(|(p, &r)| p * r as f64)
        .sum()
}

/// Gathers rows of `m` into a dense (len x d) matrix.
pub fn gather_rows(m: &Array2<f64>, rows: impl ExactSizeIterator<Item = usize>) -> Array2<f64> {
    let d = m.ncols();
    let mut out = Array2::zeros((rows.len(), d));
    for (dst, src) in rows.enumerate() {
        out.row_mut(dst).assign(&m.row(src));
    }
    out
}

/// Row-wise dot product of two equally shaped matrices.
pub fn row_dots(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    debug_assert_eq!(a.dim(), b.dim());
    a.axis_iter(Axis(0))
        .zip(b.axis_iter(Axis(0)))
        .map(|(ra, rb)| ra.dot(&rb))
        .collect()
}

/// Batched decoder: logits for P (user, item) pairs as a P x |R| matrix.
/// Item indices are dataset-local; `num_users` supplies the node offset.
pub fn score_pairs(
    h: &Array2<f64>,
    params: &ModelParams,
    num_users: usize,
    pairs: &[(u32, u32)],
) -> Array2<f64> {
    let hu = gather_rows(h, pairs.iter().map(|&(u, _)| u as usize));
    let hv = gather_rows(h, pairs.iter().map(|&(_, i)| num_users + i as usize));
    let mut logits = Array2::zeros((pairs.len(), params.bilinear.len()));
    for (r_idx, q) in params.bilinear.iter().enumerate() {
        let a = hu.dot(q);
        for (p, z) in row_dots(&a, &hv).into_iter().enumerate() {
            logits[[p, r_idx]] = z;
        }
    }
    logits
}

/// Expected rating per row of a P x |R| logit matrix.
pub fn expected_ratings(logits: &Array2<f64>, rating_set: &[i32]) -> Vec<f64> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let probs = predict_distribution(row.as_slice().expect("standard layout"));
            predict_rating(&probs, rating_set)
        })
        .collect()
}
