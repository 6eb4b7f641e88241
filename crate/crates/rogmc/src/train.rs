//! The combined objective (cross-entropy + weighted pairwise ranking +
//! interest regularization), its exact analytic gradients, Adam, negative
//! sampling, and the full-batch epoch loop with early stopping.
//!
//! The forward pipeline is linear in the base embeddings up to the decoder,
//! so gradients pull back through each subgraph as repeated multiplication
//! by the (symmetric) normalized adjacency; no autodiff is involved.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitDataset};
use crate::error::{Error, Result};
use crate::eval::rmse_given_h;
use crate::graph::{DecomposedGraphs, DecompositionMode, SparseBipartiteGraph};
use crate::model::{forward, gather_rows, row_dots, ForwardCache, LayerAgg, ModelParams};

/// Probabilities below this floor are clamped inside the cross-entropy so a
/// saturated wrong prediction yields a large finite loss, never infinity.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the pairwise ranking term.
    pub alpha: f64,
    /// Weight of the interest regularization term.
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Consecutive epochs without validation improvement before stopping.
    /// 0 means exactly one epoch runs.
    pub patience: usize,
    pub seed: u64,
    pub num_layers: usize,
    pub dim: usize,
    pub decomposition_mode: DecompositionMode,
    /// Preference levels; `None` means the full rating set.
    pub t_values: Option<Vec<i32>>,
    pub negatives_per_positive: usize,
    pub ir_epsilon: f64,
    pub layer_agg: LayerAgg,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            lambda: 1.0,
            learning_rate: 1e-3,
            epochs: 1000,
            patience: 50,
            seed: 13,
            num_layers: 2,
            dim: 64,
            decomposition_mode: DecompositionMode::Cumulative,
            t_values: None,
            negatives_per_positive: 1,
            ir_epsilon: 1e-12,
            layer_agg: LayerAgg::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.lambda < 0.0 {
            return Err(Error::InvalidConfig("alpha and lambda must be >= 0".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.ir_epsilon.is_nan() || self.ir_epsilon <= 0.0 {
            return Err(Error::InvalidConfig("ir_epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// One training example: a rated (user, item) pair plus, when the user has
/// any non-interacted item, a sampled negative. Pairs whose user interacted
/// with every item keep their cross-entropy term and simply carry no
/// ranking term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingTriplet {
    pub user: u32,
    pub pos_item: u32,
    pub rating: i32,
    pub neg_item: Option<u32>,
}

/// Uniform negative sampling over items the user never interacted with;
/// U-labeled interactions also disqualify an item.
pub struct NegativeSampler {
    /// Sorted interacted item ids per user.
    interacted: Vec<Vec<u32>>,
    num_items: usize,
}

impl NegativeSampler {
    pub fn new(train: &Dataset) -> Self {
        let mut interacted = vec![Vec::new(); train.num_users];
        for it in &train.interactions {
            interacted[it.user as usize].push(it.item);
        }
        for (user, items) in interacted.iter_mut().enumerate() {
            items.sort_unstable();
            if items.len() == train.num_items {
                log::warn!(
                    "user {user} interacted with every item; its pairs carry no ranking term"
                );
            }
        }
        NegativeSampler {
            interacted,
            num_items: train.num_items,
        }
    }

    /// Draws one negative for `user`, or `None` when no candidate exists.
    /// Rejection sampling with a deterministic fallback keeps the draw
    /// uniform while consuming a data-dependent but seed-reproducible
    /// amount of the stream.
    pub fn sample(&self, user: u32, rng: &mut ChaCha8Rng) -> Option<u32> {
        let items = &self.interacted[user as usize];
        if items.len() >= self.num_items {
            return None;
        }
        for _ in 0..64 {
            let candidate = rng.random_range(0..self.num_items as u32);
            if items.binary_search(&candidate).is_err() {
                return Some(candidate);
            }
        }
        // Dense user: enumerate the complement and index into it.
        let mut complement = Vec::with_capacity(self.num_items - items.len());
        let mut cursor = 0usize;
        for item in 0..self.num_items as u32 {
            if cursor < items.len() && items[cursor] == item {
                cursor += 1;
            } else {
                complement.push(item);
            }
        }
        Some(complement[rng.random_range(0..complement.len())])
    }
}

pub(crate) fn sample_with_rng(
    train: &Dataset,
    sampler: &NegativeSampler,
    negatives_per_positive: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<TrainingTriplet> {
    let mut out = Vec::new();
    for it in &train.interactions {
        let Some(rating) = it.label else { continue };
        for _ in 0..negatives_per_positive.max(1) {
            out.push(TrainingTriplet {
                user: it.user,
                pos_item: it.item,
                rating,
                neg_item: sampler.sample(it.user, rng),
            });
        }
    }
    out
}

/// Standalone sampling entry point: one triplet per rated pair per
/// negative, drawn from a fresh stream seeded with `seed`.
pub fn sample_negatives(
    train: &Dataset,
    negatives_per_positive: usize,
    seed: u64,
) -> Vec<TrainingTriplet> {
    let sampler = NegativeSampler::new(train);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with_rng(train, &sampler, negatives_per_positive, &mut rng)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of the decoded distribution against the true rating.
pub fn loss_ce(probs: &[f64], rating_set: &[i32], true_rating: i32) -> Result<f64> {
    let idx = rating_set
        .binary_search(&true_rating)
        .map_err(|_| Error::InvalidConfig(format!("rating {true_rating} not in rating set")))?;
    Ok(-probs[idx].max(PROB_FLOOR).ln())
}

/// Pairwise ranking loss -log sigmoid(o_pos - o_neg), computed as
/// softplus(-(o_pos - o_neg)) for stability.
pub fn loss_bpr(o_pos: f64, o_neg: f64) -> f64 {
    softplus(-(o_pos - o_neg))
}

/// Interest regularization: per node and level the smoothed L2 distance
/// sqrt(|h_t - h_I|^2 + eps), summed over nodes, averaged over levels.
pub fn loss_ir(h_levels: &[Array2<f64>], h_interest: &Array2<f64>, ir_epsilon: f64) -> f64 {
    let mut sum = 0.0;
    for h_t in h_levels {
        for (row_t, row_i) in h_t.outer_iter().zip(h_interest.outer_iter()) {
            let sq: f64 = row_t
                .iter()
                .zip(row_i.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sum += (sq + ir_epsilon).sqrt();
        }
    }
    sum / h_levels.len() as f64
}

/// Loss components. `ce`, `bpr`, `ir` are unweighted sums;
/// `total = ce + alpha * bpr + lambda * ir` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub bpr: f64,
    pub ir: f64,
    pub total: f64,
}

/// Gradients with the same shapes as `ModelParams`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub base_embeddings: Array2<f64>,
    pub bilinear: Vec<Array2<f64>>,
}

fn scale_rows(m: &Array2<f64>, scales: &[f64]) -> Array2<f64> {
    let mut out = m.clone();
    for (mut row, &s) in out.outer_iter_mut().zip(scales) {
        row *= s;
    }
    out
}

fn add_scaled_rows(acc: &mut Array2<f64>, m: &Array2<f64>, scales: &[f64]) {
    let d = m.ncols();
    let acc_flat = acc.as_slice_mut().expect("standard layout");
    let m_flat = m.as_slice().expect("standard layout");
    for (p, &s) in scales.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let dst = &mut acc_flat[p * d..(p + 1) * d];
        let src = &m_flat[p * d..(p + 1) * d];
        for (a, b) in dst.iter_mut().zip(src) {
            *a += s * b;
        }
    }
}

/// Accumulates the pullback of `grad` (a gradient on one aggregated
/// representation h_x) onto the base embeddings:
/// acc += w * sum over l in 0..=L of A^l grad, where A is this graph's
/// symmetric normalized adjacency and w the per-layer aggregation weight.
fn pullback_into(
    graph: &SparseBipartiteGraph,
    grad: &Array2<f64>,
    num_layers: usize,
    layer_weight: f64,
    acc: &mut Array2<f64>,
) {
    let mut running = grad * layer_weight;
    *acc += &running;
    let mut buf = Array2::zeros(grad.dim());
    for _ in 0..num_layers {
        graph.propagate_step(&running, &mut buf);
        std::mem::swap(&mut running, &mut buf);
        *acc += &running;
    }
}

/// Shared loss / gradient path. The loss is always computed; gradients only
/// when `graphs` is supplied. Keeping one implementation guarantees the
/// breakdown returned by `total_loss` is exactly what `backward`
/// differentiates.
fn epoch_objective(
    cache: &ForwardCache,
    triplets: &[TrainingTriplet],
    params: &ModelParams,
    cfg: &TrainConfig,
    graphs: Option<&DecomposedGraphs>,
) -> Result<(LossBreakdown, Option<GradientSet>)> {
    let num_ratings = params.bilinear.len();
    let num_levels = cache.h_levels.len();
    let dim = params.dim();
    let p_count = triplets.len();
    let num_users = cache.num_users;
    let want_grads = graphs.is_some();
    let max_ce = -PROB_FLOOR.ln();

    let hu = gather_rows(&cache.h, triplets.iter().map(|t| t.user as usize));
    let hv = gather_rows(
        &cache.h,
        triplets.iter().map(|t| num_users + t.pos_item as usize),
    );

    // Pass 1: per-rating projected users A_r = Hu Q_r and all logits.
    let mut a_mats = Vec::with_capacity(num_ratings);
    let mut logits = Array2::zeros((p_count, num_ratings));
    for (r_idx, q) in params.bilinear.iter().enumerate() {
        let a = hu.dot(q);
        for (p, z) in row_dots(&a, &hv).into_iter().enumerate() {
            logits[[p, r_idx]] = z;
        }
        a_mats.push(a);
    }

    // Cross-entropy and its softmax coefficients.
    let mut ce_sum = 0.0;
    let mut coeff = if want_grads {
        Array2::zeros((p_count, num_ratings))
    } else {
        Array2::zeros((0, 0))
    };
    for (p, t) in triplets.iter().enumerate() {
        let true_idx = params.rating_set.binary_search(&t.rating).map_err(|_| {
            Error::InvalidConfig(format!("rating {} not in rating set", t.rating))
        })?;
        let row = logits.row(p);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for &z in row.iter() {
            sum_exp += (z - max).exp();
        }
        let lse = max + sum_exp.ln();
        ce_sum += (lse - row[true_idx]).min(max_ce);
        if want_grads {
            for r_idx in 0..num_ratings {
                coeff[[p, r_idx]] = (row[r_idx] - lse).exp();
            }
            coeff[[p, true_idx]] -= 1.0;
        }
    }

    // Pairwise ranking over triplets that have a negative.
    let bpr_rows: Vec<usize> = triplets
        .iter()
        .enumerate()
        .filter_map(|(p, t)| t.neg_item.map(|_| p))
        .collect();
    let use_bpr = cfg.alpha > 0.0 && !bpr_rows.is_empty();
    let mut bpr_sum = 0.0;
    // d(alpha * bpr_p)/d s_p, indexed by triplet; zero without a negative.
    let mut g_coef = vec![0.0; p_count];
    let mut hk = Array2::zeros((0, 0));
    let mut asum_b = Array2::zeros((0, 0));
    if use_bpr {
        hk = gather_rows(
            &cache.h,
            bpr_rows
                .iter()
                .map(|&p| num_users + triplets[p].neg_item.unwrap() as usize),
        );
        let mut asum = a_mats[0].clone();
        for a in &a_mats[1..] {
            asum += a;
        }
        asum_b = if bpr_rows.len() == p_count {
            asum
        } else {
            gather_rows(&asum, bpr_rows.iter().copied())
        };
        let o_neg = row_dots(&asum_b, &hk);
        for (bi, &p) in bpr_rows.iter().enumerate() {
            let o_pos: f64 = logits.row(p).sum();
            let s = o_pos - o_neg[bi];
            bpr_sum += loss_bpr(o_pos, o_neg[bi]);
            g_coef[p] = cfg.alpha * (sigmoid(s) - 1.0);
        }
    }

    // Interest regularization, with direction vectors kept for the backward
    // pass: dir = delta / sqrt(|delta|^2 + eps) per node and level.
    let mut ir_sum = 0.0;
    let mut ir_dirs: Vec<Array2<f64>> = Vec::new();
    if cfg.lambda > 0.0 {
        for h_t in &cache.h_levels {
            let mut dir = h_t - &cache.h_interest;
            for mut row in dir.outer_iter_mut() {
                let sq: f64 = row.iter().map(|v| v * v).sum();
                let nrm = (sq + cfg.ir_epsilon).sqrt();
                ir_sum += nrm;
                row /= nrm;
            }
            if want_grads {
                ir_dirs.push(dir);
            }
        }
        ir_sum /= num_levels as f64;
    }

    let breakdown = LossBreakdown {
        ce: ce_sum,
        bpr: bpr_sum,
        ir: ir_sum,
        total: ce_sum + cfg.alpha * bpr_sum + cfg.lambda * ir_sum,
    };
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let Some(graphs) = graphs else {
        return Ok((breakdown, None));
    };

    // Decoder gradients. Positive pair (u, v): every rating's logit carries
    // the softmax coefficient plus the shared ranking coefficient g (the
    // ranking score is the plain sum of logits). Negative pair (u, k):
    // coefficient is -g for every rating.
    let mut g_bilinear: Vec<Array2<f64>> = (0..num_ratings)
        .map(|_| Array2::zeros((dim, dim)))
        .collect();
    let mut gu = Array2::zeros((p_count, dim));
    let mut gv = Array2::zeros((p_count, dim));
    let mut c_col = vec![0.0; p_count];
    for r_idx in 0..num_ratings {
        for p in 0..p_count {
            c_col[p] = coeff[[p, r_idx]] + g_coef[p];
        }
        let weighted_hu = scale_rows(&hu, &c_col);
        g_bilinear[r_idx] += &weighted_hu.t().dot(&hv);
        let b = hv.dot(&params.bilinear[r_idx].t());
        add_scaled_rows(&mut gu, &b, &c_col);
        add_scaled_rows(&mut gv, &a_mats[r_idx], &c_col);
    }
    let neg_part = if use_bpr {
        let neg_coef: Vec<f64> = bpr_rows.iter().map(|&p| -g_coef[p]).collect();
        let mut qsum = params.bilinear[0].clone();
        for q in &params.bilinear[1..] {
            qsum += q;
        }
        // d loss / d h_u from the negative pair: (-g) * Qsum h_k; the
        // ranking score is rating-independent, so the whole sum collapses
        // into one product with Qsum.
        let gu_neg = hk.dot(&qsum.t());
        for (bi, &p) in bpr_rows.iter().enumerate() {
            gu.row_mut(p).scaled_add(neg_coef[bi], &gu_neg.row(bi));
        }
        let hu_b = if bpr_rows.len() == p_count {
            hu.clone()
        } else {
            gather_rows(&hu, bpr_rows.iter().copied())
        };
        let m_neg = scale_rows(&hu_b, &neg_coef).t().dot(&hk);
        for g_q in &mut g_bilinear {
            *g_q += &m_neg;
        }
        Some((bpr_rows, scale_rows(&asum_b, &neg_coef)))
    } else {
        None
    };
    finish_gradients(
        cache,
        triplets,
        params,
        cfg,
        graphs,
        breakdown,
        gu,
        gv,
        neg_part,
        g_bilinear,
        ir_dirs,
    )
}

/// Scatters per-triplet gradient rows into the node-level h-gradient and
/// pulls everything back to the base embeddings.
#[allow(clippy::too_many_arguments)]
fn finish_gradients(
    cache: &ForwardCache,
    triplets: &[TrainingTriplet],
    params: &ModelParams,
    cfg: &TrainConfig,
    graphs: &DecomposedGraphs,
    breakdown: LossBreakdown,
    gu: Array2<f64>,
    gv: Array2<f64>,
    neg_part: Option<(Vec<usize>, Array2<f64>)>,
    g_bilinear: Vec<Array2<f64>>,
    ir_dirs: Vec<Array2<f64>>,
) -> Result<(LossBreakdown, Option<GradientSet>)> {
    let num_users = cache.num_users;
    let num_levels = cache.h_levels.len();
    let dim = params.dim();
    let n = params.num_nodes();

    let mut g_h = Array2::zeros((n, dim));
    for (p, t) in triplets.iter().enumerate() {
        g_h.row_mut(t.user as usize).scaled_add(1.0, &gu.row(p));
        g_h.row_mut(num_users + t.pos_item as usize)
            .scaled_add(1.0, &gv.row(p));
    }
    if let Some((bpr_rows, gk)) = &neg_part {
        for (bi, &p) in bpr_rows.iter().enumerate() {
            let neg = triplets[p].neg_item.unwrap() as usize;
            g_h.row_mut(num_users + neg).scaled_add(1.0, &gk.row(bi));
        }
    }

    // h = sum over levels of h_t, so every level sees the full g_h; the IR
    // term adds lambda/|T| * dir per level and pulls the interest graph the
    // opposite way.
    let layer_weight = cache.agg.layer_weight(cache.num_layers + 1);
    let mut g_emb = Array2::zeros((n, dim));
    let lam_t = cfg.lambda / num_levels as f64;
    for (li, level) in graphs.levels.iter().enumerate() {
        if cfg.lambda > 0.0 {
            let mut g_level = g_h.clone();
            g_level.scaled_add(lam_t, &ir_dirs[li]);
            pullback_into(&level.graph, &g_level, cache.num_layers, layer_weight, &mut g_emb);
        } else {
            pullback_into(&level.graph, &g_h, cache.num_layers, layer_weight, &mut g_emb);
        }
    }
    if cfg.lambda > 0.0 {
        let mut g_interest = Array2::zeros((n, dim));
        for dir in &ir_dirs {
            g_interest.scaled_add(-lam_t, dir);
        }
        pullback_into(
            &graphs.interest,
            &g_interest,
            cache.num_layers,
            layer_weight,
            &mut g_emb,
        );
    }

    if !g_emb.iter().all(|v| v.is_finite())
        || !g_bilinear.iter().all(|q| q.iter().all(|v| v.is_finite()))
    {
        return Err(Error::NonFinite("gradients".into()));
    }
    Ok((
        breakdown,
        Some(GradientSet {
            base_embeddings: g_emb,
            bilinear: g_bilinear,
        }),
    ))
}

/// Loss with per-term breakdown for a fixed triplet set.
pub fn total_loss(
    cache: &ForwardCache,
    triplets: &[TrainingTriplet],
    params: &ModelParams,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    Ok(epoch_objective(cache, triplets, params, cfg, None)?.0)
}

/// Exact analytic gradients of the full objective.
pub fn backward(
    cache: &ForwardCache,
    triplets: &[TrainingTriplet],
    params: &ModelParams,
    cfg: &TrainConfig,
    graphs: &DecomposedGraphs,
) -> Result<(LossBreakdown, GradientSet)> {
    let (breakdown, grads) = epoch_objective(cache, triplets, params, cfg, Some(graphs))?;
    Ok((breakdown, grads.expect("gradients requested")))
}

/// Adam accumulators, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_embeddings: Array2<f64>,
    v_embeddings: Array2<f64>,
    m_bilinear: Vec<Array2<f64>>,
    v_bilinear: Vec<Array2<f64>>,
    step: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m_embeddings: Array2::zeros(params.base_embeddings.dim()),
            v_embeddings: Array2::zeros(params.base_embeddings.dim()),
            m_bilinear: params
                .bilinear
                .iter()
                .map(|q| Array2::zeros(q.dim()))
                .collect(),
            v_bilinear: params
                .bilinear
                .iter()
                .map(|q| Array2::zeros(q.dim()))
                .collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

fn adam_update(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    lr: f64,
    bias1: f64,
    bias2: f64,
) {
    let p = param.as_slice_mut().expect("standard layout");
    let g = grad.as_slice().expect("standard layout");
    let m = m.as_slice_mut().expect("standard layout");
    let v = v.as_slice_mut().expect("standard layout");
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// One bias-corrected Adam step (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    learning_rate: f64,
) {
    state.step += 1;
    let bias1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bias2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    adam_update(
        &mut params.base_embeddings,
        &grads.base_embeddings,
        &mut state.m_embeddings,
        &mut state.v_embeddings,
        learning_rate,
        bias1,
        bias2,
    );
    for r_idx in 0..params.bilinear.len() {
        adam_update(
            &mut params.bilinear[r_idx],
            &grads.bilinear[r_idx],
            &mut state.m_bilinear[r_idx],
            &mut state.v_bilinear[r_idx],
            learning_rate,
            bias1,
            bias2,
        );
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ce: f64,
    pub bpr: f64,
    pub ir: f64,
    pub total: f64,
    pub val_rmse: f64,
    /// True when this epoch set a new best validation RMSE.
    pub best: bool,
}

/// Result of a training run. `params` are the best-validation parameters,
/// not the last-epoch ones.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
}

/// Full-batch training loop: resample negatives, forward, backward, Adam,
/// validation RMSE, early stopping on `patience`.
pub fn train(
    split: &SplitDataset,
    graphs: &DecomposedGraphs,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if split.train.rated_pairs().is_empty() {
        return Err(Error::EmptyInput("train set has no rated interactions".into()));
    }
    if split.val.is_empty() {
        return Err(Error::EmptyInput("validation set is empty".into()));
    }

    let n = split.train.num_nodes();
    let mut params = ModelParams::init(n, cfg.dim, &split.train.rating_set, cfg.seed);
    let sampler = NegativeSampler::new(&split.train);
    // Stream 1 keeps sampling independent of the parameter-init draws.
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_rng.set_stream(1);
    let mut adam = AdamState::new(&params);

    let mut cache = forward(graphs, &params, cfg.num_layers, cfg.layer_agg)?;
    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        let triplets =
            sample_with_rng(&split.train, &sampler, cfg.negatives_per_positive, &mut sample_rng);
        let (breakdown, grads) = backward(&cache, &triplets, &params, cfg, graphs)
            .map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { epoch, loss: f64::NAN },
                other => other,
            })?;
        if !breakdown.total.is_finite() {
            return Err(Error::Diverged { epoch, loss: breakdown.total });
        }
        adam_step(&mut params, &grads, &mut adam, cfg.learning_rate);

        cache = forward(graphs, &params, cfg.num_layers, cfg.layer_agg)?;
        let val_rmse = rmse_given_h(&cache.h, &params, split.train.num_users, &split.val)?;
        let improved = val_rmse < best_val;
        if improved {
            best_val = val_rmse;
            best_epoch = epoch;
            best_params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(EpochRecord {
            epoch,
            ce: breakdown.ce,
            bpr: breakdown.bpr,
            ir: breakdown.ir,
            total: breakdown.total,
            val_rmse,
            best: improved,
        });
        if epoch % 25 == 0 || epoch == cfg.epochs {
            log::info!(
                "epoch {epoch}: total {:.2}, val RMSE {val_rmse:.4} (best {best_val:.4} @ {best_epoch})",
                breakdown.total
            );
        }
        if since_best >= cfg.patience {
            log::info!("early stop at epoch {epoch}: no improvement for {} epochs", cfg.patience);
            break;
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_val_rmse: best_val,
    })
}

/// Writes the history as CSV: epoch,ce,bpr,ir,total,val_rmse,best_flag.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,ce,bpr,ir,total,val_rmse,best_flag\n");
    for rec in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            rec.epoch,
            rec.ce,
            rec.bpr,
            rec.ir,
            rec.total,
            rec.val_rmse,
            if rec.best { 1 } else { 0 }
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
