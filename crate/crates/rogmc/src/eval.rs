//! Evaluation: RMSE, the averaged-representation distance analysis, the
//! ablation variant runner, and the rating-fraction sweep.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::{apply_rating_frac, MaskingSpec, SplitDataset};
use crate::error::{Error, Result};
use crate::graph::{build_decomposition, DecomposedGraphs, DecompositionMode};
use crate::model::{expected_ratings, forward, score_pairs, LayerAgg, ModelParams};
use crate::train::{train, TrainConfig, TrainOutcome};

pub(crate) fn rmse_from_predictions(preds: &[f64], targets: &[f64]) -> f64 {
    debug_assert_eq!(preds.len(), targets.len());
    let sum_sq: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    (sum_sq / preds.len() as f64).sqrt()
}

/// RMSE of expected-rating predictions over `pairs`, given representations
/// that are already computed.
pub fn rmse_given_h(
    h: &Array2<f64>,
    params: &ModelParams,
    num_users: usize,
    pairs: &[(u32, u32, i32)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("rmse over zero pairs".into()));
    }
    let ui: Vec<(u32, u32)> = pairs.iter().map(|&(u, i, _)| (u, i)).collect();
    let logits = score_pairs(h, params, num_users, &ui);
    let preds = expected_ratings(&logits, &params.rating_set);
    let targets: Vec<f64> = pairs.iter().map(|&(_, _, r)| r as f64).collect();
    Ok(rmse_from_predictions(&preds, &targets))
}

/// RMSE from a fresh forward pass.
pub fn rmse(
    params: &ModelParams,
    graphs: &DecomposedGraphs,
    pairs: &[(u32, u32, i32)],
    num_layers: usize,
    agg: LayerAgg,
) -> Result<f64> {
    let cache = forward(graphs, params, num_layers, agg)?;
    rmse_given_h(&cache.h, params, graphs.interest.num_users, pairs)
}

/// Pairwise L2 distances between the per-level averaged user
/// representations AVG over users of h_t[i].
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub t_values: Vec<i32>,
    /// |T| x |T|, symmetric, zero diagonal.
    pub matrix: Array2<f64>,
}

impl DistanceReport {
    /// Distance between the levels for rating values `a` and `b`.
    pub fn between(&self, a: i32, b: i32) -> Option<f64> {
        let ia = self.t_values.iter().position(|&t| t == a)?;
        let ib = self.t_values.iter().position(|&t| t == b)?;
        Some(self.matrix[[ia, ib]])
    }
}

/// Distance matrix from already-aggregated level representations. Only
/// user rows enter the averages; item rows are excluded.
pub fn distance_matrix_from_levels(
    h_levels: &[Array2<f64>],
    t_values: &[i32],
    num_users: usize,
) -> DistanceReport {
    let means: Vec<Array1<f64>> = h_levels
        .iter()
        .map(|h_t| {
            let mut mean = Array1::zeros(h_t.ncols());
            for row in h_t.rows().into_iter().take(num_users) {
                mean += &row;
            }
            mean / num_users as f64
        })
        .collect();
    let k = means.len();
    let mut matrix = Array2::zeros((k, k));
    for a in 0..k {
        for b in (a + 1)..k {
            let diff = &means[a] - &means[b];
            let dist = diff.dot(&diff).sqrt();
            matrix[[a, b]] = dist;
            matrix[[b, a]] = dist;
        }
    }
    DistanceReport {
        t_values: t_values.to_vec(),
        matrix,
    }
}

/// Runs a forward pass and reports the level-to-level distance matrix.
pub fn representation_distance_matrix(
    params: &ModelParams,
    graphs: &DecomposedGraphs,
    num_layers: usize,
    agg: LayerAgg,
) -> Result<DistanceReport> {
    let cache = forward(graphs, params, num_layers, agg)?;
    Ok(distance_matrix_from_levels(
        &cache.h_levels,
        &graphs.t_values,
        graphs.interest.num_users,
    ))
}

/// Writes the distance matrix as CSV with rating-value headers.
pub fn write_distance_csv(path: &Path, report: &DistanceReport) -> Result<()> {
    let mut out = String::from("t");
    for t in &report.t_values {
        out.push_str(&format!(",{t}"));
    }
    out.push('\n');
    for (row_idx, t) in report.t_values.iter().enumerate() {
        out.push_str(&t.to_string());
        for col_idx in 0..report.t_values.len() {
            out.push_str(&format!(",{}", report.matrix[[row_idx, col_idx]]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One ablation configuration: a decomposition mode plus switches for the
/// interest-regularization and ranking terms. `None` mode uses a single
/// graph equal to the interest graph (the no-decomposition variant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSpec {
    pub name: String,
    pub decomposition_mode: DecompositionMode,
    pub use_ir: bool,
    pub use_bpr: bool,
}

impl VariantSpec {
    fn new(name: &str, mode: DecompositionMode, use_ir: bool, use_bpr: bool) -> Self {
        VariantSpec {
            name: name.to_string(),
            decomposition_mode: mode,
            use_ir,
            use_bpr,
        }
    }

    pub fn by_name(name: &str) -> Result<VariantSpec> {
        use DecompositionMode::*;
        let spec = match name {
            "full" => Self::new(name, Cumulative, true, true),
            "no-ir" => Self::new(name, Cumulative, false, true),
            "no-cp" => Self::new(name, None, true, true),
            "no-cp-no-ir" => Self::new(name, None, false, true),
            "exact" => Self::new(name, Exact, true, true),
            "reverse-cumulative" => Self::new(name, ReverseCumulative, true, true),
            "no-bpr" => Self::new(name, Cumulative, true, false),
            // All interactions treated equally, no auxiliary losses.
            "equal-treatment" => Self::new(name, None, false, false),
            other => return Err(Error::UnknownVariant(other.to_string())),
        };
        Ok(spec)
    }

    /// The ablation grid run by the ablate command.
    pub fn ablation_set() -> Vec<VariantSpec> {
        ["full", "no-ir", "no-cp", "no-cp-no-ir", "exact", "reverse-cumulative", "no-bpr"]
            .iter()
            .map(|name| Self::by_name(name).expect("catalog name"))
            .collect()
    }

    /// Specializes a base config to this variant: decomposition mode is
    /// overridden, switched-off terms get zero weight.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.decomposition_mode = self.decomposition_mode;
        if !self.use_ir {
            cfg.lambda = 0.0;
        }
        if !self.use_bpr {
            cfg.alpha = 0.0;
        }
        cfg
    }
}

/// Outcome of one seeded training run inside a variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub val_rmse: f64,
    pub test_rmse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Aggregated variant outcome. Standard deviations are population stds
/// (divide by n), so a single seed reports exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: String,
    pub mean_val_rmse: f64,
    pub mean_test_rmse: f64,
    pub std_test_rmse: f64,
    pub runs: Vec<SeedRun>,
}

fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    values.sum::<f64>() / n as f64
}

fn population_std(values: impl Iterator<Item = f64> + Clone, mean: f64) -> f64 {
    let n = values.clone().count();
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    var.sqrt()
}

/// Trains one variant once and reports its test RMSE at the best-validation
/// parameters.
pub fn run_single(
    split: &SplitDataset,
    spec: &VariantSpec,
    base_cfg: &TrainConfig,
    seed: u64,
) -> Result<(SeedRun, TrainOutcome, DecomposedGraphs)> {
    let mut cfg = spec.apply(base_cfg);
    cfg.seed = seed;
    let graphs = build_decomposition(
        &split.train,
        cfg.t_values.as_deref(),
        cfg.decomposition_mode,
    )?;
    let outcome = train(split, &graphs, &cfg)?;
    let test_rmse = rmse(
        &outcome.params,
        &graphs,
        &split.test,
        cfg.num_layers,
        cfg.layer_agg,
    )?;
    Ok((
        SeedRun {
            seed,
            val_rmse: outcome.best_val_rmse,
            test_rmse,
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.history.len(),
        },
        outcome,
        graphs,
    ))
}

/// Trains a variant across seeds and aggregates test RMSE mean and std.
pub fn run_variant(
    split: &SplitDataset,
    spec: &VariantSpec,
    base_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<VariantResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("run_variant needs at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (run, _, _) = run_single(split, spec, base_cfg, seed)?;
        runs.push(run);
    }
    let mean_test = mean(runs.iter().map(|r| r.test_rmse));
    Ok(VariantResult {
        variant: spec.name.clone(),
        mean_val_rmse: mean(runs.iter().map(|r| r.val_rmse)),
        mean_test_rmse: mean_test,
        std_test_rmse: population_std(runs.iter().map(|r| r.test_rmse), mean_test),
        runs,
    })
}

/// Applies rating-fraction masking per fraction, rebuilds graphs, and runs
/// every requested variant. The input split must be unmasked.
pub fn rating_frac_sweep(
    split: &SplitDataset,
    fractions: &[f64],
    variants: &[VariantSpec],
    base_cfg: &TrainConfig,
    seeds: &[u64],
    mask_seed: u64,
) -> Result<Vec<(f64, VariantResult)>> {
    let mut out = Vec::new();
    for &fraction in fractions {
        let masked = apply_rating_frac(
            &split.train,
            &MaskingSpec { keep_fraction: fraction, seed: mask_seed },
        )?;
        let masked_split = SplitDataset {
            train: masked,
            val: split.val.clone(),
            test: split.test.clone(),
        };
        for spec in variants {
            out.push((fraction, run_variant(&masked_split, spec, base_cfg, seeds)?));
        }
    }
    Ok(out)
}

/// One row of an ablation/sweep table. `seed` holds the seed number for
/// detail rows and the literal "mean" for aggregate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variant: String,
    pub fraction: f64,
    pub seed: String,
    pub val_rmse: f64,
    pub test_rmse: f64,
}

/// Expands a variant result into detail rows plus one aggregate row.
pub fn result_rows(fraction: f64, res: &VariantResult) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = res
        .runs
        .iter()
        .map(|run| ResultRow {
            variant: res.variant.clone(),
            fraction,
            seed: run.seed.to_string(),
            val_rmse: run.val_rmse,
            test_rmse: run.test_rmse,
        })
        .collect();
    rows.push(ResultRow {
        variant: res.variant.clone(),
        fraction,
        seed: "mean".to_string(),
        val_rmse: res.mean_val_rmse,
        test_rmse: res.mean_test_rmse,
    });
    rows
}

/// Writes result rows as CSV: variant,fraction,seed,val_rmse,test_rmse.
pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = String::from("variant,fraction,seed,val_rmse,test_rmse\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.variant, row.fraction, row.seed, row.val_rmse, row.test_rmse
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
