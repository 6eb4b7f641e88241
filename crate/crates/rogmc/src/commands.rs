//! Command implementations behind the CLI: prepare, train, ablate,
//! analyze. Each writes its artifacts under a run directory named by
//! timestamp plus config hash and leaves a manifest tying the artifacts to
//! the exact configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::config::RunConfig;
use crate::data::{
    apply_k_core, apply_rating_frac, load_ratings, read_prepared, reindex, split_per_user,
    write_prepared, MaskingSpec, PrepareMetadata, SplitDataset,
};
use crate::error::{Error, Result};
use crate::eval::{
    representation_distance_matrix, result_rows, rmse, run_single, run_variant,
    write_distance_csv, write_results_csv, ResultRow, VariantSpec,
};
use crate::graph::build_decomposition;
use crate::train::write_history;

/// Civil date from days since the epoch (Gregorian, proleptic).
fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let days = days + 719_468;
    let era = days.div_euclid(146_097);
    let doe = days.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if month <= 2 { year + 1 } else { year }, month, day)
}

/// `YYYYMMDDTHHMMSSZ` for a UTC timestamp in whole seconds.
fn utc_compact(secs_since_epoch: u64) -> String {
    let secs = secs_since_epoch as i64;
    let (year, month, day) = civil_from_days(secs.div_euclid(86_400));
    let tod = secs.rem_euclid(86_400);
    format!(
        "{year:04}{month:02}{day:02}T{:02}{:02}{:02}Z",
        tod / 3600,
        (tod % 3600) / 60,
        tod % 60
    )
}

/// Creates `<out_dir>/<timestamp>-<command>-<config hash>` and returns it.
/// A numeric suffix resolves collisions when the same command runs twice
/// within one second.
fn make_run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after epoch")
        .as_secs();
    let base = format!("{}-{command}-{}", utc_compact(now), cfg.hash());
    let mut name = base.clone();
    let mut attempt = 1u32;
    loop {
        let dir = cfg.out_dir.join(&name);
        match fs::create_dir_all(cfg.out_dir.as_path())
            .and_then(|_| fs::create_dir(&dir))
        {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists && attempt < 1000 => {
                attempt += 1;
                name = format!("{base}-{attempt}");
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Manifest written next to every command's artifacts. Deliberately free
/// of wall-clock fields so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            status: "ok".to_string(),
            variant: None,
            seed: None,
            best_epoch: None,
            epochs_run: None,
            val_rmse: None,
            test_rmse: None,
            failures: Vec::new(),
            artifacts: Vec::new(),
        }
    }
}

/// Raw file -> k-core -> reindex -> per-user split -> rating-frac masking
/// -> prepared TSVs, id maps, and metadata under `prepared_dir`.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepareMetadata> {
    cfg.validate()?;
    let raw = load_ratings(&cfg.dataset_path, cfg.format)?;
    let raw_users = raw.iter().map(|r| r.user_raw_id).collect::<std::collections::HashSet<_>>().len();
    let raw_items = raw.iter().map(|r| r.item_raw_id).collect::<std::collections::HashSet<_>>().len();
    let raw_interactions = raw.len();
    println!(
        "loaded {} interactions / {} users / {} items from {}",
        raw_interactions,
        raw_users,
        raw_items,
        cfg.dataset_path.display()
    );

    let filtered = apply_k_core(raw, cfg.k_core as usize)?;
    let (dataset, id_maps) = reindex(&filtered)?;
    println!(
        "{}-core kept {} interactions / {} users / {} items, rating set {:?}",
        cfg.k_core,
        dataset.interactions.len(),
        dataset.num_users,
        dataset.num_items,
        dataset.rating_set
    );

    let split = split_per_user(&dataset, cfg.split_ratios, cfg.split_seed)?;
    let masked_train = apply_rating_frac(
        &split.train,
        &MaskingSpec { keep_fraction: cfg.keep_fraction, seed: cfg.mask_seed },
    )?;
    let split = SplitDataset { train: masked_train, ..split };

    let meta = PrepareMetadata {
        raw_users,
        raw_items,
        raw_interactions,
        filtered_users: dataset.num_users,
        filtered_items: dataset.num_items,
        filtered_interactions: dataset.interactions.len(),
        k_core: cfg.k_core as usize,
        num_users: dataset.num_users,
        num_items: dataset.num_items,
        rating_set: dataset.rating_set.clone(),
        split_ratios: cfg.split_ratios,
        split_seed: cfg.split_seed,
        keep_fraction: cfg.keep_fraction,
        mask_seed: cfg.mask_seed,
        train_count: split.train.interactions.len(),
        train_unknown_count: split.train.unknown_count(),
        val_count: split.val.len(),
        test_count: split.test.len(),
    };
    write_prepared(&cfg.prepared_dir, &split, &meta)?;

    let id_lines = |tokens: &[i64]| {
        tokens
            .iter()
            .enumerate()
            .map(|(idx, tok)| format!("{idx}\t{tok}"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    };
    let user_map = cfg.prepared_dir.join("user_ids.tsv");
    fs::write(&user_map, id_lines(&id_maps.user_tokens)).map_err(|e| Error::io(&user_map, e))?;
    let item_map = cfg.prepared_dir.join("item_ids.tsv");
    fs::write(&item_map, id_lines(&id_maps.item_tokens)).map_err(|e| Error::io(&item_map, e))?;

    println!(
        "prepared split: train {} ({} unlabeled), val {}, test {} -> {}",
        meta.train_count,
        meta.train_unknown_count,
        meta.val_count,
        meta.test_count,
        cfg.prepared_dir.display()
    );
    Ok(meta)
}

/// Trains the configured variant on the prepared dataset with `seeds[0]`;
/// writes checkpoint, history CSV, and a manifest into a fresh run dir.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let (split, _meta) = read_prepared(&cfg.prepared_dir)?;
    let spec = VariantSpec::by_name(&cfg.variant)?;
    let seed = cfg.seeds[0];
    let run_dir = make_run_dir(cfg, "train")?;

    let mut manifest = RunManifest::new("train", cfg);
    manifest.variant = Some(spec.name.clone());
    manifest.seed = Some(seed);

    match run_single(&split, &spec, &cfg.train_config(seed), seed) {
        Ok((run, outcome, graphs)) => {
            let ckpt_meta = CheckpointMeta {
                num_nodes: outcome.params.num_nodes(),
                dim: outcome.params.dim(),
                num_ratings: outcome.params.bilinear.len(),
                rating_set: outcome.params.rating_set.clone(),
                t_values: graphs.t_values.clone(),
                mode: graphs.mode,
                seed,
            };
            let ckpt_path = run_dir.join("model.ckpt");
            save_checkpoint(&ckpt_path, &outcome.params, &ckpt_meta)?;
            let history_path = run_dir.join("history.csv");
            write_history(&history_path, &outcome.history)?;

            manifest.best_epoch = Some(run.best_epoch);
            manifest.epochs_run = Some(run.epochs_run);
            manifest.val_rmse = Some(run.val_rmse);
            manifest.test_rmse = Some(run.test_rmse);
            manifest.artifacts = vec!["model.ckpt".into(), "history.csv".into()];
            write_json_pretty(&run_dir.join("manifest.json"), &manifest)?;
            println!(
                "trained {} (seed {seed}): best epoch {}, val RMSE {:.6}, test RMSE {:.6} -> {}",
                spec.name,
                run.best_epoch,
                run.val_rmse,
                run.test_rmse,
                run_dir.display()
            );
            Ok(run_dir)
        }
        Err(err) => {
            manifest.status = format!("failed: {err}");
            write_json_pretty(&run_dir.join("manifest.json"), &manifest)?;
            Err(err)
        }
    }
}

/// Runs the whole ablation grid across the configured seeds on the
/// prepared dataset. A variant failure is recorded in the manifest and the
/// remaining variants still run.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let (split, meta) = read_prepared(&cfg.prepared_dir)?;
    let run_dir = make_run_dir(cfg, "ablate")?;
    let mut manifest = RunManifest::new("ablate", cfg);
    let mut rows: Vec<ResultRow> = Vec::new();

    for spec in VariantSpec::ablation_set() {
        match run_variant(&split, &spec, &cfg.train_config(cfg.seeds[0]), &cfg.seeds) {
            Ok(res) => {
                println!(
                    "{}: mean test RMSE {:.6} (std {:.6}) over {} seeds",
                    res.variant,
                    res.mean_test_rmse,
                    res.std_test_rmse,
                    res.runs.len()
                );
                rows.extend(result_rows(meta.keep_fraction, &res));
            }
            Err(err) => {
                println!("{}: FAILED ({err})", spec.name);
                manifest.failures.push(format!("{}: {err}", spec.name));
            }
        }
    }

    let table_path = run_dir.join("ablation.csv");
    write_results_csv(&table_path, &rows)?;
    if !manifest.failures.is_empty() {
        manifest.status = format!("{} variant(s) failed", manifest.failures.len());
    }
    manifest.artifacts = vec!["ablation.csv".into()];
    write_json_pretty(&run_dir.join("manifest.json"), &manifest)?;
    println!("ablation table -> {}", table_path.display());
    if manifest.failures.is_empty() {
        Ok(run_dir)
    } else {
        Err(Error::InvalidConfig(format!(
            "{} ablation variant(s) failed; see manifest in {}",
            manifest.failures.len(),
            run_dir.display()
        )))
    }
}

/// Loads a checkpoint, rebuilds the graph stack it declares over the
/// prepared dataset, and writes the level-distance matrix; optionally
/// retrains over a λ x α grid for the sensitivity table.
pub fn cmd_analyze(checkpoint_path: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let (params, ckpt_meta) = crate::checkpoint::load_checkpoint(checkpoint_path)?;
    let (split, _meta) = read_prepared(&cfg.prepared_dir)?;

    if split.train.rating_set != ckpt_meta.rating_set {
        return Err(Error::Checkpoint {
            field: "rating_set".into(),
            msg: format!(
                "checkpoint has {:?} but prepared data has {:?}",
                ckpt_meta.rating_set, split.train.rating_set
            ),
        });
    }
    if split.train.num_nodes() != ckpt_meta.num_nodes {
        return Err(Error::Checkpoint {
            field: "num_nodes".into(),
            msg: format!(
                "checkpoint has {} but prepared data has {}",
                ckpt_meta.num_nodes,
                split.train.num_nodes()
            ),
        });
    }

    let graphs = build_decomposition(&split.train, Some(&ckpt_meta.t_values), ckpt_meta.mode)?;
    let run_dir = make_run_dir(cfg, "analyze")?;
    let mut manifest = RunManifest::new("analyze", cfg);
    manifest.seed = Some(ckpt_meta.seed);

    let report = representation_distance_matrix(&params, &graphs, cfg.num_layers, cfg.layer_agg)?;
    let dist_path = run_dir.join("distance_matrix.csv");
    write_distance_csv(&dist_path, &report)?;
    manifest.artifacts.push("distance_matrix.csv".into());
    println!("distance matrix over levels {:?} -> {}", report.t_values, dist_path.display());

    if !cfg.sweep_lambdas.is_empty() && !cfg.sweep_alphas.is_empty() {
        let mut sweep = String::from("lambda,alpha,val_rmse,test_rmse\n");
        for &lambda in &cfg.sweep_lambdas {
            for &alpha in &cfg.sweep_alphas {
                let mut train_cfg = cfg.train_config(cfg.seeds[0]);
                train_cfg.lambda = lambda;
                train_cfg.alpha = alpha;
                let spec_graphs = build_decomposition(
                    &split.train,
                    train_cfg.t_values.as_deref(),
                    train_cfg.decomposition_mode,
                )?;
                let outcome = crate::train::train(&split, &spec_graphs, &train_cfg)?;
                let test = rmse(
                    &outcome.params,
                    &spec_graphs,
                    &split.test,
                    train_cfg.num_layers,
                    train_cfg.layer_agg,
                )?;
                println!(
                    "sweep lambda={lambda} alpha={alpha}: val {:.6}, test {test:.6}",
                    outcome.best_val_rmse
                );
                sweep.push_str(&format!(
                    "{lambda},{alpha},{},{test}\n",
                    outcome.best_val_rmse
                ));
            }
        }
        let sweep_path = run_dir.join("sweep.csv");
        fs::write(&sweep_path, sweep).map_err(|e| Error::io(&sweep_path, e))?;
        manifest.artifacts.push("sweep.csv".into());
        println!("hyperparameter sweep -> {}", sweep_path.display());
    }

    write_json_pretty(&run_dir.join("manifest.json"), &manifest)?;
    Ok(run_dir)
}
