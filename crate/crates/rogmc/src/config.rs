//! Run configuration: one TOML or JSON file covering the data pipeline and
//! training knobs, with CLI overrides applied on top (flag > file >
//! default) and a content hash for artifact manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::RatingFileFormat;
use crate::error::{Error, Result};
use crate::eval::VariantSpec;
use crate::graph::DecompositionMode;
use crate::model::LayerAgg;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // Data pipeline.
    pub dataset_path: PathBuf,
    pub format: RatingFileFormat,
    pub k_core: u32,
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
    /// Fraction of train interactions that keep their rating label; the
    /// rest become unknown-rating interactions at prepare time.
    pub keep_fraction: f64,
    pub mask_seed: u64,
    pub prepared_dir: PathBuf,
    pub out_dir: PathBuf,

    // Experiment selection.
    pub variant: String,
    pub seeds: Vec<u64>,
    pub deterministic: bool,
    /// λ grid for the analyze sweep; empty means no sweep.
    pub sweep_lambdas: Vec<f64>,
    /// α grid for the analyze sweep; empty means no sweep.
    pub sweep_alphas: Vec<f64>,

    // Training.
    pub alpha: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub dim: usize,
    pub num_layers: usize,
    pub decomposition_mode: DecompositionMode,
    pub t_values: Option<Vec<i32>>,
    pub negatives_per_positive: usize,
    pub ir_epsilon: f64,
    pub layer_agg: LayerAgg,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            dataset_path: PathBuf::from("data/ml-100k/u.data"),
            format: RatingFileFormat::Tsv,
            k_core: 10,
            split_ratios: (0.8, 0.1, 0.1),
            split_seed: 7,
            keep_fraction: 1.0,
            mask_seed: 11,
            prepared_dir: PathBuf::from("prepared"),
            out_dir: PathBuf::from("runs"),
            variant: "full".to_string(),
            seeds: vec![13, 17, 19],
            deterministic: true,
            sweep_lambdas: Vec::new(),
            sweep_alphas: Vec::new(),
            alpha: train.alpha,
            lambda: train.lambda,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            patience: train.patience,
            dim: train.dim,
            num_layers: train.num_layers,
            decomposition_mode: train.decomposition_mode,
            t_values: train.t_values,
            negatives_per_positive: train.negatives_per_positive,
            ir_epsilon: train.ir_epsilon,
            layer_agg: train.layer_agg,
        }
    }
}

/// Overrides harvested from CLI flags; `None` leaves the file/default value.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub frac: Option<f64>,
    pub variant: Option<String>,
    pub out: Option<PathBuf>,
    pub deterministic: bool,
}

impl RunConfig {
    /// Loads a config file, choosing the parser by extension (`.json` is
    /// JSON, anything else is TOML).
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
        }
    }

    /// CLI flags win over file values. A single `--seed` replaces the
    /// whole seed list so every downstream run uses exactly that seed.
    pub fn apply_overrides(&mut self, cli: &CliOverrides) {
        if let Some(seed) = cli.seed {
            self.seeds = vec![seed];
        }
        if let Some(frac) = cli.frac {
            self.keep_fraction = frac;
        }
        if let Some(variant) = &cli.variant {
            self.variant = variant.clone();
        }
        if let Some(out) = &cli.out {
            self.out_dir = out.clone();
        }
        if cli.deterministic {
            self.deterministic = true;
        }
    }

    /// Training knobs for a given seed; variant switches are applied
    /// separately via `VariantSpec::apply`.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            patience: self.patience,
            seed,
            num_layers: self.num_layers,
            dim: self.dim,
            decomposition_mode: self.decomposition_mode,
            t_values: self.t_values.clone(),
            negatives_per_positive: self.negatives_per_positive,
            ir_epsilon: self.ir_epsilon,
            layer_agg: self.layer_agg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_core == 0 {
            return Err(Error::InvalidConfig("k_core must be at least 1".into()));
        }
        let (a, b, c) = self.split_ratios;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split_ratios must be positive and sum to 1, got ({a}, {b}, {c})"
            )));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "keep_fraction must be in (0, 1], got {}",
                self.keep_fraction
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        VariantSpec::by_name(&self.variant)?;
        // Training-field ranges are owned by TrainConfig.
        self.train_config(self.seeds[0]).validate()
    }

    /// Short content hash over the canonical JSON form; identical configs
    /// hash identically regardless of source format.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "alpha = 0.25\nseeds = [1, 2]\nvariant = \"no-ir\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.variant, "no-ir");
        // Unspecified fields keep their documented defaults.
        assert_eq!(cfg.dim, 64);
        assert_eq!(cfg.k_core, 10);
    }

    #[test]
    fn json_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"lambda": 0.5, "decomposition_mode": "exact"}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.decomposition_mode, DecompositionMode::Exact);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "alhpa = 0.25\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn cli_overrides_beat_file_values() {
        let mut cfg = RunConfig {
            seeds: vec![1, 2, 3],
            keep_fraction: 1.0,
            variant: "full".into(),
            ..RunConfig::default()
        };
        cfg.apply_overrides(&CliOverrides {
            seed: Some(99),
            frac: Some(0.25),
            variant: Some("exact".into()),
            out: Some(PathBuf::from("elsewhere")),
            deterministic: true,
        });
        assert_eq!(cfg.seeds, vec![99]);
        assert_eq!(cfg.keep_fraction, 0.25);
        assert_eq!(cfg.variant, "exact");
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert!(cfg.deterministic);
    }

    #[test]
    fn empty_overrides_change_nothing() {
        let mut cfg = RunConfig::default();
        let before = cfg.clone();
        cfg.apply_overrides(&CliOverrides::default());
        assert_eq!(cfg, before);
    }

    #[test]
    fn validation_catches_bad_fields() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut cfg = RunConfig::default();
            f(&mut cfg);
            cfg.validate().unwrap_err()
        };
        bad(|c| c.k_core = 0);
        bad(|c| c.split_ratios = (0.5, 0.5, 0.5));
        bad(|c| c.keep_fraction = 0.0);
        bad(|c| c.keep_fraction = 1.5);
        bad(|c| c.seeds = vec![]);
        bad(|c| c.variant = "nonsense".into());
        bad(|c| c.learning_rate = -1.0);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let cfg = RunConfig::default();
        let h1 = cfg.hash();
        assert_eq!(h1.len(), 12);
        assert_eq!(h1, RunConfig::default().hash());
        let changed = RunConfig { alpha: 0.75, ..RunConfig::default() };
        assert_ne!(h1, changed.hash());
    }

    #[test]
    fn train_config_projection() {
        let cfg = RunConfig { alpha: 0.125, epochs: 10, ..RunConfig::default() };
        let tc = cfg.train_config(5);
        assert_eq!(tc.seed, 5);
        assert_eq!(tc.alpha, 0.125);
        assert_eq!(tc.epochs, 10);
        tc.validate().unwrap();
    }
}
