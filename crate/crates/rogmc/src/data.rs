//! Dataset ingestion: raw rating files, k-core filtering, contiguous
//! reindexing, per-user splits, and rating-fraction masking.
//!
//! Labels are `Option<i32>`: `Some(r)` is a known rating, `None` is the
//! unknown rating U (an observed interaction without a rating value). The
//! on-disk canonical format writes U as the literal 0; rating values in real
//! datasets start at 1, so 0 is reserved.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a raw rating file. User/item ids are opaque tokens from the
/// source file; nothing is assumed about their range or density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawInteraction {
    pub user_raw_id: i64,
    pub item_raw_id: i64,
    pub rating: i32,
    pub timestamp: i64,
}

/// A reindexed interaction. `label` is `None` for the unknown rating U.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub label: Option<i32>,
}

/// Reindexed interaction set with contiguous ids.
///
/// Invariants: indices in range, no duplicate (user, item) pair,
/// `rating_set` strictly increasing and covering every known label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub num_users: usize,
    pub num_items: usize,
    pub rating_set: Vec<i32>,
    pub interactions: Vec<Interaction>,
}

impl Dataset {
    /// Total node count: users then items in one index space.
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Position of a rating value within `rating_set`.
    pub fn rating_index(&self, rating: i32) -> Option<usize> {
        self.rating_set.binary_search(&rating).ok()
    }

    /// Checks every structural invariant; used after deserialization and in
    /// tests. Cost is O(|interactions|).
    pub fn validate(&self) -> Result<()> {
        if !self.rating_set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "rating_set must be strictly increasing".into(),
            ));
        }
        if self.rating_set.iter().any(|&r| r < 1) {
            return Err(Error::InvalidConfig(
                "rating values must be >= 1 (0 is reserved for the unknown label)".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(self.interactions.len());
        for it in &self.interactions {
            if (it.user as usize) >= self.num_users || (it.item as usize) >= self.num_items {
                return Err(Error::DimensionMismatch(format!(
                    "interaction ({}, {}) outside {} users x {} items",
                    it.user, it.item, self.num_users, self.num_items
                )));
            }
            if let Some(r) = it.label {
                if self.rating_index(r).is_none() {
                    return Err(Error::InvalidConfig(format!(
                        "label {r} not in rating_set {:?}",
                        self.rating_set
                    )));
                }
            }
            if !seen.insert((it.user, it.item)) {
                return Err(Error::DuplicatePair {
                    user: it.user as i64,
                    item: it.item as i64,
                });
            }
        }
        Ok(())
    }

    /// Interactions with a known rating, as (user, item, rating) triples.
    pub fn rated_pairs(&self) -> Vec<(u32, u32, i32)> {
        self.interactions
            .iter()
            .filter_map(|it| it.label.map(|r| (it.user, it.item, r)))
            .collect()
    }

    /// Count of U-labeled interactions.
    pub fn unknown_count(&self) -> usize {
        self.interactions.iter().filter(|it| it.label.is_none()).count()
    }
}

/// Per-user train/validation/test partition. Validation and test entries
/// always carry a known rating; unknown labels can only appear in train
/// (introduced later by masking).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub val: Vec<(u32, u32, i32)>,
    pub test: Vec<(u32, u32, i32)>,
}

/// Rating-frac masking: keep labels on a `keep_fraction` share of training
/// interactions, relabel the rest as U.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingSpec {
    pub keep_fraction: f64,
    pub seed: u64,
}

/// Original id tokens by new index, kept so prepared artifacts can be traced
/// back to the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMaps {
    pub user_tokens: Vec<i64>,
    pub item_tokens: Vec<i64>,
}

/// Raw rating file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingFileFormat {
    /// user<TAB>item<TAB>rating<TAB>timestamp (ML-100K u.data)
    Tsv,
    /// user::item::rating::timestamp (ML-1M ratings.dat)
    DoubleColon,
}

impl RatingFileFormat {
    fn split_line(self, line: &str) -> Vec<&str> {
        match self {
            RatingFileFormat::Tsv => line.split('\t').collect(),
            RatingFileFormat::DoubleColon => line.split("::").collect(),
        }
    }
}

impl FromStr for RatingFileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(RatingFileFormat::Tsv),
            "double_colon" => Ok(RatingFileFormat::DoubleColon),
            other => Err(Error::InvalidConfig(format!(
                "unknown rating file format '{other}' (expected tsv or double_colon)"
            ))),
        }
    }
}

impl fmt::Display for RatingFileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatingFileFormat::Tsv => write!(f, "tsv"),
            RatingFileFormat::DoubleColon => write!(f, "double_colon"),
        }
    }
}

/// Parses a raw rating file, one interaction per line, order preserved.
pub fn load_ratings(path: &Path, format: RatingFileFormat) -> Result<Vec<RawInteraction>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        let fields = format.split_line(line);
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let parse_i64 = |s: &str, what: &str| -> Result<i64> {
            s.trim()
                .parse::<i64>()
                .map_err(|_| Error::parse(path, line_no, format!("invalid {what} '{s}'")))
        };
        let rating = fields[2].trim().parse::<i32>().map_err(|_| {
            Error::parse(path, line_no, format!("invalid rating '{}'", fields[2]))
        })?;
        out.push(RawInteraction {
            user_raw_id: parse_i64(fields[0], "user id")?,
            item_raw_id: parse_i64(fields[1], "item id")?,
            rating,
            timestamp: parse_i64(fields[3], "timestamp")?,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no data lines", path.display())));
    }
    Ok(out)
}

/// Iteratively removes users and items with fewer than `k` interactions
/// until a fixed point. Every survivor has degree >= k in the output.
pub fn apply_k_core(interactions: Vec<RawInteraction>, k: usize) -> Result<Vec<RawInteraction>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k-core requires k >= 1".into()));
    }
    let mut current = interactions;
    loop {
        let mut user_deg: HashMap<i64, usize> = HashMap::new();
        let mut item_deg: HashMap<i64, usize> = HashMap::new();
        for it in &current {
            *user_deg.entry(it.user_raw_id).or_insert(0) += 1;
            *item_deg.entry(it.item_raw_id).or_insert(0) += 1;
        }
        let before = current.len();
        current.retain(|it| user_deg[&it.user_raw_id] >= k && item_deg[&it.item_raw_id] >= k);
        if current.is_empty() {
            return Err(Error::KCoreEmpty { k });
        }
        if current.len() == before {
            return Ok(current);
        }
    }
}

/// Maps raw tokens to contiguous 0-based indices in first-appearance order
/// and collects the sorted distinct rating set.
pub fn reindex(interactions: &[RawInteraction]) -> Result<(Dataset, IdMaps)> {
    if interactions.is_empty() {
        return Err(Error::EmptyInput("reindex received no interactions".into()));
    }
    let mut user_idx: HashMap<i64, u32> = HashMap::new();
    let mut item_idx: HashMap<i64, u32> = HashMap::new();
    let mut user_tokens = Vec::new();
    let mut item_tokens = Vec::new();
    let mut seen_pairs = HashSet::with_capacity(interactions.len());
    let mut ratings = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(interactions.len());

    for it in interactions {
        if it.rating < 1 {
            return Err(Error::InvalidConfig(format!(
                "rating {} out of range; rating values must be >= 1",
                it.rating
            )));
        }
        let u = *user_idx.entry(it.user_raw_id).or_insert_with(|| {
            user_tokens.push(it.user_raw_id);
            (user_tokens.len() - 1) as u32
        });
        let v = *item_idx.entry(it.item_raw_id).or_insert_with(|| {
            item_tokens.push(it.item_raw_id);
            (item_tokens.len() - 1) as u32
        });
        if !seen_pairs.insert((u, v)) {
            return Err(Error::DuplicatePair {
                user: it.user_raw_id,
                item: it.item_raw_id,
            });
        }
        ratings.insert(it.rating);
        out.push(Interaction {
            user: u,
            item: v,
            label: Some(it.rating),
        });
    }

    let dataset = Dataset {
        num_users: user_tokens.len(),
        num_items: item_tokens.len(),
        rating_set: ratings.into_iter().collect(),
        interactions: out,
    };
    Ok((dataset, IdMaps { user_tokens, item_tokens }))
}

/// Splits each user's interactions into train/val/test. Counts per user:
/// floor(n * ratio) for val and test with a minimum of 1 each, remainder to
/// train. Deterministic given the seed.
pub fn split_per_user(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitDataset> {
    let (r_train, r_val, r_test) = ratios;
    let sum = r_train + r_val + r_test;
    if (sum - 1.0).abs() > 1e-9 || r_train <= 0.0 || r_val < 0.0 || r_test < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    for it in &dataset.interactions {
        if it.label.is_none() {
            return Err(Error::InvalidConfig(
                "split_per_user expects a fully labeled dataset (no U)".into(),
            ));
        }
    }

    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_users];
    for (idx, it) in dataset.interactions.iter().enumerate() {
        per_user[it.user as usize].push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();

    for (user, indices) in per_user.iter().enumerate() {
        let n = indices.len();
        if n < 3 {
            return Err(Error::UserTooSmall {
                user: user as u32,
                count: n,
            });
        }
        let n_val = (n as f64 * r_val).floor().max(1.0) as usize;
        let n_test = (n as f64 * r_test).floor().max(1.0) as usize;
        if n_val + n_test >= n {
            return Err(Error::InvalidConfig(format!(
                "ratios {ratios:?} leave no training interactions for user {user} (n = {n})"
            )));
        }
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        let (val_part, rest) = shuffled.split_at(n_val);
        let (test_part, train_part) = rest.split_at(n_test);

        // Restore dataset order within each part so outputs are tidy; the
        // random content of each part is what the shuffle decided.
        let mut val_part = val_part.to_vec();
        let mut test_part = test_part.to_vec();
        let mut train_part = train_part.to_vec();
        val_part.sort_unstable();
        test_part.sort_unstable();
        train_part.sort_unstable();

        for &i in &val_part {
            let it = dataset.interactions[i];
            val.push((it.user, it.item, it.label.unwrap()));
        }
        for &i in &test_part {
            let it = dataset.interactions[i];
            test.push((it.user, it.item, it.label.unwrap()));
        }
        train_idx.extend(train_part);
    }

    train_idx.sort_unstable();
    let train = Dataset {
        num_users: dataset.num_users,
        num_items: dataset.num_items,
        rating_set: dataset.rating_set.clone(),
        interactions: train_idx
            .into_iter()
            .map(|i| dataset.interactions[i])
            .collect(),
    };
    Ok(SplitDataset { train, val, test })
}

/// Keeps the rating label on exactly round(keep_fraction * n) training
/// interactions chosen uniformly under the seed; the rest become U. Pairs
/// and their order are unchanged.
pub fn apply_rating_frac(train: &Dataset, spec: &MaskingSpec) -> Result<Dataset> {
    if !(spec.keep_fraction > 0.0 && spec.keep_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "keep_fraction {} outside (0, 1]",
            spec.keep_fraction
        )));
    }
    if train.interactions.iter().any(|it| it.label.is_none()) {
        return Err(Error::InvalidConfig(
            "apply_rating_frac expects a train set without U labels".into(),
        ));
    }
    let n = train.interactions.len();
    let keep = (spec.keep_fraction * n as f64).round() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let kept: HashSet<usize> = order.into_iter().take(keep).collect();

    let interactions = train
        .interactions
        .iter()
        .enumerate()
        .map(|(i, it)| Interaction {
            user: it.user,
            item: it.item,
            label: if kept.contains(&i) { it.label } else { None },
        })
        .collect();

    Ok(Dataset {
        num_users: train.num_users,
        num_items: train.num_items,
        rating_set: train.rating_set.clone(),
        interactions,
    })
}

/// Statistics and provenance recorded next to the prepared partition files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareMetadata {
    pub raw_users: usize,
    pub raw_items: usize,
    pub raw_interactions: usize,
    pub filtered_users: usize,
    pub filtered_items: usize,
    pub filtered_interactions: usize,
    pub k_core: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub rating_set: Vec<i32>,
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
    pub keep_fraction: f64,
    pub mask_seed: u64,
    pub train_count: usize,
    pub train_unknown_count: usize,
    pub val_count: usize,
    pub test_count: usize,
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut file =
        std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for line in lines {
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

/// Writes train.tsv / val.tsv / test.tsv plus metadata.json into `dir`.
/// Train labels use 0 for U.
pub fn write_prepared(dir: &Path, split: &SplitDataset, meta: &PrepareMetadata) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_lines(
        &dir.join("train.tsv"),
        split.train.interactions.iter().map(|it| {
            format!("{}\t{}\t{}", it.user, it.item, it.label.unwrap_or(0))
        }),
    )?;
    write_lines(
        &dir.join("val.tsv"),
        split.val.iter().map(|(u, i, r)| format!("{u}\t{i}\t{r}")),
    )?;
    write_lines(
        &dir.join("test.tsv"),
        split.test.iter().map(|(u, i, r)| format!("{u}\t{i}\t{r}")),
    )?;
    let meta_path = dir.join("metadata.json");
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::InvalidConfig(format!("metadata serialization failed: {e}")))?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

fn read_label_file(path: &Path, allow_unknown: bool) -> Result<Vec<(u32, u32, Option<i32>)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.trim_end().split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let u = fields[0]
            .parse::<u32>()
            .map_err(|_| Error::parse(path, line_no, "invalid user index"))?;
        let v = fields[1]
            .parse::<u32>()
            .map_err(|_| Error::parse(path, line_no, "invalid item index"))?;
        let raw = fields[2]
            .parse::<i32>()
            .map_err(|_| Error::parse(path, line_no, "invalid label"))?;
        let label = if raw == 0 {
            if !allow_unknown {
                return Err(Error::parse(path, line_no, "unknown label not allowed here"));
            }
            None
        } else {
            Some(raw)
        };
        out.push((u, v, label));
    }
    Ok(out)
}

/// Reads a prepared directory back into memory and validates invariants.
pub fn read_prepared(dir: &Path) -> Result<(SplitDataset, PrepareMetadata)> {
    let meta_path = dir.join("metadata.json");
    let meta_raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: PrepareMetadata = serde_json::from_str(&meta_raw)
        .map_err(|e| Error::parse(&meta_path, 1, format!("metadata: {e}")))?;

    let train_rows = read_label_file(&dir.join("train.tsv"), true)?;
    let val_rows = read_label_file(&dir.join("val.tsv"), false)?;
    let test_rows = read_label_file(&dir.join("test.tsv"), false)?;

    let train = Dataset {
        num_users: meta.num_users,
        num_items: meta.num_items,
        rating_set: meta.rating_set.clone(),
        interactions: train_rows
            .into_iter()
            .map(|(u, v, label)| Interaction { user: u, item: v, label })
            .collect(),
    };
    train.validate()?;
    let unwrap_rated = |rows: Vec<(u32, u32, Option<i32>)>| {
        rows.into_iter()
            .map(|(u, v, l)| (u, v, l.expect("rated file has no unknown labels")))
            .collect::<Vec<_>>()
    };
    Ok((
        SplitDataset {
            train,
            val: unwrap_rated(val_rows),
            test: unwrap_rated(test_rows),
        },
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(u: i64, i: i64, r: i32) -> RawInteraction {
        RawInteraction {
            user_raw_id: u,
            item_raw_id: i,
            rating: r,
            timestamp: 0,
        }
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_single_tsv_line() {
        let f = write_temp("1\t2\t5\t0\n");
        let rows = load_ratings(f.path(), RatingFileFormat::Tsv).unwrap();
        assert_eq!(rows, vec![raw(1, 2, 5)]);
    }

    #[test]
    fn load_double_colon_format() {
        let f = write_temp("7::9::3::123\n8::9::4::456\n");
        let rows = load_ratings(f.path(), RatingFileFormat::DoubleColon).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], RawInteraction { user_raw_id: 7, item_raw_id: 9, rating: 3, timestamp: 123 });
    }

    #[test]
    fn load_reports_bad_line_number() {
        let f = write_temp("1\t2\t5\t0\n1\t2\tx\t0\n");
        let err = load_ratings(f.path(), RatingFileFormat::Tsv).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_empty_file_errors() {
        let f = write_temp("");
        assert!(matches!(
            load_ratings(f.path(), RatingFileFormat::Tsv),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn k_core_one_is_identity() {
        let input = vec![raw(1, 10, 5), raw(2, 11, 3)];
        let out = apply_k_core(input.clone(), 1).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn k_core_exact_threshold_survives() {
        // 3 users x 3 items, fully crossed: every degree is exactly 3.
        let mut input = Vec::new();
        for u in 0..3 {
            for i in 0..3 {
                input.push(raw(u, 100 + i, 4));
            }
        }
        let out = apply_k_core(input.clone(), 3).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn k_core_cascade_to_empty_errors() {
        // u0 rates {i0, i1}, u1 rates {i0}. With k = 2: u1 and i1 fall below
        // the threshold, their removal drags the rest under it, nothing
        // survives. Verified by hand-running the iterative filter.
        let input = vec![raw(0, 100, 5), raw(0, 101, 5), raw(1, 100, 5)];
        assert!(matches!(
            apply_k_core(input, 2),
            Err(Error::KCoreEmpty { k: 2 })
        ));
    }

    #[test]
    fn k_core_cascade_keeps_stable_subset() {
        // A 2x2 fully-crossed block survives k = 2; the pendant user u2
        // (degree 1) and its exclusive item are removed in one pass.
        let block = vec![raw(0, 100, 5), raw(0, 101, 4), raw(1, 100, 3), raw(1, 101, 2)];
        let mut input = block.clone();
        input.push(raw(2, 102, 5));
        let out = apply_k_core(input, 2).unwrap();
        assert_eq!(out, block);

        // Fixed point: every survivor keeps degree >= k within the output.
        let mut user_deg: HashMap<i64, usize> = HashMap::new();
        let mut item_deg: HashMap<i64, usize> = HashMap::new();
        for it in &out {
            *user_deg.entry(it.user_raw_id).or_insert(0) += 1;
            *item_deg.entry(it.item_raw_id).or_insert(0) += 1;
        }
        assert!(user_deg.values().all(|&d| d >= 2));
        assert!(item_deg.values().all(|&d| d >= 2));
    }

    #[test]
    fn reindex_single_pair() {
        let (ds, maps) = reindex(&[raw(7, 9, 3)]).unwrap();
        assert_eq!(ds.num_users, 1);
        assert_eq!(ds.num_items, 1);
        assert_eq!(ds.rating_set, vec![3]);
        assert_eq!(ds.interactions, vec![Interaction { user: 0, item: 0, label: Some(3) }]);
        assert_eq!(maps.user_tokens, vec![7]);
        assert_eq!(maps.item_tokens, vec![9]);
    }

    #[test]
    fn reindex_first_appearance_order_and_sorted_ratings() {
        let (ds, maps) = reindex(&[raw(50, 9, 5), raw(3, 9, 2), raw(50, 4, 4)]).unwrap();
        assert_eq!(maps.user_tokens, vec![50, 3]);
        assert_eq!(maps.item_tokens, vec![9, 4]);
        assert_eq!(ds.rating_set, vec![2, 4, 5]);
        ds.validate().unwrap();
    }

    #[test]
    fn reindex_rejects_duplicates() {
        let err = reindex(&[raw(1, 2, 5), raw(1, 2, 5)]).unwrap_err();
        assert!(matches!(err, Error::DuplicatePair { user: 1, item: 2 }));
    }

    fn dense_dataset(num_users: usize, per_user: usize) -> Dataset {
        // Each user rates its own block of items, ratings cycling 1..=5.
        let mut interactions = Vec::new();
        for u in 0..num_users {
            for j in 0..per_user {
                interactions.push(Interaction {
                    user: u as u32,
                    item: (u * per_user + j) as u32,
                    label: Some((j % 5 + 1) as i32),
                });
            }
        }
        Dataset {
            num_users,
            num_items: num_users * per_user,
            rating_set: vec![1, 2, 3, 4, 5],
            interactions,
        }
    }

    #[test]
    fn split_exact_division() {
        let ds = dense_dataset(1, 20);
        let split = split_per_user(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(split.train.interactions.len(), 16);
        assert_eq!(split.val.len(), 2);
        assert_eq!(split.test.len(), 2);
    }

    #[test]
    fn split_floor_with_minimum() {
        let ds = dense_dataset(1, 10);
        let split = split_per_user(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(split.train.interactions.len(), 8);
        assert_eq!(split.val.len(), 1);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let ds = dense_dataset(5, 12);
        let a = split_per_user(&ds, (0.8, 0.1, 0.1), 42).unwrap();
        let b = split_per_user(&ds, (0.8, 0.1, 0.1), 42).unwrap();
        assert_eq!(a, b);
        let c = split_per_user(&ds, (0.8, 0.1, 0.1), 43).unwrap();
        assert_ne!(a, c);

        // The three parts partition the input pair set.
        let mut pairs: Vec<(u32, u32)> = a
            .train
            .interactions
            .iter()
            .map(|it| (it.user, it.item))
            .chain(a.val.iter().map(|&(u, i, _)| (u, i)))
            .chain(a.test.iter().map(|&(u, i, _)| (u, i)))
            .collect();
        pairs.sort_unstable();
        let mut expected: Vec<(u32, u32)> =
            ds.interactions.iter().map(|it| (it.user, it.item)).collect();
        expected.sort_unstable();
        assert_eq!(pairs.len(), expected.len());
        assert_eq!(pairs, expected);

        // Every val/test user has training interactions.
        let train_users: HashSet<u32> =
            a.train.interactions.iter().map(|it| it.user).collect();
        assert!(a.val.iter().all(|&(u, _, _)| train_users.contains(&u)));
        assert!(a.test.iter().all(|&(u, _, _)| train_users.contains(&u)));
    }

    #[test]
    fn split_rejects_small_users() {
        let ds = dense_dataset(1, 2);
        assert!(matches!(
            split_per_user(&ds, (0.8, 0.1, 0.1), 1),
            Err(Error::UserTooSmall { count: 2, .. })
        ));
    }

    #[test]
    fn masking_counts_and_determinism() {
        let ds = dense_dataset(5, 20);
        let spec = MaskingSpec { keep_fraction: 0.25, seed: 9 };
        let masked = apply_rating_frac(&ds, &spec).unwrap();
        assert_eq!(masked.interactions.len(), 100);
        assert_eq!(masked.unknown_count(), 75);
        let again = apply_rating_frac(&ds, &spec).unwrap();
        assert_eq!(masked, again);

        // Pair set and order unchanged.
        for (a, b) in ds.interactions.iter().zip(masked.interactions.iter()) {
            assert_eq!((a.user, a.item), (b.user, b.item));
        }
    }

    #[test]
    fn masking_full_keep_is_identity() {
        let ds = dense_dataset(2, 10);
        let masked =
            apply_rating_frac(&ds, &MaskingSpec { keep_fraction: 1.0, seed: 3 }).unwrap();
        assert_eq!(masked, ds);
    }

    #[test]
    fn masking_rejects_bad_fraction() {
        let ds = dense_dataset(1, 5);
        assert!(apply_rating_frac(&ds, &MaskingSpec { keep_fraction: 0.0, seed: 1 }).is_err());
        assert!(apply_rating_frac(&ds, &MaskingSpec { keep_fraction: 1.5, seed: 1 }).is_err());
    }

    #[test]
    fn prepared_round_trip() {
        let ds = dense_dataset(4, 10);
        let split = split_per_user(&ds, (0.8, 0.1, 0.1), 11).unwrap();
        let masked = apply_rating_frac(&split.train, &MaskingSpec { keep_fraction: 0.5, seed: 2 }).unwrap();
        let split = SplitDataset { train: masked, ..split };
        let meta = PrepareMetadata {
            raw_users: 4,
            raw_items: 40,
            raw_interactions: 40,
            filtered_users: 4,
            filtered_items: 40,
            filtered_interactions: 40,
            k_core: 1,
            num_users: split.train.num_users,
            num_items: split.train.num_items,
            rating_set: split.train.rating_set.clone(),
            split_ratios: (0.8, 0.1, 0.1),
            split_seed: 11,
            keep_fraction: 0.5,
            mask_seed: 2,
            train_count: split.train.interactions.len(),
            train_unknown_count: split.train.unknown_count(),
            val_count: split.val.len(),
            test_count: split.test.len(),
        };
        let dir = tempfile::tempdir().unwrap();
        write_prepared(dir.path(), &split, &meta).unwrap();
        let (back, meta_back) = read_prepared(dir.path()).unwrap();
        assert_eq!(back, split);
        assert_eq!(meta_back, meta);
    }
}
