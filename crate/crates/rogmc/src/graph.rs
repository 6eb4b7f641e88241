//! Sparse bipartite rating graphs: the interest graph over all observed
//! interactions and the per-level preference subgraphs produced by the
//! decomposition modes.
//!
//! Nodes live in one index space: users 0..num_users, then items offset by
//! num_users. Storage is CSR with both edge directions present, rows sorted
//! by neighbor so traversal order is deterministic.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseBipartiteGraph {
    pub num_users: usize,
    pub num_items: usize,
    /// Length num_nodes + 1, monotone.
    pub row_offsets: Vec<usize>,
    /// Neighbor node index per stored directed edge, sorted within each row.
    pub neighbor_ids: Vec<u32>,
    /// 1/c_ij = 1/sqrt(deg(i) * deg(j)) per stored directed edge.
    pub edge_norm: Vec<f64>,
}

impl SparseBipartiteGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn degree(&self, node: usize) -> usize {
        self.row_offsets[node + 1] - self.row_offsets[node]
    }

    /// Stored directed entries; half this many undirected edges.
    pub fn num_directed_edges(&self) -> usize {
        self.neighbor_ids.len()
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.neighbor_ids.len() / 2
    }

    pub fn neighbors(&self, node: usize) -> (&[u32], &[f64]) {
        let range = self.row_offsets[node]..self.row_offsets[node + 1];
        (&self.neighbor_ids[range.clone()], &self.edge_norm[range])
    }

    /// Builds the symmetric CSR structure from undirected (user, item)
    /// pairs. Pairs must be unique; item indices are pre-offset here.
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: &[(u32, u32)]) -> Self {
        let n = num_users + num_items;
        let mut degree = vec![0usize; n];
        for &(u, i) in pairs {
            degree[u as usize] += 1;
            degree[num_users + i as usize] += 1;
        }
        let mut row_offsets = vec![0usize; n + 1];
        for node in 0..n {
            row_offsets[node + 1] = row_offsets[node] + degree[node];
        }
        let mut cursor = row_offsets.clone();
        let mut neighbor_ids = vec![0u32; pairs.len() * 2];
        for &(u, i) in pairs {
            let u = u as usize;
            let v = num_users + i as usize;
            neighbor_ids[cursor[u]] = v as u32;
            cursor[u] += 1;
            neighbor_ids[cursor[v]] = u as u32;
            cursor[v] += 1;
        }
        for node in 0..n {
            neighbor_ids[row_offsets[node]..row_offsets[node + 1]].sort_unstable();
        }
        let mut graph = SparseBipartiteGraph {
            num_users,
            num_items,
            row_offsets,
            neighbor_ids,
            edge_norm: Vec::new(),
        };
        graph.compute_norms();
        graph
    }

    /// Recomputes edge_norm[i -> j] = 1/sqrt(deg(i) * deg(j)) from the
    /// current adjacency. Degrees are taken within this graph only.
    pub fn compute_norms(&mut self) {
        let n = self.num_nodes();
        self.edge_norm = vec![0.0; self.neighbor_ids.len()];
        for node in 0..n {
            let deg_i = self.degree(node) as f64;
            for pos in self.row_offsets[node]..self.row_offsets[node + 1] {
                let deg_j = self.degree(self.neighbor_ids[pos] as usize) as f64;
                self.edge_norm[pos] = 1.0 / (deg_i * deg_j).sqrt();
            }
        }
    }

    /// One propagation step: out[i] = sum over neighbors j of norm(i,j) * x[j].
    /// Isolated nodes get zero rows. Accumulation follows the sorted
    /// neighbor order, so results are bit-reproducible.
    pub fn propagate_step(&self, x: &Array2<f64>, out: &mut Array2<f64>) {
        debug_assert_eq!(x.nrows(), self.num_nodes());
        debug_assert_eq!(out.dim(), x.dim());
        let d = x.ncols();
        let x_flat = x.as_slice().expect("standard layout");
        let out_flat = out.as_slice_mut().expect("standard layout");
        for node in 0..self.num_nodes() {
            let row = &mut out_flat[node * d..(node + 1) * d];
            row.fill(0.0);
            for pos in self.row_offsets[node]..self.row_offsets[node + 1] {
                let j = self.neighbor_ids[pos] as usize;
                let w = self.edge_norm[pos];
                let src = &x_flat[j * d..(j + 1) * d];
                for (r, s) in row.iter_mut().zip(src) {
                    *r += w * s;
                }
            }
        }
    }

    /// Debug export: one "src<TAB>dst<TAB>norm" line per stored directed edge.
    pub fn write_edge_list_tsv(&self, path: &Path) -> Result<()> {
        let mut file =
            std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for node in 0..self.num_nodes() {
            let (nbrs, norms) = self.neighbors(node);
            for (j, w) in nbrs.iter().zip(norms) {
                writeln!(file, "{node}\t{j}\t{w}").map_err(|e| Error::io(path, e))?;
            }
        }
        file.flush().map_err(|e| Error::io(path, e))
    }
}

/// How rated edges are assigned to preference levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMode {
    /// Level t holds edges with rating >= t (higher ratings appear in more
    /// subgraphs).
    Cumulative,
    /// Level t holds edges with rating == t.
    Exact,
    /// Level t holds edges with rating <= t.
    ReverseCumulative,
    /// No decomposition: the single level graph is the interest graph.
    None,
}

impl FromStr for DecompositionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumulative" => Ok(DecompositionMode::Cumulative),
            "exact" => Ok(DecompositionMode::Exact),
            "reverse_cumulative" => Ok(DecompositionMode::ReverseCumulative),
            "none" => Ok(DecompositionMode::None),
            other => Err(Error::InvalidConfig(format!(
                "unknown decomposition mode '{other}'"
            ))),
        }
    }
}

impl fmt::Display for DecompositionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DecompositionMode::Cumulative => "cumulative",
            DecompositionMode::Exact => "exact",
            DecompositionMode::ReverseCumulative => "reverse_cumulative",
            DecompositionMode::None => "none",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelGraph {
    pub value: i32,
    pub graph: SparseBipartiteGraph,
}

/// The interest graph plus the ordered preference levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedGraphs {
    pub interest: SparseBipartiteGraph,
    pub levels: Vec<LevelGraph>,
    pub t_values: Vec<i32>,
    pub mode: DecompositionMode,
}

impl DecomposedGraphs {
    pub fn num_nodes(&self) -> usize {
        self.interest.num_nodes()
    }
}

/// Interest graph over every observed interaction, rated or U; all edges
/// treated equally.
pub fn build_interest_graph(train: &Dataset) -> Result<SparseBipartiteGraph> {
    if train.interactions.is_empty() {
        return Err(Error::EmptyInput("interest graph needs interactions".into()));
    }
    let pairs: Vec<(u32, u32)> = train
        .interactions
        .iter()
        .map(|it| (it.user, it.item))
        .collect();
    Ok(SparseBipartiteGraph::from_pairs(
        train.num_users,
        train.num_items,
        &pairs,
    ))
}

fn level_pairs(
    train: &Dataset,
    t: i32,
    mode: DecompositionMode,
) -> Vec<(u32, u32)> {
    train
        .interactions
        .iter()
        .filter_map(|it| {
            let r = it.label?;
            let keep = match mode {
                DecompositionMode::Cumulative => r >= t,
                DecompositionMode::Exact => r == t,
                DecompositionMode::ReverseCumulative => r <= t,
                DecompositionMode::None => unreachable!("none mode has no levels"),
            };
            keep.then_some((it.user, it.item))
        })
        .collect()
}

fn build_levels(
    train: &Dataset,
    t_values: &[i32],
    mode: DecompositionMode,
) -> Result<DecomposedGraphs> {
    if t_values.is_empty() {
        return Err(Error::InvalidConfig("decomposition needs at least one level".into()));
    }
    for &t in t_values {
        if train.rating_index(t).is_none() {
            return Err(Error::InvalidConfig(format!(
                "level value {t} not in rating_set {:?}",
                train.rating_set
            )));
        }
    }
    let interest = build_interest_graph(train)?;
    let levels = t_values
        .iter()
        .map(|&t| LevelGraph {
            value: t,
            graph: SparseBipartiteGraph::from_pairs(
                train.num_users,
                train.num_items,
                &level_pairs(train, t, mode),
            ),
        })
        .collect();
    Ok(DecomposedGraphs {
        interest,
        levels,
        t_values: t_values.to_vec(),
        mode,
    })
}

/// Cumulative decomposition: level t holds rated edges with rating >= t.
/// U-labeled interactions appear only in the interest graph.
pub fn build_cumulative(train: &Dataset, t_values: &[i32]) -> Result<DecomposedGraphs> {
    build_levels(train, t_values, DecompositionMode::Cumulative)
}

/// Exact-rating decomposition: level t holds edges with rating == t.
pub fn build_exact(train: &Dataset, t_values: &[i32]) -> Result<DecomposedGraphs> {
    build_levels(train, t_values, DecompositionMode::Exact)
}

/// Reverse-cumulative decomposition: level t holds edges with rating <= t.
pub fn build_reverse_cumulative(train: &Dataset, t_values: &[i32]) -> Result<DecomposedGraphs> {
    build_levels(train, t_values, DecompositionMode::ReverseCumulative)
}

/// Builds graphs for any mode. `t_values = None` defaults to the full
/// rating set. In `None` mode the single level is the interest graph
/// itself, so propagation treats all interactions equally.
pub fn build_decomposition(
    train: &Dataset,
    t_values: Option<&[i32]>,
    mode: DecompositionMode,
) -> Result<DecomposedGraphs> {
    match mode {
        DecompositionMode::None => {
            let interest = build_interest_graph(train)?;
            let levels = vec![LevelGraph { value: 0, graph: interest.clone() }];
            Ok(DecomposedGraphs {
                interest,
                levels,
                t_values: vec![0],
                mode,
            })
        }
        _ => {
            let owned;
            let ts: &[i32] = match t_values {
                Some(ts) => ts,
                None => {
                    owned = train.rating_set.clone();
                    &owned
                }
            };
            build_levels(train, ts, mode)
        }
    }
}
