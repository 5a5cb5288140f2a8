//! Tactile graphs and the hop-wise propagation operator used by spiking graph layers.
//!
//! Spatial graphs are undirected minimum spanning trees over taxel
//! coordinates. Temporal graphs are directed over the time steps of one
//! taxel, either a chain (sparse) or all forward pairs (dense).
//!
//! Propagation computes `sum_{k=0..H} (A^k X) W_k + b` with a degree
//! normalized adjacency `A`: `D^-1/2 A D^-1/2` (no self loops) for spatial
//! graphs and in-degree row normalization for temporal graphs. Nodes with
//! no neighbours get zero rows.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Coord = [f64; 2];

const NEUTOUCH_39: &str = include_str!("../../data/neutouch_39.txt");

/// Undirected spanning tree over taxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGraph {
    pub coords: Vec<Coord>,
    /// `(i, j, length)` with `i < j`, in insertion order of the tree.
    pub edges: Vec<(usize, usize, f64)>,
}

impl SpatialGraph {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.n_nodes();
        let mut a = Array2::zeros((n, n));
        for &(i, j, _) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// `D^-1/2 A D^-1/2`.
    pub fn normalized_adjacency(&self) -> Array2<f64> {
        let a = self.adjacency();
        let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
        let mut out = a;
        for ((i, j), v) in out.indexed_iter_mut() {
            if *v != 0.0 {
                *v /= (deg[i] * deg[j]).sqrt();
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        let mut dsu = DisjointSets::new(n);
        for &(i, j, _) in &self.edges {
            dsu.union(i, j);
        }
        (1..n).all(|v| dsu.find(v) == dsu.find(0))
    }
}

fn distance(a: Coord, b: Coord) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Euclidean minimum spanning tree by Kruskal's algorithm.
///
/// Candidate edges are ordered by `(length, min index, max index)`, which
/// fixes the tree when several lengths tie.
pub fn build_spatial_graph(coords: &[Coord]) -> Result<SpatialGraph> {
    let n = coords.len();
    if n < 2 {
        return Err(Error::Graph(format!("spatial graph needs at least 2 taxels, got {n}")));
    }
    if let Some(bad) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(Error::Graph(format!("taxel {bad} has non-finite coordinates")));
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            candidates.push((distance(coords[i], coords[j]), i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut dsu = DisjointSets::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    for (w, i, j) in candidates {
        if dsu.union(i, j) {
            edges.push((i, j, w));
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    Ok(SpatialGraph {
        coords: coords.to_vec(),
        edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalMode {
    Sparse,
    Dense,
}

impl std::str::FromStr for TemporalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(TemporalMode::Sparse),
            "dense" => Ok(TemporalMode::Dense),
            other => Err(Error::Config(format!("unknown temporal graph mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for TemporalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TemporalMode::Sparse => "sparse",
            TemporalMode::Dense => "dense",
        })
    }
}

/// Directed graph over the `T` steps of a taxel; shared by every taxel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalGraph {
    pub n_steps: usize,
    pub mode: TemporalMode,
    /// `(from, to)` with `from < to`.
    pub edges: Vec<(usize, usize)>,
}

impl TemporalGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_steps
    }

    /// `adj[(to, from)] = 1` for each edge.
    pub fn adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n_steps, self.n_steps));
        for &(p, q) in &self.edges {
            a[(q, p)] = 1.0;
        }
        a
    }

    /// Row `q` averages over the predecessors of `q`.
    pub fn normalized_adjacency(&self) -> Array2<f64> {
        let mut a = self.adjacency();
        for mut row in a.rows_mut() {
            let deg = row.sum();
            if deg > 0.0 {
                row.mapv_inplace(|v| v / deg);
            }
        }
        a
    }
}

pub fn build_temporal_graph(n_steps: usize, mode: TemporalMode) -> Result<TemporalGraph> {
    if n_steps == 0 {
        return Err(Error::Graph("temporal graph needs T >= 1".into()));
    }
    let edges = match mode {
        TemporalMode::Sparse => (1..n_steps).map(|q| (q - 1, q)).collect(),
        TemporalMode::Dense => (0..n_steps)
            .flat_map(|p| (p + 1..n_steps).map(move |q| (p, q)))
            .collect(),
    };
    Ok(TemporalGraph {
        n_steps,
        mode,
        edges,
    })
}

/// Either kind of graph a propagation layer can run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TactileGraph {
    Spatial(SpatialGraph),
    Temporal(TemporalGraph),
    /// No edges; propagation reduces to the hop-0 term.
    Edgeless { n_nodes: usize },
}

impl TactileGraph {
    pub fn n_nodes(&self) -> usize {
        match self {
            TactileGraph::Spatial(g) => g.n_nodes(),
            TactileGraph::Temporal(g) => g.n_nodes(),
            TactileGraph::Edgeless { n_nodes } => *n_nodes,
        }
    }

    pub fn normalized_adjacency(&self) -> Array2<f64> {
        match self {
            TactileGraph::Spatial(g) => g.normalized_adjacency(),
            TactileGraph::Temporal(g) => g.normalized_adjacency(),
            TactileGraph::Edgeless { n_nodes } => Array2::zeros((*n_nodes, *n_nodes)),
        }
    }

    /// Edge list as `(from, to)` pairs; spatial edges are listed once.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        match self {
            TactileGraph::Spatial(g) => g.edges.iter().map(|&(i, j, _)| (i, j)).collect(),
            TactileGraph::Temporal(g) => g.edges.clone(),
            TactileGraph::Edgeless { .. } => Vec::new(),
        }
    }
}

/// Precomputed powers `A^0 .. A^H` of the normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct HopOperator {
    powers: Vec<Array2<f64>>,
}

impl HopOperator {
    pub fn new(graph: &TactileGraph, hops: usize) -> Self {
        let n = graph.n_nodes();
        let a = graph.normalized_adjacency();
        let mut powers = Vec::with_capacity(hops + 1);
        powers.push(Array2::eye(n));
        for k in 1..=hops {
            let next = powers[k - 1].dot(&a);
            powers.push(next);
        }
        Self { powers }
    }

    pub fn hops(&self) -> usize {
        self.powers.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.powers[0].nrows()
    }

    pub fn power(&self, k: usize) -> &Array2<f64> {
        &self.powers[k]
    }

    /// Hop features of a scalar node signal: `out[m][k] = (A^k x)[m]`.
    ///
    /// Returned node-major as a flat `n_nodes * (H + 1)` buffer.
    pub fn hop_features(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        let h1 = self.powers.len();
        let mut out = vec![0.0; n * h1];
        // Input columns are spikes; skip silent nodes.
        let active: Vec<usize> = (0..n).filter(|&j| x[j] != 0.0).collect();
        for (k, p) in self.powers.iter().enumerate() {
            for m in 0..n {
                let row = p.row(m);
                let mut acc = 0.0;
                for &j in &active {
                    acc += row[j] * x[j];
                }
                out[m * h1 + k] = acc;
            }
        }
        out
    }

    /// Nodes each input node reaches within `H` hops, ascending.
    pub fn reach(&self) -> Vec<Vec<usize>> {
        let n = self.n_nodes();
        (0..n)
            .map(|j| {
                (0..n)
                    .filter(|&m| self.powers.iter().any(|p| p[(m, j)] != 0.0))
                    .collect()
            })
            .collect()
    }

    /// Number of nodes each input node reaches within `H` hops.
    pub fn fanout(&self) -> Vec<usize> {
        self.reach().iter().map(Vec::len).collect()
    }
}

/// `sum_k (A^k X) W_k + bias` for node features `X` (`nodes x F_in`).
pub fn graph_propagate(
    graph: &TactileGraph,
    x: &Array2<f64>,
    weights: &[Array2<f64>],
    bias: Option<&Array1<f64>>,
) -> Result<Array2<f64>> {
    if weights.is_empty() {
        return Err(Error::Shape("graph_propagate needs at least the hop-0 weight".into()));
    }
    if x.nrows() != graph.n_nodes() {
        return Err(Error::Shape(format!(
            "features have {} rows, graph has {} nodes",
            x.nrows(),
            graph.n_nodes()
        )));
    }
    let f_out = weights[0].ncols();
    for (k, w) in weights.iter().enumerate() {
        if w.nrows() != x.ncols() || w.ncols() != f_out {
            return Err(Error::Shape(format!(
                "hop {k} weight is {}x{}, expected {}x{f_out}",
                w.nrows(),
                w.ncols(),
                x.ncols()
            )));
        }
    }
    if let Some(b) = bias {
        if b.len() != f_out {
            return Err(Error::Shape(format!("bias has {} entries, expected {f_out}", b.len())));
        }
    }
    let op = HopOperator::new(graph, weights.len() - 1);
    let mut out = Array2::zeros((x.nrows(), f_out));
    for (k, w) in weights.iter().enumerate() {
        out += &op.power(k).dot(x).dot(w);
    }
    if let Some(b) = bias {
        out += b;
    }
    Ok(out)
}

/// Reads a coordinate file of `index x y` lines (zero-based indices 0..N).
pub fn load_coords(path: &Path) -> Result<Vec<Coord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coords(&text, path)
}

pub fn parse_coords(text: &str, origin: &Path) -> Result<Vec<Coord>> {
    let mut rows: Vec<(usize, Coord)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |msg: String| Error::Malformed {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(malformed(format!("expected `index x y`, got `{line}`")));
        }
        let idx = f[0].parse::<usize>().map_err(|_| malformed(format!("bad index `{}`", f[0])))?;
        let x = f[1].parse::<f64>().map_err(|_| malformed(format!("bad x `{}`", f[1])))?;
        let y = f[2].parse::<f64>().map_err(|_| malformed(format!("bad y `{}`", f[2])))?;
        rows.push((idx, [x, y]));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, (idx, _)) in rows.iter().enumerate() {
        if *idx != expect {
            return Err(Error::Graph(format!(
                "{}: taxel indices must cover 0..{} exactly once",
                origin.display(),
                rows.len()
            )));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

/// Bundled approximate layout of one 39-taxel sensor.
pub fn neutouch_coords() -> Vec<Coord> {
    parse_coords(NEUTOUCH_39, Path::new("neutouch_39.txt")).expect("bundled layout parses")
}

/// Layout used when a dataset ships no coordinates: the bundled sensor
/// layout (tiled side by side for several sensors) or a near-square grid.
pub fn default_coords(n: usize) -> Vec<Coord> {
    if n > 0 && n % 39 == 0 {
        let one = neutouch_coords();
        return (0..n / 39)
            .flat_map(|s| one.iter().map(move |c| [c[0] + 10.0 * s as f64, c[1]]))
            .collect();
    }
    let side = (n as f64).sqrt().ceil().max(1.0) as usize;
    (0..n).map(|i| [(i % side) as f64, (i / side) as f64]).collect()
}
