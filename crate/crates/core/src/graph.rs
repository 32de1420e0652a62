//! Sparse undirected graphs with optional node features and labels.
//!
//! Adjacency is stored in compressed sparse row form. Edges are symmetrized,
//! deduplicated and self-loops are dropped on construction, so every graph in
//! the crate is simple and undirected.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Row-major dense feature matrix, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "feature row {i} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("feature row {i} is not finite")));
            }
            data.extend(row);
        }
        Ok(Features { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Option<Features>,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl Graph {
    /// Builds a graph over `num_nodes` nodes from an undirected edge list.
    ///
    /// Each pair is inserted in both directions; duplicates and self-loops are
    /// discarded. When labels are given, `K = 1 + max label` and every class in
    /// `0..K` must occur.
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Option<Features>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidInput(format!(
                    "node id out of range: edge ({u}, {v}) with {num_nodes} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }

        if let Some(f) = &features {
            if f.num_rows() != num_nodes {
                return Err(Error::InvalidInput(format!(
                    "row-count mismatch: {} feature rows for {num_nodes} nodes",
                    f.num_rows()
                )));
            }
        }
        let mut num_classes = 0;
        if let Some(labels) = &labels {
            if labels.len() != num_nodes {
                return Err(Error::InvalidInput(format!(
                    "row-count mismatch: {} labels for {num_nodes} nodes",
                    labels.len()
                )));
            }
            num_classes = labels.iter().max().map_or(0, |m| m + 1);
            let mut seen = vec![false; num_classes];
            for &y in labels {
                seen[y] = true;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::MissingClass(missing));
            }
        }

        Ok(Graph {
            offsets,
            neighbors,
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or an error when the graph is unlabeled.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::InvalidInput("graph has no labels".into()))
    }

    /// Undirected edges with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    /// `Ā x` with `Ā = A D⁻¹`. Zero-degree nodes keep their own mass.
    pub fn transition(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_nodes();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let d = self.degree(j);
            if d == 0 {
                out[j] += x[j];
                continue;
            }
            let share = x[j] / d as f64;
            for &i in self.neighbors(j) {
                out[i] += share;
            }
        }
        out
    }

    /// `Āᵀ x`.
    pub fn transition_transpose(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|j| {
                let d = self.degree(j);
                if d == 0 {
                    x[j]
                } else {
                    self.neighbors(j).iter().map(|&i| x[i]).sum::<f64>() / d as f64
                }
            })
            .collect()
    }

    /// `(αI + (1−α)Ā)^steps x`.
    pub fn lazy_walk(&self, x: &[f64], alpha: f64, steps: usize) -> Vec<f64> {
        let mut v = x.to_vec();
        for _ in 0..steps {
            let moved = self.transition(&v);
            for (vi, mi) in v.iter_mut().zip(moved) {
                *vi = alpha * *vi + (1.0 - alpha) * mi;
            }
        }
        v
    }

    /// `((αI + (1−α)Ā)^steps)ᵀ x`.
    pub fn lazy_walk_transpose(&self, x: &[f64], alpha: f64, steps: usize) -> Vec<f64> {
        let mut v = x.to_vec();
        for _ in 0..steps {
            let moved = self.transition_transpose(&v);
            for (vi, mi) in v.iter_mut().zip(moved) {
                *vi = alpha * *vi + (1.0 - alpha) * mi;
            }
        }
        v
    }

    /// Unit-length BFS distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Dense column-stochastic `Ā = A D⁻¹`, indexed `[row][col]`.
///
/// The column of a zero-degree node is its standard basis vector. Meant for
/// small graphs and tests; the kernels use [`Graph::transition`] instead.
pub fn normalized_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        if g.degree(i) == 0 {
            row[i] = 1.0;
        }
        for &j in g.neighbors(i) {
            row[j] = 1.0 / g.degree(j) as f64;
        }
    }
    m
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut edges = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: no + 1,
            msg,
        };
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(format!("expected \"u v\", got {line:?}")));
        };
        let u = a
            .parse::<usize>()
            .map_err(|_| parse_err(format!("non-numeric node id {a:?}")))?;
        let v = b
            .parse::<usize>()
            .map_err(|_| parse_err(format!("non-numeric node id {b:?}")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

pub(crate) fn read_real_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{other:?}")),
        })?;
    let mut rows = Vec::new();
    for (no, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: no + 1,
                    msg: format!("non-numeric cell {cell:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: no + 1,
                msg: format!("non-numeric label {:?}", l.trim()),
            })
        })
        .collect()
}

/// Loads a graph from an edge list plus optional feature CSV and label file.
///
/// The node count is taken from the feature/label row count when either is
/// present (edges referencing ids beyond it are an error), else `1 + max id`.
pub fn load_graph(edges_path: &Path, features_path: Option<&Path>, labels_path: Option<&Path>) -> Result<Graph> {
    let edges = parse_edges(edges_path)?;
    let features = features_path
        .map(|p| read_real_csv(p).and_then(Features::from_rows))
        .transpose()?;
    let labels = labels_path.map(read_labels).transpose()?;

    let rows = match (&features, &labels) {
        (Some(f), Some(l)) if f.num_rows() != l.len() => {
            return Err(Error::InvalidInput(format!(
                "row-count mismatch: {} feature rows vs {} labels",
                f.num_rows(),
                l.len()
            )))
        }
        (Some(f), _) => Some(f.num_rows()),
        (None, Some(l)) => Some(l.len()),
        (None, None) => None,
    };
    let max_id = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    let num_nodes = match rows {
        Some(n) if max_id > n => {
            return Err(Error::InvalidInput(format!(
                "node id out of range: id {} with {n} nodes",
                max_id - 1
            )))
        }
        Some(n) => n,
        None => max_id,
    };
    Graph::new(num_nodes, &edges, features, labels)
}

/// Writes the graph in the format read by [`load_graph`].
pub fn save_graph(
    g: &Graph,
    edges_path: &Path,
    features_path: Option<&Path>,
    labels_path: Option<&Path>,
) -> Result<()> {
    let mut out = String::new();
    for (u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    write_file(edges_path, out.as_bytes())?;
    if let (Some(path), Some(f)) = (features_path, g.features()) {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        for i in 0..f.num_rows() {
            w.write_record(f.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    if let (Some(path), Some(labels)) = (labels_path, g.labels()) {
        let text: String = labels.iter().map(|y| format!("{y}\n")).collect();
        write_file(path, text.as_bytes())?;
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges, None, None).unwrap()
    }

    #[test]
    fn symmetrizes_and_dedups() {
        let g = Graph::new(2, &[(0, 1), (1, 0), (0, 1)], None, None).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn drops_self_loops() {
        let g = Graph::new(2, &[(0, 0), (0, 1)], None, None).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(0), 1);
    }

    #[test]
    fn rejects_out_of_range_and_missing_classes() {
        assert!(Graph::new(2, &[(0, 2)], None, None).is_err());
        assert!(matches!(
            Graph::new(3, &[], None, Some(vec![0, 2, 2])),
            Err(Error::MissingClass(1))
        ));
        assert!(Graph::new(3, &[], None, Some(vec![0, 1])).is_err());
    }

    #[test]
    fn normalized_adjacency_path_and_triangle() {
        assert_eq!(normalized_adjacency(&path(2)), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let tri = Graph::new(3, &[(0, 1), (1, 2), (2, 0)], None, None).unwrap();
        let a = normalized_adjacency(&tri);
        for j in 0..3 {
            let mut col: Vec<f64> = (0..3).map(|i| a[i][j]).collect();
            assert_eq!(col[j], 0.0);
            col.sort_by(f64::total_cmp);
            assert_eq!(col, vec![0.0, 0.5, 0.5]);
        }
    }

    #[test]
    fn isolated_node_column_is_basis_vector() {
        let g = Graph::new(3, &[(0, 1)], None, None).unwrap();
        let a = normalized_adjacency(&g);
        assert_eq!((0..3).map(|i| a[i][2]).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        assert_eq!(g.transition(&[0.0, 0.0, 1.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn sparse_transition_matches_dense() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 0), (2, 3)], None, None).unwrap();
        let a = normalized_adjacency(&g);
        let x = [0.1, 0.7, -0.3, 2.0, 1.5];
        let y = g.transition(&x);
        let yt = g.transition_transpose(&x);
        for i in 0..5 {
            let dense: f64 = (0..5).map(|j| a[i][j] * x[j]).sum();
            let dense_t: f64 = (0..5).map(|j| a[j][i] * x[j]).sum();
            assert!((dense - y[i]).abs() < 1e-12);
            assert!((dense_t - yt[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn bfs_distances_on_path() {
        let mut g = path(4);
        assert_eq!(g.bfs_distances(0), vec![Some(0), Some(1), Some(2), Some(3)]);
        g = Graph::new(3, &[(0, 1)], None, None).unwrap();
        assert_eq!(g.bfs_distances(0)[2], None);
    }
}
