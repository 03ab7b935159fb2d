//! Attributed graphs, incidence patterns and the dual hypergraph.

use std::collections::HashSet;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Row-compressed 0/1 sparsity pattern. Column indices are sorted within a row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from per-row column lists. Rows are sorted and deduplicated.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let nrows = rows.len();
        let mut offsets = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last >= ncols {
                    return Err(Error::Shape(format!(
                        "column {last} out of range for {ncols} columns"
                    )));
                }
            }
            indices.extend(row);
            offsets.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            offsets,
            indices,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.nrows).map(|i| self.row(i).len()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.ncols];
        for &j in &self.indices {
            sums[j] += 1;
        }
        sums
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0; self.indices.len()];
        // Rows visited in ascending order, so each transposed row stays sorted.
        for i in 0..self.nrows {
            for &j in self.row(i) {
                indices[cursor[j]] = i;
                cursor[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            offsets,
            indices,
        }
    }

    pub fn to_dense(&self) -> Array2<f32> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            for &j in self.row(i) {
                out[[i, j]] = 1.0;
            }
        }
        out
    }
}

/// Undirected simple graph with dense node features and optional anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    features: Array2<f32>,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    incident: Vec<usize>,
    node_labels: Option<Vec<u8>>,
    edge_labels: Option<Vec<u8>>,
}

/// Node-by-edge incidence pattern (N x M). Every column holds exactly two entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix(pub Pattern);

/// Dual hypergraph: one dual node per original edge, one hyperedge per original node.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHypergraph {
    /// M x N membership pattern (the transposed incidence matrix).
    pub incidence: Pattern,
    /// M x D features, the mean of the two endpoint rows.
    pub features: Array2<f32>,
}

impl DualHypergraph {
    pub fn num_dual_nodes(&self) -> usize {
        self.incidence.nrows()
    }

    pub fn num_hyperedges(&self) -> usize {
        self.incidence.ncols()
    }
}

/// Canonicalizes node pairs and builds the graph.
///
/// Pairs may arrive in either orientation and may repeat; the edge list is
/// stored as sorted `(i, j)` with `i < j`, and an edge's id is its position in
/// that list.
pub fn build_graph(pairs: &[(usize, usize)], features: Array2<f32>) -> Result<AttributedGraph> {
    let n = features.nrows();
    let mut edges = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        if a >= n || b >= n {
            return Err(Error::InvalidGraph(format!(
                "edge ({a}, {b}) references a node outside 0..{n}"
            )));
        }
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
        }
        edges.push((a.min(b), a.max(b)));
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(AttributedGraph::from_canonical(features, edges))
}

impl AttributedGraph {
    /// `edges` must already be sorted, deduplicated and oriented `i < j`.
    fn from_canonical(features: Array2<f32>, edges: Vec<(usize, usize)>) -> Self {
        let n = features.nrows();
        let mut degree = vec![0usize; n + 1];
        for &(i, j) in &edges {
            degree[i + 1] += 1;
            degree[j + 1] += 1;
        }
        for v in 0..n {
            degree[v + 1] += degree[v];
        }
        let offsets = degree;
        let mut cursor = offsets.clone();
        let mut neighbors = vec![0; 2 * edges.len()];
        let mut incident = vec![0; 2 * edges.len()];
        // Edges are sorted, so lower neighbors of a node are filled in id order
        // before any higher neighbor; each row ends up sorted by neighbor id.
        for (id, &(i, j)) in edges.iter().enumerate() {
            neighbors[cursor[j]] = i;
            incident[cursor[j]] = id;
            cursor[j] += 1;
        }
        for (id, &(i, j)) in edges.iter().enumerate() {
            neighbors[cursor[i]] = j;
            incident[cursor[i]] = id;
            cursor[i] += 1;
        }
        Self {
            features,
            edges,
            offsets,
            neighbors,
            incident,
            node_labels: None,
            edge_labels: None,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor ids of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Edge ids incident to `v`, aligned with [`Self::neighbors`].
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.incident[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        let row = self.neighbors(a);
        row.binary_search(&b)
            .ok()
            .map(|pos| self.incident[self.offsets[a] + pos])
    }

    pub fn adjacency(&self) -> Pattern {
        Pattern {
            nrows: self.num_nodes(),
            ncols: self.num_nodes(),
            offsets: self.offsets.clone(),
            indices: self.neighbors.clone(),
        }
    }

    pub fn node_labels(&self) -> Option<&[u8]> {
        self.node_labels.as_deref()
    }

    pub fn edge_labels(&self) -> Option<&[u8]> {
        self.edge_labels.as_deref()
    }

    pub fn with_node_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        check_labels(&labels, self.num_nodes(), "node")?;
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub fn with_edge_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        check_labels(&labels, self.num_edges(), "edge")?;
        self.edge_labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.node_labels = None;
        self.edge_labels = None;
        self
    }

    pub fn with_features(mut self, features: Array2<f32>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::Shape(format!(
                "replacement features {:?} do not match {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        self.features = features;
        Ok(self)
    }

    /// Number of nodes with degree zero.
    pub fn num_isolated(&self) -> usize {
        (0..self.num_nodes()).filter(|&v| self.degree(v) == 0).count()
    }

    /// Returns a graph with `pairs` added. Existing edges are not duplicated
    /// and keep their labels; genuinely new edges get `new_label`.
    ///
    /// The second value lists the ids (in the returned graph) of the edges that
    /// were actually added.
    pub fn with_added_edges(
        &self,
        pairs: &[(usize, usize)],
        new_label: u8,
    ) -> Result<(AttributedGraph, Vec<usize>)> {
        let n = self.num_nodes();
        let mut fresh = Vec::new();
        for &(a, b) in pairs {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidGraph(format!("cannot add edge ({a}, {b})")));
            }
            let canon = (a.min(b), a.max(b));
            if self.edge_id(canon.0, canon.1).is_none() {
                fresh.push(canon);
            }
        }
        fresh.sort_unstable();
        fresh.dedup();

        let old_labels = self
            .edge_labels
            .clone()
            .unwrap_or_else(|| vec![0; self.num_edges()]);
        let mut merged: Vec<((usize, usize), u8, bool)> = self
            .edges
            .iter()
            .zip(&old_labels)
            .map(|(&e, &l)| (e, l, false))
            .chain(fresh.iter().map(|&e| (e, new_label, true)))
            .collect();
        merged.sort_unstable_by_key(|&(e, _, _)| e);

        let added: Vec<usize> = merged
            .iter()
            .enumerate()
            .filter(|(_, m)| m.2)
            .map(|(id, _)| id)
            .collect();
        let labels: Vec<u8> = merged.iter().map(|m| m.1).collect();
        let edges: Vec<(usize, usize)> = merged.into_iter().map(|m| m.0).collect();

        let mut graph = AttributedGraph::from_canonical(self.features.clone(), edges);
        graph.node_labels = self.node_labels.clone();
        graph.edge_labels = Some(labels);
        Ok((graph, added))
    }

    /// Structural validation of every type invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        for w in self.edges.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidGraph("edge list not sorted/unique".into()));
            }
        }
        for (id, &(i, j)) in self.edges.iter().enumerate() {
            if i >= j || j >= n {
                return Err(Error::InvalidGraph(format!("edge {id} = ({i}, {j}) malformed")));
            }
            if self.edge_id(i, j) != Some(id) || self.edge_id(j, i) != Some(id) {
                return Err(Error::InvalidGraph(format!("edge {id} missing from adjacency")));
            }
        }
        if self.neighbors.len() != 2 * self.edges.len() {
            return Err(Error::InvalidGraph("adjacency nonzeros != 2M".into()));
        }
        for v in 0..n {
            if self.neighbors(v).contains(&v) {
                return Err(Error::InvalidGraph(format!("self-loop on {v}")));
            }
        }
        if let Some(l) = &self.node_labels {
            check_labels(l, n, "node")?;
        }
        if let Some(l) = &self.edge_labels {
            check_labels(l, self.num_edges(), "edge")?;
        }
        Ok(())
    }
}

fn check_labels(labels: &[u8], expected: usize, what: &str) -> Result<()> {
    if labels.len() != expected {
        return Err(Error::InvalidGraph(format!(
            "{what} label vector has length {}, expected {expected}",
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidGraph(format!("{what} labels must be 0/1")));
    }
    Ok(())
}

/// Node-by-edge incidence: entry `(i, t)` is set iff node `i` is an endpoint of edge `t`.
pub fn incidence(graph: &AttributedGraph) -> IncidenceMatrix {
    let rows = (0..graph.num_nodes())
        .map(|v| graph.incident_edges(v).to_vec())
        .collect();
    IncidenceMatrix(Pattern::from_rows(graph.num_edges(), rows).expect("edge ids in range"))
}

/// Turns edges into dual nodes and nodes into hyperedges.
pub fn dual_transform(graph: &AttributedGraph) -> Result<DualHypergraph> {
    if graph.num_edges() == 0 {
        return Err(Error::InvalidGraph(
            "dual transform needs at least one edge".into(),
        ));
    }
    let incidence = incidence(graph).0.transpose();
    let x = graph.features();
    let mut features = Array2::<f32>::zeros((graph.num_edges(), graph.feature_dim()));
    for (t, (mut row, &(i, j))) in features
        .axis_iter_mut(Axis(0))
        .zip(graph.edges())
        .enumerate()
    {
        debug_assert_eq!(incidence.row(t), &[i, j]);
        let (xi, xj) = (x.row(i), x.row(j));
        for d in 0..row.len() {
            row[d] = 0.5 * (xi[d] + xj[d]);
        }
    }
    Ok(DualHypergraph {
        incidence,
        features,
    })
}

/// All nodes at shortest-path distance 1..=k from `v`, ascending.
pub fn k_hop_neighbors(graph: &AttributedGraph, v: usize, k: usize) -> Vec<usize> {
    let mut seen: HashSet<usize> = HashSet::new();
    seen.insert(v);
    let mut frontier = vec![v];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut next = Vec::new();
        for &u in &frontier {
            for &w in graph.neighbors(u) {
                if seen.insert(w) {
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        out.extend_from_slice(&next);
        frontier = next;
    }
    out.sort_unstable();
    out
}
