//! Per-target view construction: target sampling, fixed-size subgraph
//! extraction, dual transform, hypergraph augmentation and anonymization.

use std::path::Path;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, dual_transform, k_hop_neighbors, AttributedGraph, DualHypergraph, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Probability that a dual node's feature row is zeroed.
    pub feature_mask_prob: f64,
    /// Probability that a single dual-node/hyperedge membership is dropped.
    pub hyperedge_drop_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            feature_mask_prob: 0.2,
            hyperedge_drop_prob: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("feature_mask_prob", self.feature_mask_prob),
            ("hyperedge_drop_prob", self.hyperedge_drop_prob),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} not in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgraphConfig {
    /// Neighborhood radius `k` the context nodes are drawn from.
    pub hops: usize,
    /// Number of context draws `K`; every subgraph has `K + 1` slots.
    pub size: usize,
    /// Redraws allowed before a neighbor is forced into slot 1.
    pub max_redraws: usize,
}

impl Default for SubgraphConfig {
    fn default() -> Self {
        Self {
            hops: 2,
            size: 12,
            max_redraws: 3,
        }
    }
}

impl SubgraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 || self.size == 0 {
            return Err(Error::InvalidConfig(
                "subgraph hops and size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A sampled target node and all of its incident edge ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub node: usize,
    pub edges: Vec<usize>,
}

fn scorable_nodes(graph: &AttributedGraph) -> Result<Vec<usize>> {
    let nodes: Vec<usize> = (0..graph.num_nodes())
        .filter(|&v| graph.degree(v) > 0)
        .collect();
    if nodes.is_empty() {
        return Err(Error::InvalidGraph("every node is isolated".into()));
    }
    let skipped = graph.num_nodes() - nodes.len();
    if skipped > 0 {
        log::debug!("{skipped} isolated nodes excluded from target sampling");
    }
    Ok(nodes)
}

/// Draws `batch_size` distinct non-isolated targets uniformly without replacement.
pub fn sample_target_batch<R: Rng + ?Sized>(
    graph: &AttributedGraph,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Target>> {
    let pool = scorable_nodes(graph)?;
    if batch_size > pool.len() {
        return Err(Error::Insufficient(format!(
            "batch of {batch_size} requested but only {} non-isolated nodes",
            pool.len()
        )));
    }
    let picked = rand::seq::index::sample(rng, pool.len(), batch_size);
    Ok(picked
        .into_iter()
        .map(|i| {
            let node = pool[i];
            Target {
                node,
                edges: graph.incident_edges(node).to_vec(),
            }
        })
        .collect())
}

/// One epoch's worth of batches: a shuffled partition of the non-isolated nodes.
pub fn epoch_batches<R: Rng + ?Sized>(
    graph: &AttributedGraph,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut nodes = scorable_nodes(graph)?;
    nodes.shuffle(rng);
    Ok(nodes.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Enclosing subgraph of a target before anonymization.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub target: usize,
    /// Original node id per slot; slot 0 is the target.
    pub slots: Vec<usize>,
    /// Induced graph over slots with copied features.
    pub graph: AttributedGraph,
    /// Original edge id per local edge.
    pub edge_ids: Vec<usize>,
    /// Local edges `0..num_targets` are the target edges (incident to slot 0).
    pub num_targets: usize,
}

impl Subgraph {
    pub fn num_nodes(&self) -> usize {
        self.slots.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_ids.len()
    }

    pub fn target_edges(&self) -> &[usize] {
        &self.edge_ids[..self.num_targets]
    }
}

/// Builds the induced slot graph.
///
/// Slots are adjacent when their originals are. Duplicate slots of one
/// original are not adjacent to each other, and only the first slot of a given
/// neighbor connects to the target, so every target edge appears once.
pub fn induced_subgraph(graph: &AttributedGraph, slots: Vec<usize>) -> Result<Subgraph> {
    let target = slots[0];
    let mut pairs = Vec::new();
    let mut global = Vec::new();
    let mut linked_to_target: Vec<usize> = Vec::new();
    for a in 0..slots.len() {
        for b in a + 1..slots.len() {
            let (u, w) = (slots[a], slots[b]);
            if u == w {
                continue;
            }
            let Some(id) = graph.edge_id(u, w) else {
                continue;
            };
            if a == 0 {
                if linked_to_target.contains(&w) {
                    continue;
                }
                linked_to_target.push(w);
            }
            pairs.push((a, b));
            global.push(id);
        }
    }
    // `pairs` is produced in canonical (a, b) order already; build_graph keeps it.
    let features = graph.features().select(ndarray::Axis(0), &slots);
    let local = build_graph(&pairs, features)?;
    debug_assert_eq!(local.edges(), pairs.as_slice());
    Ok(Subgraph {
        target,
        slots,
        graph: local,
        edge_ids: global,
        num_targets: linked_to_target.len(),
    })
}

/// Target slot followed by `K` draws, with replacement, from the `k`-hop
/// neighborhood. Draws yielding no target edge are repeated up to
/// `max_redraws` times; after that a random direct neighbor is forced into
/// slot 1.
pub fn extract_subgraph<R: Rng + ?Sized>(
    graph: &AttributedGraph,
    target: usize,
    cfg: &SubgraphConfig,
    rng: &mut R,
) -> Result<Subgraph> {
    cfg.validate()?;
    let pool = k_hop_neighbors(graph, target, cfg.hops);
    if pool.is_empty() {
        return Err(Error::InvalidGraph(format!(
            "target {target} has an empty {}-hop neighborhood",
            cfg.hops
        )));
    }
    let mut slots = vec![target; cfg.size + 1];
    for _ in 0..=cfg.max_redraws {
        for slot in slots.iter_mut().skip(1) {
            *slot = pool[rng.random_range(0..pool.len())];
        }
        let sub = induced_subgraph(graph, slots.clone())?;
        if sub.num_targets > 0 {
            return Ok(sub);
        }
    }
    let direct = graph.neighbors(target);
    slots[1] = direct[rng.random_range(0..direct.len())];
    let sub = induced_subgraph(graph, slots)?;
    debug_assert!(sub.num_targets > 0);
    Ok(sub)
}

/// Γ1 (row masking) followed by Γ2 (membership dropping) on a dual hypergraph.
///
/// The first `protected` dual nodes are the target edges: their features and
/// memberships are left alone. A membership is never dropped if it is the last
/// one its dual node has.
pub fn augment_hypergraph<R: Rng + ?Sized>(
    dual: &DualHypergraph,
    cfg: &AugmentConfig,
    protected: usize,
    rng: &mut R,
) -> DualHypergraph {
    let mut features = dual.features.clone();
    for t in protected..dual.num_dual_nodes() {
        if rng.random::<f64>() < cfg.feature_mask_prob {
            features.row_mut(t).fill(0.0);
        }
    }
    let mut rows = Vec::with_capacity(dual.num_dual_nodes());
    for t in 0..dual.num_dual_nodes() {
        let members = dual.incidence.row(t);
        if t < protected {
            rows.push(members.to_vec());
            continue;
        }
        let mut kept = Vec::with_capacity(members.len());
        let mut remaining = members.len();
        for &h in members {
            let drop = rng.random::<f64>() < cfg.hyperedge_drop_prob;
            if drop && remaining > 1 {
                remaining -= 1;
            } else {
                kept.push(h);
            }
        }
        rows.push(kept);
    }
    DualHypergraph {
        incidence: Pattern::from_rows(dual.num_hyperedges(), rows).expect("same columns"),
        features,
    }
}

/// Zeroes the target row (slot 0) and re-attaches the target's features as an
/// extra isolated row whose only adjacency entry is its own diagonal.
pub fn anonymize_node_view(sub: &Subgraph) -> (Array2<f32>, Pattern) {
    let x = sub.graph.features();
    let n = sub.num_nodes();
    let mut out = Array2::<f32>::zeros((n + 1, x.ncols()));
    out.slice_mut(s![1..n, ..]).assign(&x.slice(s![1..n, ..]));
    out.row_mut(n).assign(&x.row(0));
    let adj = sub.graph.adjacency();
    let mut rows: Vec<Vec<usize>> = (0..n).map(|i| adj.row(i).to_vec()).collect();
    rows.push(vec![n]);
    (out, Pattern::from_rows(n + 1, rows).expect("in range"))
}

/// Zeroes the first `num_targets` dual-node rows and appends them as isolated
/// dual nodes, each alone in a fresh hyperedge.
pub fn anonymize_edge_view(dual: &DualHypergraph, num_targets: usize) -> Result<(Array2<f32>, Pattern)> {
    if num_targets == 0 {
        return Err(Error::InvalidGraph("edge view needs at least one target edge".into()));
    }
    let m = dual.num_dual_nodes();
    let n = dual.num_hyperedges();
    if num_targets > m {
        return Err(Error::Shape(format!("{num_targets} targets but only {m} dual nodes")));
    }
    let x = &dual.features;
    let mut out = Array2::<f32>::zeros((m + num_targets, x.ncols()));
    out.slice_mut(s![num_targets..m, ..])
        .assign(&x.slice(s![num_targets..m, ..]));
    out.slice_mut(s![m.., ..]).assign(&x.slice(s![..num_targets, ..]));
    let mut rows: Vec<Vec<usize>> = (0..m).map(|t| dual.incidence.row(t).to_vec()).collect();
    rows.extend((0..num_targets).map(|i| vec![n + i]));
    Ok((out, Pattern::from_rows(n + num_targets, rows)?))
}

/// One training/scoring instance for a single target node.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub target: usize,
    /// Original ids of the target edges, in dual-node order.
    pub target_edges: Vec<usize>,
    /// Original node id per subgraph slot.
    pub slots: Vec<usize>,
    /// Original edge id per dual node (length `M_s`).
    pub dual_edge_ids: Vec<usize>,
    /// `(N_s + 1) x D`.
    pub graph_features: Array2<f32>,
    /// `(N_s + 1) x (N_s + 1)`.
    pub graph_adjacency: Pattern,
    /// `(M_s + M_tar) x D`.
    pub hyper_features: Array2<f32>,
    /// `(M_s + M_tar) x (N_s + M_tar)`.
    pub hyper_incidence: Pattern,
}

impl ViewPair {
    pub fn num_sub_nodes(&self) -> usize {
        self.slots.len()
    }

    pub fn num_sub_edges(&self) -> usize {
        self.dual_edge_ids.len()
    }

    pub fn num_targets(&self) -> usize {
        self.target_edges.len()
    }

    /// Checks every structural invariant of an emitted view.
    pub fn validate(&self) -> Result<()> {
        let (ns, ms, mt) = (self.num_sub_nodes(), self.num_sub_edges(), self.num_targets());
        let d = self.graph_features.ncols();
        let bad = |msg: &str| Err(Error::InvalidGraph(format!("view of {}: {msg}", self.target)));
        if mt == 0 {
            return bad("no target edges");
        }
        if self.graph_features.dim() != (ns + 1, d) {
            return bad("graph feature shape");
        }
        if self.graph_adjacency.nrows() != ns + 1 || self.graph_adjacency.ncols() != ns + 1 {
            return bad("adjacency shape");
        }
        if self.graph_features.row(0).iter().any(|&v| v != 0.0) {
            return bad("target slot not anonymized");
        }
        if self.graph_adjacency.row(ns) != [ns] {
            return bad("appended target row not isolated");
        }
        if (0..ns).any(|i| self.graph_adjacency.contains(i, ns)) {
            return bad("appended target column not isolated");
        }
        if self.hyper_features.dim() != (ms + mt, d) {
            return bad("hyper feature shape");
        }
        let inc = &self.hyper_incidence;
        if inc.nrows() != ms + mt || inc.ncols() != ns + mt {
            return bad("incidence shape");
        }
        if (0..mt).any(|i| self.hyper_features.row(i).iter().any(|&v| v != 0.0)) {
            return bad("target edge rows not anonymized");
        }
        for t in 0..ms {
            let row = inc.row(t);
            if row.is_empty() {
                return bad("orphaned dual node");
            }
            if row.iter().any(|&h| h >= ns) {
                return bad("context dual node touches appended block");
            }
        }
        for i in 0..mt {
            if inc.row(ms + i) != [ns + i] {
                return bad("appended block is not the identity");
            }
        }
        if self.slots[0] != self.target {
            return bad("slot 0 is not the target");
        }
        Ok(())
    }
}

/// Full view construction for one target.
pub fn build_view_pair<R: Rng + ?Sized>(
    graph: &AttributedGraph,
    target: usize,
    sub_cfg: &SubgraphConfig,
    aug_cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<ViewPair> {
    let sub = extract_subgraph(graph, target, sub_cfg, rng)?;
    let (graph_features, graph_adjacency) = anonymize_node_view(&sub);
    let dual = dual_transform(&sub.graph)?;
    let augmented = augment_hypergraph(&dual, aug_cfg, sub.num_targets, rng);
    let (hyper_features, hyper_incidence) = anonymize_edge_view(&augmented, sub.num_targets)?;
    Ok(ViewPair {
        target,
        target_edges: sub.target_edges().to_vec(),
        slots: sub.slots,
        dual_edge_ids: sub.edge_ids,
        graph_features,
        graph_adjacency,
        hyper_features,
        hyper_incidence,
    })
}

/// Writes a view as CSV matrices for inspection.
pub fn dump_view(view: &ViewPair, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, m: &Array2<f32>| -> Result<()> {
        let path = dir.join(name);
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        for row in m.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| Error::format(&path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    };
    write("graph_features.csv", &view.graph_features)?;
    write("graph_adjacency.csv", &view.graph_adjacency.to_dense())?;
    write("hyper_features.csv", &view.hyper_features)?;
    write("hyper_incidence.csv", &view.hyper_incidence.to_dense())?;
    crate::io::write_json(
        &dir.join("view.json"),
        &serde_json::json!({
            "target": view.target,
            "target_edges": view.target_edges,
            "slots": view.slots,
            "dual_edge_ids": view.dual_edge_ids,
        }),
    )
}
