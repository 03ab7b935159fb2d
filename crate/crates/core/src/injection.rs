//! Synthetic anomaly injection and the anomaly-correlation measure.
//!
//! Structural anomalies are planted as dense cliques; attributive anomalies
//! get the features of a distant node plus a few edges to distant nodes. Both
//! label their nodes and the edges they add. A third generator controls how
//! strongly node and edge anomalies co-occur.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionConfig {
    /// Nodes per clique, also the per-round attributive count.
    pub clique_size: usize,
    /// Number of cliques / attributive rounds.
    pub clique_count: usize,
    /// Candidate pool size drawn twice per attributive node.
    pub candidate_pool: usize,
    /// Far edges added per attributive node.
    pub attr_edge_count: usize,
    pub seed: u64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            clique_size: 15,
            clique_count: 1,
            candidate_pool: 50,
            attr_edge_count: 2,
            seed: 0,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clique_size < 2 {
            return Err(Error::InvalidConfig("clique_size must be at least 2".into()));
        }
        if self.candidate_pool == 0 {
            return Err(Error::InvalidConfig("candidate_pool must be at least 1".into()));
        }
        if self.attr_edge_count > self.candidate_pool {
            return Err(Error::InvalidConfig(format!(
                "attr_edge_count {} exceeds candidate_pool {}",
                self.attr_edge_count, self.candidate_pool
            )));
        }
        Ok(())
    }

    pub fn anomalies_per_type(&self) -> usize {
        self.clique_size * self.clique_count
    }
}

/// What an injection run changed. Edge ids refer to the returned graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub injected_node_ids: Vec<usize>,
    pub injected_edge_ids: Vec<usize>,
    pub structural_nodes: Vec<usize>,
    pub attributive_nodes: Vec<usize>,
    pub structural_edges: usize,
    pub attributive_edges: usize,
    /// Achieved anomaly correlation, when defined.
    pub anomaly_correlation: Option<f64>,
}

fn labels_or_zero(graph: &AttributedGraph) -> (Vec<u8>, Vec<u8>) {
    (
        graph
            .node_labels()
            .map(<[u8]>::to_vec)
            .unwrap_or_else(|| vec![0; graph.num_nodes()]),
        graph
            .edge_labels()
            .map(<[u8]>::to_vec)
            .unwrap_or_else(|| vec![0; graph.num_edges()]),
    )
}

/// Pairs (canonical) for all currently labeled-anomalous edges.
fn anomalous_pairs(graph: &AttributedGraph) -> Vec<(usize, usize)> {
    match graph.edge_labels() {
        Some(l) => graph
            .edges()
            .iter()
            .zip(l)
            .filter(|(_, &y)| y == 1)
            .map(|(&e, _)| e)
            .collect(),
        None => Vec::new(),
    }
}

fn ids_of(graph: &AttributedGraph, pairs: &[(usize, usize)]) -> Vec<usize> {
    let mut ids: Vec<usize> = pairs
        .iter()
        .filter_map(|&(a, b)| graph.edge_id(a, b))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Plants `q` cliques of `n_p` nodes drawn without replacement.
pub fn inject_structural<R: Rng + ?Sized>(
    graph: &AttributedGraph,
    cfg: &InjectionConfig,
    rng: &mut R,
) -> Result<(AttributedGraph, InjectionReport)> {
    cfg.validate()?;
    let need = cfg.anomalies_per_type();
    let n = graph.num_nodes();
    if n < need {
        return Err(Error::Insufficient(format!(
            "{need} clique nodes requested from a {n}-node graph"
        )));
    }
    let chosen: Vec<usize> = sample(rng, n, need).into_vec();
    let mut pairs = Vec::new();
    for clique in chosen.chunks(cfg.clique_size) {
        for (i, &a) in clique.iter().enumerate() {
            for &b in &clique[i + 1..] {
                pairs.push((a.min(b), a.max(b)));
            }
        }
    }
    let (mut node_labels, _) = labels_or_zero(graph);
    for &v in &chosen {
        node_labels[v] = 1;
    }
    let (out, added) = graph.with_added_edges(&pairs, 1)?;
    let out = out.with_node_labels(node_labels)?;
    let mut structural_nodes = chosen;
    structural_nodes.sort_unstable();
    Ok((
        out,
        InjectionReport {
            injected_node_ids: structural_nodes.clone(),
            structural_edges: added.len(),
            injected_edge_ids: added,
            structural_nodes,
            ..Default::default()
        },
    ))
}

fn sq_dist(a: ArrayView1<f32>, b: ArrayView1<f32>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Members of `candidates` sorted by decreasing distance from `reference`;
/// equal distances keep candidate order.
fn by_distance_desc(features: &Array2<f32>, reference: usize, candidates: &[usize]) -> Vec<usize> {
    let r = features.row(reference);
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&c| (sq_dist(r, features.row(c)), c))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().map(|(_, c)| c).collect()
}

/// One attributive anomaly with explicit candidate sets.
///
/// Returns the new feature row source (farthest member of `feature_pool`) and
/// the `s` farthest members of `edge_pool`. Distances use `snapshot`.
pub fn attributive_choice(
    snapshot: &Array2<f32>,
    node: usize,
    feature_pool: &[usize],
    edge_pool: &[usize],
    s: usize,
) -> Result<(usize, Vec<usize>)> {
    if feature_pool.is_empty() || edge_pool.len() < s {
        return Err(Error::Insufficient("attributive candidate pools too small".into()));
    }
    let source = by_distance_desc(snapshot, node, feature_pool)[0];
    let mut far = by_distance_desc(snapshot, node, edge_pool);
    far.truncate(s);
    Ok((source, far))
}

/// Draws `2k` distinct nodes other than `node`.
fn draw_candidates<R: Rng + ?Sized>(n: usize, node: usize, k: usize, rng: &mut R) -> Vec<usize> {
    // Sample from n-1 slots and skip over `node`, which is the same as
    // redrawing any hit on it.
    sample(rng, n - 1, 2 * k)
        .into_iter()
        .map(|i| if i >= node { i + 1 } else { i })
        .collect()
}

/// Swaps features of `n_p * q` fresh nodes for those of distant nodes and
/// wires each to `s` distant nodes.
pub fn inject_attributive<R: Rng + ?Sized>(
    graph: &AttributedGraph,
    cfg: &InjectionConfig,
    rng: &mut R,
) -> Result<(AttributedGraph, InjectionReport)> {
    cfg.validate()?;
    let need = cfg.anomalies_per_type();
    let n = graph.num_nodes();
    let (mut node_labels, _) = labels_or_zero(graph);
    let pool: Vec<usize> = (0..n).filter(|&v| node_labels[v] == 0).collect();
    let already = n - pool.len();
    if n < already + need + 2 * cfg.candidate_pool || pool.len() < need {
        return Err(Error::Insufficient(format!(
            "{need} attributive anomalies with {} candidates need more than {n} nodes",
            2 * cfg.candidate_pool
        )));
    }
    let chosen: Vec<usize> = sample(rng, pool.len(), need)
        .into_iter()
        .map(|i| pool[i])
        .collect();

    let snapshot = graph.features().clone();
    let mut features = snapshot.clone();
    let mut pairs = Vec::new();
    for &v in &chosen {
        let cands = draw_candidates(n, v, cfg.candidate_pool, rng);
        let (feature_pool, edge_pool) = cands.split_at(cfg.candidate_pool);
        let (source, far) =
            attributive_choice(&snapshot, v, feature_pool, edge_pool, cfg.attr_edge_count)?;
        features.row_mut(v).assign(&snapshot.row(source));
        pairs.extend(far.into_iter().map(|u| (v.min(u), v.max(u))));
        node_labels[v] = 1;
    }
    let (out, added) = graph.with_added_edges(&pairs, 1)?;
    let out = out.with_features(features)?.with_node_labels(node_labels)?;
    let mut attributive_nodes = chosen;
    attributive_nodes.sort_unstable();
    Ok((
        out,
        InjectionReport {
            injected_node_ids: attributive_nodes.clone(),
            attributive_edges: added.len(),
            injected_edge_ids: added,
            attributive_nodes,
            ..Default::default()
        },
    ))
}

/// Structural then attributive injection on disjoint node pools, seeded from
/// `cfg.seed`.
pub fn inject(graph: &AttributedGraph, cfg: &InjectionConfig) -> Result<(AttributedGraph, InjectionReport)> {
    let base = graph.clone().without_labels();
    let mut r = rng::stream(cfg.seed, Stream::Inject, &[0]);
    let (g1, s) = inject_structural(&base, cfg, &mut r)?;
    let structural_pairs = anomalous_pairs(&g1);
    let (g2, a) = inject_attributive(&g1, cfg, &mut r)?;
    let mut nodes: Vec<usize> = s.structural_nodes.iter().chain(&a.attributive_nodes).copied().collect();
    nodes.sort_unstable();
    let mut edge_ids = ids_of(&g2, &structural_pairs);
    edge_ids.extend(&a.injected_edge_ids);
    edge_ids.sort_unstable();
    edge_ids.dedup();
    let report = InjectionReport {
        injected_node_ids: nodes,
        injected_edge_ids: edge_ids,
        structural_nodes: s.structural_nodes,
        attributive_nodes: a.attributive_nodes,
        structural_edges: s.structural_edges,
        attributive_edges: a.attributive_edges,
        anomaly_correlation: anomaly_correlation(&g2).ok(),
    };
    Ok((g2, report))
}

/// Mean over anomalous nodes of the anomalous fraction of their incident edges.
pub fn anomaly_correlation(graph: &AttributedGraph) -> Result<f64> {
    let (Some(nodes), Some(edges)) = (graph.node_labels(), graph.edge_labels()) else {
        return Err(Error::InvalidGraph("anomaly correlation needs node and edge labels".into()));
    };
    let anomalous: Vec<usize> = (0..graph.num_nodes()).filter(|&v| nodes[v] == 1).collect();
    if anomalous.is_empty() {
        return Err(Error::InvalidGraph("anomaly correlation is undefined without anomalous nodes".into()));
    }
    let mut total = 0.0;
    for &v in &anomalous {
        let inc = graph.incident_edges(v);
        if inc.is_empty() {
            log::warn!("anomalous node {v} has degree 0; contributes 0 to the correlation");
            continue;
        }
        let hits = inc.iter().filter(|&&e| edges[e] == 1).count();
        total += hits as f64 / inc.len() as f64;
    }
    Ok(total / anomalous.len() as f64)
}

/// Settings for the correlation-controlled generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Number of anomalous nodes.
    pub anomalies: usize,
    pub candidate_pool: usize,
    /// Far edges injected per anomalous node.
    pub attr_edge_count: usize,
    /// Requested anomaly correlation in `[0, 1]`.
    pub level: f64,
    pub seed: u64,
}

/// Plants node and edge anomalies whose coupling is controlled by `level`.
///
/// Every anomalous node gets distant features. Each of its `s` far edges is
/// anchored at the anomalous node with probability `level`, otherwise at a
/// random normal node (keeping the far-feature endpoint choice). All injected
/// edges are anomalous. Finally the incident-edge labels of each anomalous
/// node are set so that `round(level * degree)` of them are anomalous,
/// preferring injected edges, while node labels stay fixed.
pub fn inject_with_correlation(
    graph: &AttributedGraph,
    cfg: &CorrelationConfig,
) -> Result<(AttributedGraph, InjectionReport)> {
    if !(0.0..=1.0).contains(&cfg.level) {
        return Err(Error::InvalidConfig(format!("correlation level {} not in [0, 1]", cfg.level)));
    }
    if cfg.anomalies == 0 || cfg.candidate_pool == 0 || cfg.attr_edge_count > cfg.candidate_pool {
        return Err(Error::InvalidConfig("invalid correlation generator sizes".into()));
    }
    let n = graph.num_nodes();
    if n < 2 * cfg.anomalies + 2 * cfg.candidate_pool {
        return Err(Error::Insufficient(format!("{n} nodes are too few for the correlation generator")));
    }
    let mut r = rng::stream(cfg.seed, Stream::Inject, &[1]);
    let base = graph.clone().without_labels();
    let chosen: Vec<usize> = sample(&mut r, n, cfg.anomalies).into_vec();
    let is_anomalous: HashSet<usize> = chosen.iter().copied().collect();
    let normals: Vec<usize> = (0..n).filter(|v| !is_anomalous.contains(v)).collect();

    let snapshot = base.features().clone();
    let mut features = snapshot.clone();
    let mut pairs = Vec::new();
    for &v in &chosen {
        let cands = draw_candidates(n, v, cfg.candidate_pool, &mut r);
        let (feature_pool, edge_pool) = cands.split_at(cfg.candidate_pool);
        let (source, far) =
            attributive_choice(&snapshot, v, feature_pool, edge_pool, cfg.attr_edge_count)?;
        features.row_mut(v).assign(&snapshot.row(source));
        for u in far {
            let anchor = if r.random::<f64>() < cfg.level {
                v
            } else {
                normals[r.random_range(0..normals.len())]
            };
            if anchor != u {
                pairs.push((anchor.min(u), anchor.max(u)));
            }
        }
    }
    let (g, added) = base.with_added_edges(&pairs, 1)?;
    let added_set: HashSet<usize> = added.iter().copied().collect();
    let mut edge_labels = g.edge_labels().map(<[u8]>::to_vec).unwrap_or_default();
    let mut node_labels = vec![0u8; n];
    for &v in &chosen {
        node_labels[v] = 1;
    }
    // Edges touching anomalous nodes are relabeled; others keep their label.
    let mut touched = vec![false; g.num_edges()];
    let mut sorted_chosen = chosen.clone();
    sorted_chosen.sort_unstable();
    for &v in &sorted_chosen {
        for &e in g.incident_edges(v) {
            if !touched[e] {
                edge_labels[e] = 0;
            }
        }
    }
    for &v in &sorted_chosen {
        let inc = g.incident_edges(v);
        let want = (cfg.level * inc.len() as f64).round() as usize;
        let mut order: Vec<usize> = inc.to_vec();
        order.shuffle(&mut r);
        order.sort_by_key(|e| !added_set.contains(e));
        let have = inc.iter().filter(|&&e| edge_labels[e] == 1).count();
        let mut need = want.saturating_sub(have);
        for &e in &order {
            if need == 0 {
                break;
            }
            if edge_labels[e] == 0 && !touched[e] {
                edge_labels[e] = 1;
                touched[e] = true;
                need -= 1;
            }
        }
        for &e in inc {
            touched[e] = true;
        }
    }
    let out = g
        .with_features(features)?
        .with_node_labels(node_labels)?
        .with_edge_labels(edge_labels)?;
    let edge_ids: Vec<usize> = out
        .edge_labels()
        .expect("set above")
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == 1)
        .map(|(i, _)| i)
        .collect();
    let report = InjectionReport {
        injected_node_ids: sorted_chosen.clone(),
        injected_edge_ids: edge_ids,
        structural_nodes: Vec::new(),
        attributive_nodes: sorted_chosen,
        structural_edges: 0,
        attributive_edges: added.len(),
        anomaly_correlation: anomaly_correlation(&out).ok(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty(n: usize, d: usize) -> AttributedGraph {
        let x = Array2::from_shape_fn((n, d), |(i, j)| (i * 7 + j * 3) as f32 * 0.1);
        build_graph(&[], x).unwrap()
    }

    fn cfg(n_p: usize, q: usize) -> InjectionConfig {
        InjectionConfig {
            clique_size: n_p,
            clique_count: q,
            candidate_pool: 3,
            attr_edge_count: 1,
            seed: 0,
        }
    }

    #[test]
    fn triangle_clique() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let (g, rep) = inject_structural(&empty(20, 2), &cfg(3, 1), &mut r).unwrap();
        assert_eq!(rep.structural_nodes.len(), 3);
        assert_eq!(rep.injected_edge_ids.len(), 3);
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.node_labels().unwrap().iter().filter(|&&y| y == 1).count(), 3);
        assert_eq!(anomaly_correlation(&g).unwrap(), 1.0);
    }

    #[test]
    fn fifteen_clique_has_105_edges() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let (g, rep) = inject_structural(&empty(200, 2), &cfg(15, 1), &mut r).unwrap();
        assert_eq!(rep.structural_edges, 105);
        assert_eq!(g.num_edges(), 105);
    }

    #[test]
    fn existing_clique_edge_keeps_label() {
        let x = Array2::zeros((3, 1));
        let g = build_graph(&[(0, 1)], x).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let (g, rep) = inject_structural(&g, &cfg(3, 1), &mut r).unwrap();
        assert_eq!(rep.structural_edges, 2);
        assert_eq!(g.edge_labels().unwrap(), &[0, 1, 1]);
    }

    #[test]
    fn insufficient_nodes() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            inject_structural(&empty(5, 1), &cfg(3, 2), &mut r),
            Err(Error::Insufficient(_))
        ));
        assert!(matches!(
            inject_attributive(&empty(8, 1), &cfg(3, 1), &mut r),
            Err(Error::Insufficient(_))
        ));
    }

    #[test]
    fn max_distance_choice() {
        let x = array![[0.0f32], [1.0], [2.0], [10.0]];
        let (src, far) = attributive_choice(&x, 0, &[3], &[1, 2], 1).unwrap();
        assert_eq!(src, 3);
        assert_eq!(far, vec![2]);
        let (_, both) = attributive_choice(&x, 0, &[3], &[1, 2], 2).unwrap();
        assert_eq!(both.len(), 2);
    }

    #[test]
    fn attributive_pools_are_disjoint_from_structural() {
        let c = InjectionConfig {
            clique_size: 4,
            clique_count: 2,
            candidate_pool: 5,
            attr_edge_count: 2,
            seed: 9,
        };
        let (g, rep) = inject(&empty(60, 3), &c).unwrap();
        assert_eq!(rep.injected_node_ids.len(), 16);
        let s: HashSet<_> = rep.structural_nodes.iter().collect();
        assert!(rep.attributive_nodes.iter().all(|v| !s.contains(v)));
        assert_eq!(rep.structural_edges, 12);
        assert_eq!(g.num_edges(), rep.structural_edges + rep.attributive_edges);
        assert_eq!(
            g.edge_labels().unwrap().iter().filter(|&&y| y == 1).count(),
            rep.injected_edge_ids.len()
        );
        for &e in &rep.injected_edge_ids {
            assert_eq!(g.edge_labels().unwrap()[e], 1);
        }
    }

    #[test]
    fn correlation_examples() {
        let x = Array2::zeros((4, 1));
        let g = build_graph(&[(0, 1), (0, 2), (2, 3)], x)
            .unwrap()
            .with_node_labels(vec![1, 0, 0, 0])
            .unwrap()
            .with_edge_labels(vec![1, 0, 0])
            .unwrap();
        assert_eq!(anomaly_correlation(&g).unwrap(), 0.5);
        let none = g.clone().with_node_labels(vec![0; 4]).unwrap();
        assert!(anomaly_correlation(&none).is_err());
        let isolated = build_graph(&[(1, 2)], Array2::zeros((3, 1)))
            .unwrap()
            .with_node_labels(vec![1, 1, 0])
            .unwrap()
            .with_edge_labels(vec![1])
            .unwrap();
        assert_eq!(anomaly_correlation(&isolated).unwrap(), 0.5);
    }

    #[test]
    fn correlation_generator_hits_extremes() {
        let g = crate::synth::erdos_renyi(&crate::synth::SynthConfig {
            num_nodes: 200,
            edge_prob: 0.05,
            feature_dim: 8,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        for level in [0.0, 1.0] {
            let (out, rep) = inject_with_correlation(
                &g,
                &CorrelationConfig {
                    anomalies: 10,
                    candidate_pool: 10,
                    attr_edge_count: 2,
                    level,
                    seed: 1,
                },
            )
            .unwrap();
            assert_eq!(rep.anomaly_correlation, Some(level));
            assert!(out.edge_labels().unwrap().contains(&1));
        }
    }
}
