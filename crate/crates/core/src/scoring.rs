//! Context-swapped anomaly scores and their gradients.
//!
//! A node target is compared with the edge-side contexts (`z_p`, `z_s`) and
//! each edge target with the node-side contexts (`h_p`, `h_s`):
//! `S = (alpha + beta) - alpha * cos(t, patch) - beta * cos(t, readout)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{cast, cosine_similarity, cosine_similarity_backward, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    /// Patch-level weight.
    pub alpha: f64,
    /// Context-level weight.
    pub beta: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { alpha: 0.8, beta: 0.6 }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| (0.0..=1.0).contains(&w);
        if !ok(self.alpha) || !ok(self.beta) {
            return Err(Error::InvalidConfig(format!(
                "score weights ({}, {}) must lie in [0, 1]",
                self.alpha, self.beta
            )));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::InvalidConfig("alpha and beta cannot both be zero".into()));
        }
        Ok(())
    }

    /// Largest attainable score.
    pub fn max_score(&self) -> f64 {
        2.0 * (self.alpha + self.beta)
    }
}

fn combine(w: &ScoreWeights, c_patch: f64, c_context: f64) -> f64 {
    w.alpha * (1.0 - c_patch) + w.beta * (1.0 - c_context)
}

pub fn node_score<T: Real>(h_t: ArrayView1<T>, z_p: ArrayView1<T>, z_s: ArrayView1<T>, w: &ScoreWeights) -> f64 {
    combine(w, cosine_similarity(h_t, z_p), cosine_similarity(h_t, z_s))
}

/// One score per row of `z_t`; the graph-side contexts are shared by all rows.
pub fn edge_scores<T: Real>(
    z_t: ArrayView2<T>,
    h_p: ArrayView1<T>,
    h_s: ArrayView1<T>,
    w: &ScoreWeights,
) -> Vec<f64> {
    z_t.rows()
        .into_iter()
        .map(|row| combine(w, cosine_similarity(row, h_p), cosine_similarity(row, h_s)))
        .collect()
}

/// Score and its gradient with respect to the target vector and both contexts.
#[derive(Debug, Clone)]
pub struct ScoreGrad<T> {
    pub score: f64,
    pub d_target: Array1<T>,
    pub d_patch: Array1<T>,
    pub d_context: Array1<T>,
}

/// `S(t, patch, context)` with gradients, each scaled by `upstream`.
pub fn score_backward<T: Real>(
    target: ArrayView1<T>,
    patch: ArrayView1<T>,
    context: ArrayView1<T>,
    w: &ScoreWeights,
    upstream: f64,
) -> ScoreGrad<T> {
    let (c1, dt1, dp) = cosine_similarity_backward(target, patch);
    let (c2, dt2, dc) = cosine_similarity_backward(target, context);
    let ka: T = cast(-w.alpha * upstream);
    let kb: T = cast(-w.beta * upstream);
    ScoreGrad {
        score: combine(w, c1, c2),
        d_target: dt1 * ka + dt2 * kb,
        d_patch: dp * ka,
        d_context: dc * kb,
    }
}

/// Running per-object means of repeated score evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    node_sum: Vec<f64>,
    node_count: Vec<u32>,
    edge_sum: Vec<f64>,
    edge_count: Vec<u32>,
    pub skipped_isolated: Vec<usize>,
}

/// On-disk form of a [`ScoreTable`]; unscored objects are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresFile {
    pub node_scores: Vec<Option<f64>>,
    pub edge_scores: Vec<Option<f64>>,
    pub skipped_isolated: Vec<usize>,
}

impl ScoreTable {
    pub fn new(num_nodes: usize, num_edges: usize) -> Self {
        Self {
            node_sum: vec![0.0; num_nodes],
            node_count: vec![0; num_nodes],
            edge_sum: vec![0.0; num_edges],
            edge_count: vec![0; num_edges],
            skipped_isolated: Vec::new(),
        }
    }

    pub fn add_node(&mut self, v: usize, s: f64) {
        self.node_sum[v] += s;
        self.node_count[v] += 1;
    }

    pub fn add_edge(&mut self, e: usize, s: f64) {
        self.edge_sum[e] += s;
        self.edge_count[e] += 1;
    }

    pub fn node_score(&self, v: usize) -> Option<f64> {
        (self.node_count[v] > 0).then(|| self.node_sum[v] / f64::from(self.node_count[v]))
    }

    pub fn edge_score(&self, e: usize) -> Option<f64> {
        (self.edge_count[e] > 0).then(|| self.edge_sum[e] / f64::from(self.edge_count[e]))
    }

    pub fn node_count(&self, v: usize) -> u32 {
        self.node_count[v]
    }

    pub fn edge_count(&self, e: usize) -> u32 {
        self.edge_count[e]
    }

    pub fn num_nodes(&self) -> usize {
        self.node_sum.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_sum.len()
    }

    pub fn to_file(&self) -> ScoresFile {
        ScoresFile {
            node_scores: (0..self.num_nodes()).map(|v| self.node_score(v)).collect(),
            edge_scores: (0..self.num_edges()).map(|e| self.edge_score(e)).collect(),
            skipped_isolated: self.skipped_isolated.clone(),
        }
    }
}

/// Stacks per-view score gradients into a matrix with the given row layout.
pub(crate) fn scatter_rows<T: Real>(dst: &mut Array2<T>, row: usize, g: &Array1<T>, scale: T) {
    let mut r = dst.row_mut(row);
    r.zip_mut_with(g, |d, &v| *d = *d + v * scale);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const UNIT: ScoreWeights = ScoreWeights { alpha: 1.0, beta: 1.0 };

    #[test]
    fn node_score_examples() {
        let v = array![1.0f64, 2.0, -1.0];
        assert!(node_score(v.view(), v.view(), v.view(), &UNIT).abs() < 1e-12);
        let a = array![1.0f64, 0.0];
        let b = array![0.0f64, 3.0];
        assert!((node_score(a.view(), b.view(), b.view(), &UNIT) - 2.0).abs() < 1e-12);
        let neg = -&v;
        assert!((node_score(v.view(), neg.view(), neg.view(), &UNIT) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn edge_scores_match_loop_and_node_formula() {
        let zt = array![[1.0f64, 2.0], [-0.5, 0.3], [0.0, 1.0]];
        let hp = array![0.4f64, -0.2];
        let hs = array![1.0f64, 1.0];
        let w = ScoreWeights::default();
        let v = edge_scores(zt.view(), hp.view(), hs.view(), &w);
        for (i, row) in zt.rows().into_iter().enumerate() {
            let expect = node_score(row, hp.view(), hs.view(), &w);
            assert!((v[i] - expect).abs() < 1e-12);
        }
        let same = array![[0.3f64, 0.7], [0.3, 0.7]];
        let c = array![0.3f64, 0.7];
        assert!(edge_scores(same.view(), c.view(), c.view(), &w).iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn weights_validation() {
        assert!(ScoreWeights { alpha: 0.0, beta: 0.0 }.validate().is_err());
        assert!(ScoreWeights { alpha: 1.2, beta: 0.0 }.validate().is_err());
        assert!(ScoreWeights::default().validate().is_ok());
    }

    #[test]
    fn table_means() {
        let mut t = ScoreTable::new(2, 1);
        t.add_node(0, 1.0);
        t.add_node(0, 3.0);
        t.add_edge(0, 0.5);
        assert_eq!(t.node_score(0), Some(2.0));
        assert_eq!(t.node_score(1), None);
        let f = t.to_file();
        assert_eq!(f.node_scores, vec![Some(2.0), None]);
        assert_eq!(f.edge_scores, vec![Some(0.5)]);
    }
}
