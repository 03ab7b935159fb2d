//! Graph-view encoder (GCN + predictor + readout) and hypergraph-view encoder
//! (HGNN + readout), with reverse passes.
//!
//! Both encoders are stacks of the same propagation layer
//! `prelu(P · H · W)`; only the fixed propagation operator `P` differs. Views
//! of a batch are stacked into one block-diagonal operator so a whole batch
//! goes through a single sparse product and a single dense product per layer.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graph::Pattern;
use crate::nn::{
    cast, linear_backward, linear_forward, prelu_backward, prelu_forward, Csr, Parameter, Real,
};
use crate::views::ViewPair;

/// Symmetric-normalized adjacency with self-loops, `D^-1/2 (A + I) D^-1/2`.
///
/// An existing diagonal entry (the isolated target slot) becomes 2 before
/// normalization, which still normalizes to exactly 1.
pub fn gcn_propagation<T: Real>(adjacency: &Pattern) -> Result<Csr<T>> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::Shape("adjacency must be square".into()));
    }
    let degree: Vec<f64> = (0..n).map(|i| adjacency.row(i).len() as f64 + 1.0).collect();
    let mut triplets = Vec::with_capacity(adjacency.nnz() + n);
    for (i, &di) in degree.iter().enumerate() {
        triplets.push((i, i, cast::<T>(1.0 / di)));
        for &j in adjacency.row(i) {
            triplets.push((i, j, cast::<T>(1.0 / (di * degree[j]).sqrt())));
        }
    }
    Csr::from_triplets(n, n, triplets)
}

/// Hypergraph propagation `Dv^-1/2 M We De^-1 M^T Dv^-1/2` with `We = I`.
///
/// Rows of `incidence` are hypergraph nodes, columns hyperedges. Empty
/// hyperedges carry no messages and are skipped; an empty row is an error.
pub fn hgnn_propagation<T: Real>(incidence: &Pattern) -> Result<Csr<T>> {
    let n = incidence.nrows();
    let dv = incidence.row_sums();
    if let Some(i) = dv.iter().position(|&d| d == 0) {
        return Err(Error::InvalidGraph(format!("hypergraph node {i} has no hyperedge")));
    }
    let members = incidence.transpose();
    let mut triplets = Vec::new();
    for e in 0..members.nrows() {
        let m = members.row(e);
        if m.is_empty() {
            continue;
        }
        let inv_de = 1.0 / m.len() as f64;
        for &a in m {
            for &b in m {
                let w = inv_de / ((dv[a] * dv[b]) as f64).sqrt();
                triplets.push((a, b, cast::<T>(w)));
            }
        }
    }
    Csr::from_triplets(n, n, triplets)
}

/// One propagation layer: `prelu(P · input · W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropLayer<T> {
    pub weight: Parameter<T>,
    pub slope: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    aggregated: Array2<T>,
    pre_activation: Array2<T>,
}

impl<T: Real> PropLayer<T> {
    pub fn forward(&self, prop: &Csr<T>, input: ArrayView2<T>) -> Result<(Array2<T>, LayerCache<T>)> {
        let aggregated = prop.spmm(input)?;
        let pre_activation = linear_forward(aggregated.view(), &self.weight)?;
        let out = prelu_forward(pre_activation.view(), &self.slope);
        Ok((
            out,
            LayerCache {
                aggregated,
                pre_activation,
            },
        ))
    }

    /// `prop` must be symmetric (both propagation operators are).
    pub fn backward(
        &mut self,
        prop: &Csr<T>,
        cache: &LayerCache<T>,
        upstream: ArrayView2<T>,
        want_input_grad: bool,
    ) -> Result<Option<Array2<T>>> {
        let d_pre = prelu_backward(cache.pre_activation.view(), &mut self.slope, upstream);
        let d_agg = linear_backward(cache.aggregated.view(), &mut self.weight, d_pre.view(), want_input_grad);
        d_agg.map(|d| prop.spmm(d.view())).transpose()
    }
}

/// Stack of propagation layers sharing one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub layers: Vec<PropLayer<T>>,
}

impl<T: Real> Encoder<T> {
    pub fn forward(&self, prop: &Csr<T>, input: ArrayView2<T>) -> Result<(Array2<T>, Vec<LayerCache<T>>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = input.to_owned();
        for layer in &self.layers {
            let (out, cache) = layer.forward(prop, h.view())?;
            caches.push(cache);
            h = out;
        }
        Ok((h, caches))
    }

    /// Accumulates parameter gradients; the input gradient is not needed.
    pub fn backward(&mut self, prop: &Csr<T>, caches: &[LayerCache<T>], upstream: Array2<T>) -> Result<()> {
        let mut grad = upstream;
        for (l, (layer, cache)) in self.layers.iter_mut().zip(caches).enumerate().rev() {
            match layer.backward(prop, cache, grad.view(), l > 0)? {
                Some(g) => grad = g,
                None => break,
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.slope]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.slope])
            .collect()
    }
}

/// Two-layer MLP `prelu(H W1) W2` applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor<T> {
    pub w1: Parameter<T>,
    pub slope: Parameter<T>,
    pub w2: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct PredictorCache<T> {
    input: Array2<T>,
    hidden_pre: Array2<T>,
    hidden: Array2<T>,
}

impl<T: Real> Predictor<T> {
    pub fn forward(&self, input: ArrayView2<T>) -> Result<(Array2<T>, PredictorCache<T>)> {
        let hidden_pre = linear_forward(input, &self.w1)?;
        let hidden = prelu_forward(hidden_pre.view(), &self.slope);
        let out = linear_forward(hidden.view(), &self.w2)?;
        Ok((
            out,
            PredictorCache {
                input: input.to_owned(),
                hidden_pre,
                hidden,
            },
        ))
    }

    pub fn backward(&mut self, cache: &PredictorCache<T>, upstream: ArrayView2<T>) -> Array2<T> {
        let d_hidden = linear_backward(cache.hidden.view(), &mut self.w2, upstream, true)
            .expect("requested");
        let d_pre = prelu_backward(cache.hidden_pre.view(), &mut self.slope, d_hidden.view());
        linear_backward(cache.input.view(), &mut self.w1, d_pre.view(), true).expect("requested")
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.w1, &self.slope, &self.w2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.w1, &mut self.slope, &mut self.w2]
    }
}

/// Mean of the first `count` rows, accumulated in f64.
fn mean_rows<T: Real>(m: ArrayView2<T>, count: usize) -> Array1<T> {
    let mut acc = vec![0.0f64; m.ncols()];
    for row in m.slice(s![..count, ..]).rows() {
        for (a, &v) in acc.iter_mut().zip(row.iter()) {
            *a += v.to_f64().unwrap_or(f64::NAN);
        }
    }
    let inv = 1.0 / count as f64;
    Array1::from_iter(acc.into_iter().map(|a| cast::<T>(a * inv)))
}

/// Average over the `n_sub` subgraph rows; the appended target row is excluded.
pub fn graph_readout<T: Real>(hbar: ArrayView2<T>, n_sub: usize) -> Array1<T> {
    mean_rows(hbar, n_sub)
}

/// Average over the first `m_sub` (contextual) dual-node rows.
pub fn hyper_readout<T: Real>(z: ArrayView2<T>, m_sub: usize) -> Array1<T> {
    mean_rows(z, m_sub)
}

/// Graph-side embeddings consumed by scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoderOutput<T> {
    /// Patch-level context: predicted row of the anonymized target slot.
    pub h_p: Array1<T>,
    /// Independent target embedding: predicted appended row.
    pub h_t: Array1<T>,
    /// Subgraph-level context readout.
    pub h_s: Array1<T>,
}

impl<T: Real> GraphEncoderOutput<T> {
    pub fn from_block(hbar: ArrayView2<T>) -> Self {
        let n_sub = hbar.nrows() - 1;
        Self {
            h_p: hbar.row(0).to_owned(),
            h_t: hbar.row(n_sub).to_owned(),
            h_s: graph_readout(hbar, n_sub),
        }
    }
}

/// Hypergraph-side embeddings consumed by scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperEncoderOutput<T> {
    /// Isolated target-edge rows, `M_tar x D'`.
    pub z_t: Array2<T>,
    /// Contextual target-edge rows, `M_tar x D'`.
    pub z_p: Array2<T>,
    /// Readout over the contextual dual nodes.
    pub z_s: Array1<T>,
}

impl<T: Real> HyperEncoderOutput<T> {
    pub fn from_block(z: ArrayView2<T>, m_sub: usize, m_tar: usize) -> Self {
        Self {
            z_t: z.slice(s![m_sub..m_sub + m_tar, ..]).to_owned(),
            z_p: z.slice(s![..m_tar, ..]).to_owned(),
            z_s: hyper_readout(z, m_sub),
        }
    }
}

fn stack_rows<T: Real>(blocks: &[&Array2<f32>]) -> Array2<T> {
    let views: Vec<ArrayView2<f32>> = blocks.iter().map(|b| b.view()).collect();
    let stacked = ndarray::concatenate(Axis(0), &views).expect("equal widths");
    stacked.mapv(|v| cast::<T>(f64::from(v)))
}

/// Graph views of a batch stacked block-diagonally.
#[derive(Debug, Clone)]
pub struct GraphBatch<T> {
    pub prop: Csr<T>,
    pub features: Array2<T>,
    /// `(row offset, N_s)` per view; each block has `N_s + 1` rows.
    pub blocks: Vec<(usize, usize)>,
}

impl<T: Real> GraphBatch<T> {
    pub fn from_views(views: &[ViewPair]) -> Result<Self> {
        let props = views
            .iter()
            .map(|v| gcn_propagation::<T>(&v.graph_adjacency))
            .collect::<Result<Vec<_>>>()?;
        let mut blocks = Vec::with_capacity(views.len());
        let mut offset = 0;
        for v in views {
            blocks.push((offset, v.num_sub_nodes()));
            offset += v.num_sub_nodes() + 1;
        }
        Ok(Self {
            prop: Csr::block_diag(&props),
            features: stack_rows(&views.iter().map(|v| &v.graph_features).collect::<Vec<_>>()),
            blocks,
        })
    }

    pub fn block<'a>(&self, m: &'a Array2<T>, i: usize) -> ArrayView2<'a, T> {
        let (off, n_sub) = self.blocks[i];
        m.slice(s![off..off + n_sub + 1, ..])
    }
}

/// Hypergraph views of a batch stacked block-diagonally.
#[derive(Debug, Clone)]
pub struct HyperBatch<T> {
    pub prop: Csr<T>,
    pub features: Array2<T>,
    /// `(row offset, M_s, M_tar)` per view; each block has `M_s + M_tar` rows.
    pub blocks: Vec<(usize, usize, usize)>,
}

impl<T: Real> HyperBatch<T> {
    pub fn from_views(views: &[ViewPair]) -> Result<Self> {
        let props = views
            .iter()
            .map(|v| hgnn_propagation::<T>(&v.hyper_incidence))
            .collect::<Result<Vec<_>>>()?;
        let mut blocks = Vec::with_capacity(views.len());
        let mut offset = 0;
        for v in views {
            blocks.push((offset, v.num_sub_edges(), v.num_targets()));
            offset += v.num_sub_edges() + v.num_targets();
        }
        Ok(Self {
            prop: Csr::block_diag(&props),
            features: stack_rows(&views.iter().map(|v| &v.hyper_features).collect::<Vec<_>>()),
            blocks,
        })
    }

    pub fn block<'a>(&self, m: &'a Array2<T>, i: usize) -> ArrayView2<'a, T> {
        let (off, ms, mt) = self.blocks[i];
        m.slice(s![off..off + ms + mt, ..])
    }
}

/// Single-view GCN layer on an anonymized adjacency.
pub fn gcn_forward<T: Real>(adjacency: &Pattern, features: ArrayView2<T>, layer: &PropLayer<T>) -> Result<Array2<T>> {
    let prop = gcn_propagation(adjacency)?;
    Ok(layer.forward(&prop, features)?.0)
}

/// Single-view HGNN layer on an anonymized incidence.
pub fn hgnn_forward<T: Real>(incidence: &Pattern, features: ArrayView2<T>, layer: &PropLayer<T>) -> Result<Array2<T>> {
    let prop = hgnn_propagation(incidence)?;
    Ok(layer.forward(&prop, features)?.0)
}

pub fn predictor_forward<T: Real>(h: ArrayView2<T>, predictor: &Predictor<T>) -> Result<Array2<T>> {
    Ok(predictor.forward(h)?.0)
}

/// Average of the contextual target-edge rows.
pub fn pool_edge_context<T: Real>(z_p: ArrayView2<T>) -> Result<Array1<T>> {
    if z_p.nrows() == 0 {
        return Err(Error::InvalidGraph("no target edges to pool".into()));
    }
    Ok(mean_rows(z_p, z_p.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn layer(w: Array2<f64>, slope: f64) -> PropLayer<f64> {
        PropLayer {
            weight: Parameter::new("w", w),
            slope: Parameter::scalar("a", slope),
        }
    }

    #[test]
    fn single_node_normalization_cancels() {
        // A-hat = [[1]] -> A-tilde = [[2]], D = [[2]] -> P = [[1]].
        let adj = Pattern::from_rows(1, vec![vec![0]]).unwrap();
        let x = array![[1.0f64, -2.0]];
        let w = array![[0.5, 1.0], [1.0, 0.25]];
        let out = gcn_forward(&adj, x.view(), &layer(w.clone(), 0.1)).unwrap();
        let expect = prelu_forward(x.dot(&w).view(), &Parameter::scalar("a", 0.1));
        assert_eq!(out, expect);
    }

    #[test]
    fn two_isolated_nodes_hand_computed() {
        // Node 0 has no stored entries (self weight 1/1), node 1 carries the
        // anonymization diagonal (2/2 = 1). Both scale by exactly 1.
        let adj = Pattern::from_rows(2, vec![vec![], vec![1]]).unwrap();
        let prop = gcn_propagation::<f64>(&adj).unwrap();
        assert_eq!(prop.to_dense(), array![[1.0, 0.0], [0.0, 1.0]]);
        // An edge pair: degrees 2 and 2, all entries 1/2.
        let adj = Pattern::from_rows(2, vec![vec![1], vec![0]]).unwrap();
        let x = array![[2.0f64, 0.0], [0.0, 4.0]];
        let out = gcn_forward(&adj, x.view(), &layer(Array2::eye(2), 1.0)).unwrap();
        assert_eq!(out, array![[1.0, 2.0], [1.0, 2.0]]);
    }

    #[test]
    fn hgnn_isolated_dual_node_is_untouched() {
        // Dual nodes 0,1 share hyperedge 0; dual node 2 sits alone in hyperedge 1.
        let inc = Pattern::from_rows(2, vec![vec![0], vec![0], vec![1]]).unwrap();
        let x = array![[1.0f64, 2.0], [3.0, 4.0], [-1.0, 5.0]];
        let w = array![[0.3, -0.2], [0.1, 0.7]];
        let out = hgnn_forward(&inc, x.view(), &layer(w.clone(), 0.25)).unwrap();
        let own = prelu_forward(x.slice(s![2..3, ..]).dot(&w).view(), &Parameter::scalar("a", 0.25));
        assert_eq!(out.row(2), own.row(0));
        // Shared hyperedge of size 2, Dv = 1: each row becomes the mean.
        let mean = (&x.row(0) + &x.row(1)) / 2.0;
        let expect = prelu_forward(mean.insert_axis(Axis(0)).dot(&w).view(), &Parameter::scalar("a", 0.25));
        for r in 0..2 {
            for c in 0..2 {
                assert!((out[[r, c]] - expect[[0, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hgnn_single_node_single_edge_identity() {
        let inc = Pattern::from_rows(1, vec![vec![0]]).unwrap();
        let x = array![[0.5f64, -1.5]];
        let out = hgnn_forward(&inc, x.view(), &layer(Array2::eye(2), 0.25)).unwrap();
        assert_eq!(out, array![[0.5, -0.375]]);
    }

    #[test]
    fn hgnn_rejects_orphan_rows_and_skips_empty_hyperedges() {
        let orphan = Pattern::from_rows(2, vec![vec![0], vec![]]).unwrap();
        assert!(hgnn_propagation::<f64>(&orphan).is_err());
        let empty_col = Pattern::from_rows(3, vec![vec![0], vec![0]]).unwrap();
        let p = hgnn_propagation::<f64>(&empty_col).unwrap().to_dense();
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identity_predictor_is_prelu() {
        let pred = Predictor {
            w1: Parameter::new("w1", Array2::<f64>::eye(3)),
            slope: Parameter::scalar("a", 0.25),
            w2: Parameter::new("w2", Array2::<f64>::eye(3)),
        };
        let h = array![[1.0, -2.0, 0.5]];
        assert_eq!(predictor_forward(h.view(), &pred).unwrap(), array![[1.0, -0.5, 0.5]]);
    }

    #[test]
    fn readouts() {
        let same = Array2::from_shape_fn((4, 2), |(_, j)| j as f64 + 1.0);
        assert_eq!(graph_readout(same.view(), 3), array![1.0, 2.0]);
        let m = array![[1.0f64, 0.0], [0.0, 1.0], [9.0, 9.0]];
        assert_eq!(graph_readout(m.view(), 2), array![0.5, 0.5]);
        assert_eq!(hyper_readout(m.view(), 1), array![1.0, 0.0]);
        assert_eq!(pool_edge_context(array![[2.0f64, 0.0], [0.0, 2.0]].view()).unwrap(), array![1.0, 1.0]);
        assert!(pool_edge_context(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }
}
