//! Seeded Erdős–Rényi graphs with Gaussian node features.
//!
//! Features start as iid standard normals and are optionally smoothed over
//! the graph (`x <- (1 - w) x + w * mean(neighbors)`), then standardized per
//! column. Smoothing keeps them Gaussian but makes neighbors alike, which is
//! what context-based detectors rely on.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, AttributedGraph};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_nodes: usize,
    pub edge_prob: f64,
    pub feature_dim: usize,
    /// Neighbor-averaging rounds applied to the raw features.
    pub smoothing_rounds: usize,
    /// Weight of the neighbor mean in each round.
    pub smoothing_weight: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_nodes: 500,
            edge_prob: 0.02,
            feature_dim: 64,
            smoothing_rounds: 2,
            smoothing_weight: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidConfig("num_nodes and feature_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) || !(0.0..=1.0).contains(&self.smoothing_weight) {
            return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

pub fn erdos_renyi(cfg: &SynthConfig) -> Result<AttributedGraph> {
    cfg.validate()?;
    let n = cfg.num_nodes;
    let mut r = rng::stream(cfg.seed, Stream::Synth, &[0]);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < cfg.edge_prob {
                pairs.push((i, j));
            }
        }
    }
    let mut x = Array2::<f64>::from_shape_simple_fn((n, cfg.feature_dim), || r.sample(StandardNormal));
    let skeleton = build_graph(&pairs, Array2::zeros((n, 0)))?;
    for _ in 0..cfg.smoothing_rounds {
        let mut next = x.clone();
        for v in 0..n {
            let nb = skeleton.neighbors(v);
            if nb.is_empty() {
                continue;
            }
            let mut mean = ndarray::Array1::<f64>::zeros(cfg.feature_dim);
            for &u in nb {
                mean += &x.row(u);
            }
            mean /= nb.len() as f64;
            let mut row = next.row_mut(v);
            row *= 1.0 - cfg.smoothing_weight;
            row.scaled_add(cfg.smoothing_weight, &mean);
        }
        x = next;
    }
    if cfg.smoothing_rounds > 0 && n > 1 {
        let mean = x.mean_axis(Axis(0)).expect("n > 0");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        x = (x - &mean) / &std;
    }
    build_graph(&pairs, x.mapv(|v| v as f32))
}
