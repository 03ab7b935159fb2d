//! Mini-batch loss with stop-gradient, the training loop and multi-round
//! inference.

use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{graph_readout, hyper_readout, pool_edge_context};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::model::{Model, ModelConfig, Role};
use crate::nn::{adam_step, cast, AdamConfig, AdamState, Real};
use crate::rng::{self, Stream};
use crate::scoring::{edge_scores, node_score, scatter_rows, score_backward, ScoreTable, ScoreWeights};
use crate::views::{build_view_pair, epoch_batches, AugmentConfig, SubgraphConfig, ViewPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
    pub subgraph: SubgraphConfig,
    pub augment: AugmentConfig,
    pub hidden_dim: usize,
    pub predictor_hidden: usize,
    pub layers: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub eval_rounds: usize,
    /// Alternate which branch is online from step to step.
    pub symmetric_roles: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 1000,
            lr: 1e-3,
            tau: 0.99,
            subgraph: SubgraphConfig::default(),
            augment: AugmentConfig::default(),
            hidden_dim: 128,
            predictor_hidden: 512,
            layers: 1,
            alpha: 0.8,
            beta: 0.6,
            seed: 0,
            eval_rounds: 160,
            symmetric_roles: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_rounds == 0 {
            return Err(Error::InvalidConfig("batch_size and eval_rounds must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!("tau {} not in [0, 1]", self.tau)));
        }
        self.subgraph.validate()?;
        self.augment.validate()?;
        self.weights().validate()
    }

    pub fn weights(&self) -> ScoreWeights {
        ScoreWeights {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn model_config(&self, in_dim: usize) -> ModelConfig {
        ModelConfig {
            in_dim,
            hidden_dim: self.hidden_dim,
            predictor_hidden: self.predictor_hidden,
            layers: self.layers,
            ..ModelConfig::default()
        }
    }

    pub fn infer_config(&self) -> InferConfig {
        InferConfig {
            rounds: self.eval_rounds,
            seed: self.seed,
            subgraph: self.subgraph,
            augment: self.augment,
            weights: self.weights(),
            chunk_size: 512,
        }
    }
}

/// Loss of one mini-batch and the scores it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub node_loss: f64,
    pub edge_loss: f64,
    pub node_scores: Vec<f64>,
    /// Per view, one score per target edge.
    pub edge_scores: Vec<Vec<f64>>,
}

/// Scores only; no gradients are touched.
pub fn evaluate_batch<T: Real>(model: &Model<T>, views: &[ViewPair], w: &ScoreWeights) -> Result<BatchLoss> {
    let gf = model.forward_graph(views)?;
    let hf = model.forward_hyper(views)?;
    let mut out = BatchLoss {
        loss: 0.0,
        node_loss: 0.0,
        edge_loss: 0.0,
        node_scores: Vec::with_capacity(views.len()),
        edge_scores: Vec::with_capacity(views.len()),
    };
    for i in 0..views.len() {
        let g = gf.batch.block(&gf.hbar, i);
        let z = hf.batch.block(&hf.z, i);
        let (_, n_sub) = gf.batch.blocks[i];
        let (_, ms, mt) = hf.batch.blocks[i];
        let z_p = pool_edge_context(z.slice(s![..mt, ..]))?;
        let z_s = hyper_readout(z, ms);
        let h_s = graph_readout(g, n_sub);
        let sn = node_score(g.row(n_sub), z_p.view(), z_s.view(), w);
        let se = edge_scores(z.slice(s![ms..ms + mt, ..]), g.row(0), h_s.view(), w);
        out.node_loss += sn;
        out.edge_loss += se.iter().sum::<f64>() / mt as f64;
        out.node_scores.push(sn);
        out.edge_scores.push(se);
    }
    let b = views.len() as f64;
    out.node_loss /= b;
    out.edge_loss /= b;
    out.loss = 0.5 * (out.node_loss + out.edge_loss);
    Ok(out)
}

/// Loss `(L_node + L_edge) / 2` with gradients accumulated into the online
/// branch only. The target branch is evaluated as a constant.
pub fn batch_loss<T: Real>(model: &mut Model<T>, views: &[ViewPair], w: &ScoreWeights, role: Role) -> Result<BatchLoss> {
    if views.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let gf = model.forward_graph(views)?;
    let hf = model.forward_hyper(views)?;
    let b = views.len() as f64;
    let mut d_hbar = Array2::<T>::zeros(gf.hbar.raw_dim());
    let mut d_z = Array2::<T>::zeros(hf.z.raw_dim());
    let one = T::one();
    let (mut node_total, mut edge_total) = (0.0, 0.0);
    let mut node_scores = Vec::with_capacity(views.len());
    let mut all_edge_scores = Vec::with_capacity(views.len());

    for i in 0..views.len() {
        let (g_off, n_sub) = gf.batch.blocks[i];
        let (z_off, ms, mt) = hf.batch.blocks[i];
        let g = gf.batch.block(&gf.hbar, i);
        let z = hf.batch.block(&hf.z, i);
        let h_t = g.row(n_sub);
        let h_p = g.row(0);
        let h_s = graph_readout(g, n_sub);
        let z_p = pool_edge_context(z.slice(s![..mt, ..]))?;
        let z_s = hyper_readout(z, ms);

        let node = score_backward(h_t, z_p.view(), z_s.view(), w, 0.5 / b);
        node_total += node.score;
        node_scores.push(node.score);

        let edge_weight = 0.5 / (b * mt as f64);
        let mut d_hp = Array1::<T>::zeros(h_p.len());
        let mut d_hs = Array1::<T>::zeros(h_p.len());
        let mut scores = Vec::with_capacity(mt);
        for j in 0..mt {
            let e = score_backward(z.row(ms + j), h_p, h_s.view(), w, edge_weight);
            scores.push(e.score);
            match role {
                Role::GraphOnline => {
                    d_hp.zip_mut_with(&e.d_patch, |a, &b| *a = *a + b);
                    d_hs.zip_mut_with(&e.d_context, |a, &b| *a = *a + b);
                }
                Role::HyperOnline => scatter_rows(&mut d_z, z_off + ms + j, &e.d_target, one),
            }
        }
        edge_total += scores.iter().sum::<f64>() / mt as f64;
        all_edge_scores.push(scores);

        match role {
            Role::GraphOnline => {
                scatter_rows(&mut d_hbar, g_off + n_sub, &node.d_target, one);
                scatter_rows(&mut d_hbar, g_off, &d_hp, one);
                let share = cast::<T>(1.0 / n_sub as f64);
                for r in 0..n_sub {
                    scatter_rows(&mut d_hbar, g_off + r, &d_hs, share);
                }
            }
            Role::HyperOnline => {
                let share = cast::<T>(1.0 / mt as f64);
                for r in 0..mt {
                    scatter_rows(&mut d_z, z_off + r, &node.d_patch, share);
                }
                let share = cast::<T>(1.0 / ms as f64);
                for r in 0..ms {
                    scatter_rows(&mut d_z, z_off + r, &node.d_context, share);
                }
            }
        }
    }

    let node_loss = node_total / b;
    let edge_loss = edge_total / b;
    let loss = 0.5 * (node_loss + edge_loss);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss (node {node_loss}, edge {edge_loss}) on a batch of {} views starting at target {}",
            views.len(),
            views[0].target
        )));
    }
    match role {
        Role::GraphOnline => model.backward_graph(&gf, d_hbar)?,
        Role::HyperOnline => model.backward_hyper(&hf, d_z)?,
    }
    Ok(BatchLoss {
        loss,
        node_loss,
        edge_loss,
        node_scores,
        edge_scores: all_edge_scores,
    })
}

/// Builds one view per target with its own RNG stream.
pub fn build_views(
    graph: &AttributedGraph,
    targets: &[usize],
    sub: &SubgraphConfig,
    aug: &AugmentConfig,
    seed: u64,
    stream: Stream,
    round: u64,
) -> Result<Vec<ViewPair>> {
    targets
        .par_iter()
        .map(|&v| {
            let mut r = rng::stream(seed, stream, &[round, v as u64]);
            build_view_pair(graph, v, sub, aug, &mut r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub node_loss: f64,
    pub edge_loss: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest mean loss.
    pub best: Model<f32>,
    pub best_epoch: Option<usize>,
    pub best_loss: f64,
    /// Parameters after the last completed step.
    pub last: Model<f32>,
    pub log: Vec<EpochLog>,
    pub steps: u64,
    /// Set when training stopped on a numerical failure.
    pub halted: Option<String>,
}

pub fn train(graph: &AttributedGraph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(graph, cfg, |_| {})
}

/// Runs `cfg.epochs` epochs, calling `observe` after each.
pub fn train_with(
    graph: &AttributedGraph,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let weights = cfg.weights();
    let mut model = Model::<f32>::new(cfg.model_config(graph.feature_dim()), cfg.seed)?;
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut graph_state = AdamState::new(adam, &model.online_params(Role::GraphOnline));
    let mut hyper_state = AdamState::new(adam, &model.online_params(Role::HyperOnline));

    let start = Instant::now();
    let mut out = TrainOutcome {
        best: model.clone(),
        best_epoch: None,
        best_loss: f64::INFINITY,
        last: model.clone(),
        log: Vec::with_capacity(cfg.epochs),
        steps: 0,
        halted: None,
    };

    'epochs: for epoch in 0..cfg.epochs {
        let mut shuffle = rng::stream(cfg.seed, Stream::Shuffle, &[epoch as u64]);
        let batches = epoch_batches(graph, cfg.batch_size, &mut shuffle)?;
        let (mut sum, mut node_sum, mut edge_sum, mut count) = (0.0, 0.0, 0.0, 0usize);
        for batch in &batches {
            let views = build_views(graph, batch, &cfg.subgraph, &cfg.augment, cfg.seed, Stream::TrainView, epoch as u64)?;
            let role = if cfg.symmetric_roles && out.steps % 2 == 1 {
                Role::HyperOnline
            } else {
                Role::GraphOnline
            };
            model.zero_grad();
            let step = batch_loss(&mut model, &views, &weights, role).and_then(|l| {
                if model.target_params(role).iter().any(|p| !p.grad_is_zero()) {
                    return Err(Error::Numerical("gradient reached the target branch".into()));
                }
                let state = match role {
                    Role::GraphOnline => &mut graph_state,
                    Role::HyperOnline => &mut hyper_state,
                };
                adam_step(&mut model.online_params_mut(role), state)?;
                model.apply_ema(cfg.tau, role)?;
                Ok(l)
            });
            let l = match step {
                Ok(l) => l,
                Err(e) if e.is_numerical() => {
                    log::error!("epoch {epoch}: {e}; keeping the last good parameters");
                    out.halted = Some(e.to_string());
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            out.steps += 1;
            let w = views.len() as f64;
            sum += l.loss * w;
            node_sum += l.node_loss * w;
            edge_sum += l.edge_loss * w;
            count += views.len();
        }
        let n = count as f64;
        let entry = EpochLog {
            epoch,
            loss: sum / n,
            node_loss: node_sum / n,
            edge_loss: edge_sum / n,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::debug!("epoch {epoch} loss {:.6}", entry.loss);
        observe(&entry);
        out.last = model.clone();
        if entry.loss < out.best_loss {
            out.best_loss = entry.loss;
            out.best_epoch = Some(epoch);
            out.best = model.clone();
        }
        out.log.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub rounds: usize,
    pub seed: u64,
    pub subgraph: SubgraphConfig,
    pub augment: AugmentConfig,
    pub weights: ScoreWeights,
    /// Targets per forward pass.
    pub chunk_size: usize,
}

/// Scores every non-isolated node `rounds` times with fresh views; edges
/// accumulate a score each time they are a target edge, from either endpoint.
pub fn infer_scores(graph: &AttributedGraph, model: &Model<f32>, cfg: &InferConfig) -> Result<ScoreTable> {
    cfg.weights.validate()?;
    if cfg.rounds == 0 || cfg.chunk_size == 0 {
        return Err(Error::InvalidConfig("rounds and chunk_size must be positive".into()));
    }
    let mut table = ScoreTable::new(graph.num_nodes(), graph.num_edges());
    let targets: Vec<usize> = (0..graph.num_nodes()).filter(|&v| graph.degree(v) > 0).collect();
    table.skipped_isolated = (0..graph.num_nodes()).filter(|&v| graph.degree(v) == 0).collect();
    if !table.skipped_isolated.is_empty() {
        log::warn!("{} isolated nodes cannot be scored", table.skipped_isolated.len());
    }
    for round in 0..cfg.rounds {
        let results: Vec<(Vec<ViewPair>, BatchLoss)> = targets
            .par_chunks(cfg.chunk_size)
            .map(|chunk| {
                let views = chunk
                    .iter()
                    .map(|&v| {
                        let mut r = rng::stream(cfg.seed, Stream::InferView, &[round as u64, v as u64]);
                        build_view_pair(graph, v, &cfg.subgraph, &cfg.augment, &mut r)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let scores = evaluate_batch(model, &views, &cfg.weights)?;
                Ok((views, scores))
            })
            .collect::<Result<_>>()?;
        for (views, scores) in results {
            for (i, view) in views.iter().enumerate() {
                table.add_node(view.target, scores.node_scores[i]);
                for (&e, &s) in view.target_edges.iter().zip(&scores.edge_scores[i]) {
                    table.add_edge(e, s);
                }
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{erdos_renyi, SynthConfig};

    fn small_graph() -> AttributedGraph {
        erdos_renyi(&SynthConfig {
            num_nodes: 30,
            edge_prob: 0.2,
            feature_dim: 6,
            seed: 11,
            ..Default::default()
        })
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            epochs: 50,
            hidden_dim: 8,
            predictor_hidden: 16,
            subgraph: SubgraphConfig { size: 4, ..Default::default() },
            eval_rounds: 2,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn loss_decreases_on_tiny_graph() {
        let out = train(&small_graph(), &small_cfg()).unwrap();
        let first = out.log.first().unwrap().loss;
        let last = out.log.last().unwrap().loss;
        assert!(last < first, "loss {first} -> {last}");
        assert!(out.halted.is_none());
        assert_eq!(out.best_loss, out.log.iter().map(|l| l.loss).fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn tau_one_keeps_target_frozen() {
        let cfg = TrainConfig { tau: 1.0, epochs: 3, ..small_cfg() };
        let g = small_graph();
        let init = Model::<f32>::new(cfg.model_config(g.feature_dim()), cfg.seed).unwrap();
        let out = train(&g, &cfg).unwrap();
        assert_eq!(out.last.hgnn, init.hgnn);
        assert_ne!(out.last.gcn, init.gcn);
    }

    #[test]
    fn single_view_loss_is_literal() {
        let g = small_graph();
        let cfg = small_cfg();
        let mut m = Model::<f64>::new(cfg.model_config(g.feature_dim()), 1).unwrap();
        let views = build_views(&g, &[3], &cfg.subgraph, &cfg.augment, 0, Stream::TrainView, 0).unwrap();
        let l = batch_loss(&mut m, &views, &cfg.weights(), Role::GraphOnline).unwrap();
        let se = &l.edge_scores[0];
        let expect = 0.5 * (l.node_scores[0] + se.iter().sum::<f64>() / se.len() as f64);
        assert!((l.loss - expect).abs() < 1e-12);
        let e = evaluate_batch(&m, &views, &cfg.weights()).unwrap();
        assert!((e.loss - l.loss).abs() < 1e-12);
    }

    #[test]
    fn symmetric_roles_train() {
        let cfg = TrainConfig { symmetric_roles: true, epochs: 4, ..small_cfg() };
        let out = train(&small_graph(), &cfg).unwrap();
        assert!(out.log.iter().all(|l| l.loss.is_finite()));
    }

    #[test]
    fn inference_covers_all_scorable_objects() {
        let g = small_graph();
        let cfg = TrainConfig { epochs: 1, ..small_cfg() };
        let out = train(&g, &cfg).unwrap();
        let t = infer_scores(&g, &out.best, &cfg.infer_config()).unwrap();
        let w = cfg.weights();
        for v in 0..g.num_nodes() {
            if g.degree(v) > 0 {
                assert_eq!(t.node_count(v), 2);
                let s = t.node_score(v).unwrap();
                assert!((0.0..=w.max_score()).contains(&s));
            }
        }
    }
}
