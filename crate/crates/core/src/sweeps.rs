//! End-to-end pipeline runs, the cached hyperparameter grid and the
//! anomaly-correlation sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::injection::{inject_with_correlation, CorrelationConfig};
use crate::io::{read_json, write_json};
use crate::metrics::{evaluate, EvalReport, Task};
use crate::scoring::ScoreTable;
use crate::trainer::{infer_scores, train, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub node: EvalReport,
    pub edge: EvalReport,
    pub steps: u64,
    pub best_epoch: Option<usize>,
    pub scores: ScoreTable,
}

/// Train, score and evaluate against the graph's labels.
pub fn run_pipeline(graph: &AttributedGraph, cfg: &TrainConfig) -> Result<PipelineResult> {
    let (Some(node_labels), Some(edge_labels)) = (graph.node_labels(), graph.edge_labels()) else {
        return Err(Error::InvalidGraph("evaluation needs node and edge labels".into()));
    };
    let outcome = train(graph, cfg)?;
    if let Some(msg) = &outcome.halted {
        return Err(Error::Numerical(msg.clone()));
    }
    let scores = infer_scores(graph, &outcome.best, &cfg.infer_config())?;
    let file = scores.to_file();
    let echo = serde_json::to_value(cfg)?;
    Ok(PipelineResult {
        node: evaluate(Task::Node, &file.node_scores, node_labels, None, echo.clone())?,
        edge: evaluate(Task::Edge, &file.edge_scores, edge_labels, None, echo)?,
        steps: outcome.steps,
        best_epoch: outcome.best_epoch,
        scores,
    })
}

/// Content hash of a graph (structure, features and labels).
pub fn graph_fingerprint(graph: &AttributedGraph) -> String {
    let mut h = Sha256::new();
    h.update((graph.num_nodes() as u64).to_le_bytes());
    h.update((graph.feature_dim() as u64).to_le_bytes());
    for &(a, b) in graph.edges() {
        h.update((a as u64).to_le_bytes());
        h.update((b as u64).to_le_bytes());
    }
    for v in graph.features().iter() {
        h.update(v.to_le_bytes());
    }
    h.update(graph.node_labels().unwrap_or(&[]));
    h.update(graph.edge_labels().unwrap_or(&[]));
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cell_key(fingerprint: &str, cfg: &TrainConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(serde_json::to_vec(cfg)?);
    Ok(hex(&h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub hidden_dim: Vec<usize>,
    pub eval_rounds: Vec<usize>,
    pub tau: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let w = vec![0.2, 0.4, 0.6, 0.8, 1.0];
        Self {
            alpha: w.clone(),
            beta: w,
            hidden_dim: Vec::new(),
            eval_rounds: Vec::new(),
            tau: Vec::new(),
            seeds: Vec::new(),
        }
    }
}

impl SweepGrid {
    /// Every combination; an empty axis keeps the base value.
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        fn or<T: Copy>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &alpha in &or(&self.alpha, base.alpha) {
            for &beta in &or(&self.beta, base.beta) {
                for &hidden_dim in &or(&self.hidden_dim, base.hidden_dim) {
                    for &eval_rounds in &or(&self.eval_rounds, base.eval_rounds) {
                        for &tau in &or(&self.tau, base.tau) {
                            for &seed in &or(&self.seeds, base.seed) {
                                out.push(TrainConfig {
                                    alpha,
                                    beta,
                                    hidden_dim,
                                    eval_rounds,
                                    tau,
                                    seed,
                                    ..*base
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub hidden_dim: usize,
    pub eval_rounds: usize,
    pub tau: f64,
    pub seed: u64,
    pub node_auc: Option<f64>,
    pub edge_auc: Option<f64>,
    /// Set when the cell could not be evaluated (for example an alpha/beta
    /// pair that fails validation).
    pub error: Option<String>,
    pub key: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub trained: usize,
    pub cached: usize,
}

/// Runs every grid cell, reusing results stored under `cache_dir`.
pub fn run_hyperparameter_sweep(
    graph: &AttributedGraph,
    base: &TrainConfig,
    grid: &SweepGrid,
    cache_dir: &Path,
) -> Result<(Vec<SweepRow>, SweepStats)> {
    std::fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let fingerprint = graph_fingerprint(graph);
    let mut rows = Vec::new();
    let mut stats = SweepStats::default();
    for cfg in grid.cells(base) {
        let key = cell_key(&fingerprint, &cfg)?;
        let path: PathBuf = cache_dir.join(format!("{key}.json"));
        if path.exists() {
            rows.push(read_json(&path)?);
            stats.cached += 1;
            continue;
        }
        let mut row = SweepRow {
            alpha: cfg.alpha,
            beta: cfg.beta,
            hidden_dim: cfg.hidden_dim,
            eval_rounds: cfg.eval_rounds,
            tau: cfg.tau,
            seed: cfg.seed,
            node_auc: None,
            edge_auc: None,
            error: None,
            key,
        };
        match run_pipeline(graph, &cfg) {
            Ok(r) => {
                row.node_auc = Some(r.node.auc);
                row.edge_auc = Some(r.edge.auc);
                stats.trained += 1;
            }
            Err(e @ (Error::InvalidConfig(_) | Error::Numerical(_))) => {
                log::warn!("sweep cell alpha={} beta={}: {e}", cfg.alpha, cfg.beta);
                row.error = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
        write_json(&path, &row)?;
        rows.push(row);
    }
    Ok((rows, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub requested: f64,
    pub achieved: f64,
    pub node_auc: f64,
    pub edge_auc: f64,
    pub seed: u64,
}

/// One labeled graph per level from the same unlabeled base graph; each is
/// trained and evaluated with `cfg`.
pub fn run_correlation_sweep(
    base: &AttributedGraph,
    levels: &[f64],
    generator: &CorrelationConfig,
    cfg: &TrainConfig,
) -> Result<Vec<CorrelationRow>> {
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let (graph, report) = inject_with_correlation(base, &CorrelationConfig { level, ..*generator })?;
        let r = run_pipeline(&graph, cfg)?;
        let achieved = report
            .anomaly_correlation
            .ok_or_else(|| Error::InvalidGraph("generator produced no anomalous nodes".into()))?;
        log::info!(
            "correlation {level:.2} (achieved {achieved:.3}): node auc {:.4}, edge auc {:.4}",
            r.node.auc,
            r.edge.auc
        );
        rows.push(CorrelationRow {
            requested: level,
            achieved,
            node_auc: r.node.auc,
            edge_auc: r.edge.auc,
            seed: cfg.seed,
        });
    }
    Ok(rows)
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
