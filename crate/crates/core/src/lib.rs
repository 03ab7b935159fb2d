//! Bootstrapped node and edge anomaly detection on attributed graphs.
//!
//! A target node's enclosing subgraph is encoded by a graph convolution
//! (online branch) and the subgraph's dual hypergraph, where edges become
//! nodes, by a hypergraph convolution (target branch, tracked by EMA). Node
//! targets are scored against edge-side contexts and edge targets against
//! node-side contexts, so each task supervises the other without negative
//! samples.

pub mod encoders;
pub mod error;
pub mod graph;
pub mod injection;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scoring;
pub mod sweeps;
pub mod synth;
pub mod trainer;
pub mod views;

pub use error::{Error, Result};
pub use graph::{build_graph, dual_transform, incidence, k_hop_neighbors, AttributedGraph, DualHypergraph, IncidenceMatrix, Pattern};
pub use model::{Model, ModelConfig, Role};
pub use scoring::{ScoreTable, ScoreWeights, ScoresFile};
pub use trainer::{infer_scores, train, InferConfig, TrainConfig, TrainOutcome};
