//! Parameter ownership for both branches, batched forward/backward, EMA
//! coupling and checkpoint conversion.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoders::{Encoder, GraphBatch, HyperBatch, LayerCache, Predictor, PredictorCache, PropLayer};
use crate::error::{Error, Result};
use crate::nn::{
    cast, ema_update, glorot_uniform, Checkpoint, CheckpointHeader, EmaLink, Parameter, Real, TensorEntry,
};
use crate::rng::{self, Stream};
use crate::views::ViewPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Node feature width `D`.
    pub in_dim: usize,
    /// Embedding width `D'`.
    pub hidden_dim: usize,
    pub predictor_hidden: usize,
    /// Propagation layers per encoder.
    pub layers: usize,
    pub init_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_dim: 0,
            hidden_dim: 128,
            predictor_hidden: 512,
            layers: 1,
            init_slope: 0.25,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.predictor_hidden == 0 || self.layers == 0 {
            return Err(Error::InvalidConfig("model widths and layer count must be positive".into()));
        }
        Ok(())
    }
}

/// Which branch receives gradients; the other follows by EMA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    GraphOnline,
    HyperOnline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub gcn: Encoder<T>,
    pub predictor: Predictor<T>,
    pub hgnn: Encoder<T>,
}

pub struct GraphForward<T> {
    pub batch: GraphBatch<T>,
    /// Predicted embeddings of every stacked row.
    pub hbar: Array2<T>,
    caches: Vec<LayerCache<T>>,
    pred_cache: PredictorCache<T>,
}

pub struct HyperForward<T> {
    pub batch: HyperBatch<T>,
    pub z: Array2<T>,
    caches: Vec<LayerCache<T>>,
}

fn encoder<T: Real, R: rand::Rng>(prefix: &str, cfg: &ModelConfig, rng: &mut R) -> Encoder<T> {
    let layers = (0..cfg.layers)
        .map(|l| {
            let rows = if l == 0 { cfg.in_dim } else { cfg.hidden_dim };
            PropLayer {
                weight: Parameter::new(format!("{prefix}.{l}.weight"), glorot_uniform(rows, cfg.hidden_dim, rng)),
                slope: Parameter::scalar(format!("{prefix}.{l}.slope"), cast(cfg.init_slope)),
            }
        })
        .collect();
    Encoder { layers }
}

fn rename<T: Real>(enc: &Encoder<T>, prefix: &str) -> Encoder<T> {
    let mut out = enc.clone();
    for (l, layer) in out.layers.iter_mut().enumerate() {
        layer.weight.name = format!("{prefix}.{l}.weight");
        layer.slope.name = format!("{prefix}.{l}.slope");
    }
    out
}

impl<T: Real> Model<T> {
    /// Glorot-initialized online branch; the target branch starts as a copy.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, Stream::Init, &[]);
        let gcn = encoder("gcn", &config, &mut r);
        let predictor = Predictor {
            w1: Parameter::new("predictor.w1", glorot_uniform(config.hidden_dim, config.predictor_hidden, &mut r)),
            slope: Parameter::scalar("predictor.slope", cast(config.init_slope)),
            w2: Parameter::new("predictor.w2", glorot_uniform(config.predictor_hidden, config.hidden_dim, &mut r)),
        };
        let hgnn = rename(&gcn, "hgnn");
        let model = Self {
            config,
            gcn,
            predictor,
            hgnn,
        };
        model.check_ema_shapes()?;
        Ok(model)
    }

    fn check_ema_shapes(&self) -> Result<()> {
        for (g, h) in self.gcn.layers.iter().zip(&self.hgnn.layers) {
            if g.weight.shape() != h.weight.shape() {
                return Err(Error::Shape(format!(
                    "{} {:?} and {} {:?} cannot be EMA-coupled",
                    g.weight.name,
                    g.weight.shape(),
                    h.weight.name,
                    h.weight.shape()
                )));
            }
        }
        if self.gcn.layers.len() != self.hgnn.layers.len() {
            return Err(Error::Shape("encoders differ in depth".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.gcn.params();
        v.extend(self.predictor.params());
        v.extend(self.hgnn.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.gcn.params_mut();
        v.extend(self.predictor.params_mut());
        v.extend(self.hgnn.params_mut());
        v
    }

    /// Parameters the optimizer updates for `role`.
    pub fn online_params_mut(&mut self, role: Role) -> Vec<&mut Parameter<T>> {
        match role {
            Role::GraphOnline => {
                let mut v = self.gcn.params_mut();
                v.extend(self.predictor.params_mut());
                v
            }
            Role::HyperOnline => self.hgnn.params_mut(),
        }
    }

    pub fn online_params(&self, role: Role) -> Vec<&Parameter<T>> {
        match role {
            Role::GraphOnline => {
                let mut v = self.gcn.params();
                v.extend(self.predictor.params());
                v
            }
            Role::HyperOnline => self.hgnn.params(),
        }
    }

    /// Parameters that must never receive a gradient for `role`.
    pub fn target_params(&self, role: Role) -> Vec<&Parameter<T>> {
        match role {
            Role::GraphOnline => self.hgnn.params(),
            Role::HyperOnline => {
                let mut v = self.gcn.params();
                v.extend(self.predictor.params());
                v
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn ema_links(&self, tau: f64, role: Role) -> Vec<EmaLink> {
        self.gcn
            .layers
            .iter()
            .zip(&self.hgnn.layers)
            .map(|(g, h)| {
                let (source, dest) = match role {
                    Role::GraphOnline => (&g.weight.name, &h.weight.name),
                    Role::HyperOnline => (&h.weight.name, &g.weight.name),
                };
                EmaLink {
                    source: source.clone(),
                    dest: dest.clone(),
                    tau,
                }
            })
            .collect()
    }

    /// Moves the target-branch weights toward the online-branch weights.
    pub fn apply_ema(&mut self, tau: f64, role: Role) -> Result<()> {
        let links = self.ema_links(tau, role);
        for ((g, h), link) in self.gcn.layers.iter_mut().zip(self.hgnn.layers.iter_mut()).zip(&links) {
            match role {
                Role::GraphOnline => ema_update(link, &g.weight, &mut h.weight)?,
                Role::HyperOnline => ema_update(link, &h.weight, &mut g.weight)?,
            }
        }
        Ok(())
    }

    pub fn forward_graph(&self, views: &[ViewPair]) -> Result<GraphForward<T>> {
        let batch = GraphBatch::from_views(views)?;
        let (h, caches) = self.gcn.forward(&batch.prop, batch.features.view())?;
        let (hbar, pred_cache) = self.predictor.forward(h.view())?;
        Ok(GraphForward {
            batch,
            hbar,
            caches,
            pred_cache,
        })
    }

    pub fn forward_hyper(&self, views: &[ViewPair]) -> Result<HyperForward<T>> {
        let batch = HyperBatch::from_views(views)?;
        let (z, caches) = self.hgnn.forward(&batch.prop, batch.features.view())?;
        Ok(HyperForward { batch, z, caches })
    }

    /// Accumulates gradients of the graph branch given `dL/dHbar`.
    pub fn backward_graph(&mut self, fwd: &GraphForward<T>, d_hbar: Array2<T>) -> Result<()> {
        let d_h = self.predictor.backward(&fwd.pred_cache, d_hbar.view());
        self.gcn.backward(&fwd.batch.prop, &fwd.caches, d_h)
    }

    /// Accumulates gradients of the hypergraph branch given `dL/dZ`.
    pub fn backward_hyper(&mut self, fwd: &HyperForward<T>, d_z: Array2<T>) -> Result<()> {
        self.hgnn.backward(&fwd.batch.prop, &fwd.caches, d_z)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let enc = |e: &Encoder<T>| Encoder {
            layers: e
                .layers
                .iter()
                .map(|l| PropLayer {
                    weight: l.weight.cast(),
                    slope: l.slope.cast(),
                })
                .collect(),
        };
        Model {
            config: self.config,
            gcn: enc(&self.gcn),
            predictor: Predictor {
                w1: self.predictor.w1.cast(),
                slope: self.predictor.slope.cast(),
                w2: self.predictor.w2.cast(),
            },
            hgnn: enc(&self.hgnn),
        }
    }

    /// Serializes all parameters as f32. `extra` is stored next to the model
    /// config under `"run"`.
    pub fn to_checkpoint(&self, step: u64, tau: f64, extra: serde_json::Value) -> Checkpoint {
        let params = self.params();
        let tensors: Vec<Array2<f32>> = params
            .iter()
            .map(|p| p.value.mapv(|v| v.to_f32().unwrap_or(f32::NAN)))
            .collect();
        let entries = params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: [p.value.nrows(), p.value.ncols()],
                dtype: "f32".into(),
            })
            .collect();
        Checkpoint {
            header: CheckpointHeader {
                tensors: entries,
                step,
                tau,
                optimizer_state: false,
                config: serde_json::json!({ "model": self.config, "run": extra }),
            },
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = ckpt
            .header
            .config
            .get("model")
            .cloned()
            .map(serde_json::from_value)
            .transpose()?
            .ok_or_else(|| Error::InvalidConfig("checkpoint has no model config".into()))?;
        let mut model = Self::new(config, 0)?;
        for p in model.params_mut() {
            let t = ckpt
                .tensor(&p.name)
                .ok_or_else(|| Error::InvalidConfig(format!("checkpoint lacks tensor {}", p.name)))?;
            if t.dim() != p.value.dim() {
                return Err(Error::Shape(format!("tensor {} has shape {:?}", p.name, t.dim())));
            }
            p.value = t.mapv(|v| cast(f64::from(v)));
        }
        Ok(model)
    }
}
