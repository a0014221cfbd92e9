//! Attentional GNN over the co-occurrence graph.
//!
//! Node features start as projected codebook rows. Each layer aggregates
//! the node itself and its neighbors with edge-weight-aware attention, one
//! set of weights per head, heads concatenated. Training minimises a
//! weighted contrastive loss plus a hinge that pushes connected pairs above
//! a weight-scaled similarity floor. Gradients are derived by hand.

pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod sample;
pub mod train;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio::{self, EMBEDDING_MAGIC};
use crate::error::{Error, Result};

pub use loss::{contrastive_loss, objective, pps_loss, Objective};
pub use model::{forward, loss_and_grad, Forward};
pub use optim::{adjust_temperature, clip_global_norm, lr_at, optimizer_step, TrainState};
pub use params::{init_params, GnnParams, HeadParams, LayerParams};
pub use sample::{full_subgraph, sample_neighborhood, SampledSubgraph};
pub use train::{train, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    pub d_codebook: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub edge_dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    /// Neighbors sampled per hop; its length is the number of layers.
    pub neighbor_sizes: Vec<usize>,
    pub epochs: usize,
    pub patience: usize,
    pub min_improvement: f64,
    pub warmup_fraction: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub beta: f64,
    pub leaky_slope: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            d_codebook: 8,
            d_hidden: 128,
            d_out: 32,
            n_heads: 2,
            dropout: 0.1,
            edge_dropout: 0.1,
            lr: 4e-3,
            weight_decay: 0.01,
            max_grad_norm: 0.5,
            batch_size: 2048,
            neighbor_sizes: vec![48, 16],
            epochs: 100,
            patience: 10,
            min_improvement: 1e-4,
            warmup_fraction: 0.1,
            tau0: 0.02,
            tau_min: 0.05,
            tau_max: 0.15,
            beta: 0.9,
            leaky_slope: 0.2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl GnnConfig {
    pub fn n_layers(&self) -> usize {
        self.neighbor_sizes.len()
    }

    /// Per-head width of layer `layer` (0-based).
    pub fn head_dim(&self, layer: usize) -> usize {
        if layer + 1 == self.n_layers() {
            self.d_out / self.n_heads
        } else {
            self.d_hidden / self.n_heads
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d_codebook == 0 || self.d_hidden == 0 || self.d_out == 0 || self.n_heads == 0 {
            return bad("dimensions and head count must be positive".into());
        }
        if !self.d_hidden.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_hidden {} not divisible by n_heads {}",
                self.d_hidden, self.n_heads
            ));
        }
        if !self.d_out.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_out {} not divisible by n_heads {}",
                self.d_out, self.n_heads
            ));
        }
        if self.neighbor_sizes.is_empty() {
            return bad("need at least one layer".into());
        }
        for (name, r) in [
            ("dropout", self.dropout),
            ("edge_dropout", self.edge_dropout),
            ("weight_decay", self.weight_decay),
            ("warmup_fraction", self.warmup_fraction),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} {r} outside [0, 1]"));
            }
        }
        if self.dropout >= 1.0 {
            return bad("dropout must be below 1".into());
        }
        if !(self.lr >= 0.0 && self.max_grad_norm > 0.0 && self.beta > 0.0) {
            return bad("lr must be non-negative, max_grad_norm and beta positive".into());
        }
        if !(self.tau0 > 0.0 && self.tau_min > 0.0 && self.tau_min <= self.tau_max) {
            return bad("temperatures must be positive with tau_min <= tau_max".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        Ok(())
    }

    /// Short hex digest identifying this configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&json);
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub config_hash: String,
    pub seed: u64,
    pub epochs_run: usize,
    #[serde(default)]
    pub final_tau: f64,
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

/// Trained node embeddings, one row per vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    pub matrix: Array2<f32>,
    pub meta: EmbeddingMeta,
}

impl NodeEmbeddings {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        binio::encode_with_trailer(EMBEDDING_MAGIC, &self.matrix, &meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (matrix, meta) = binio::decode_with_trailer(EMBEDDING_MAGIC, bytes)?;
        Ok(Self {
            matrix,
            meta: serde_json::from_slice(meta)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&binio::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_split() {
        let cfg = GnnConfig {
            d_hidden: 128,
            ..GnnConfig::default()
        };
        assert_eq!(cfg.head_dim(0), 64);
        assert_eq!(cfg.head_dim(1), 16);
        let bad = GnnConfig {
            d_hidden: 3,
            ..GnnConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn embedding_file_round_trip() {
        let emb = NodeEmbeddings {
            matrix: Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f32 * 0.5),
            meta: EmbeddingMeta {
                config_hash: "abc".into(),
                seed: 4,
                epochs_run: 7,
                final_tau: 0.05,
                loss_history: vec![1.0, 0.5],
            },
        };
        let back = NodeEmbeddings::from_bytes(&emb.to_bytes()).unwrap();
        assert_eq!(back, emb);
    }
}
