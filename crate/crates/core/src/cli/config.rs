//! TOML pipeline configuration. Every field is optional; command-line
//! flags take precedence over values read here.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::SyntheticSpec;
use crate::error::{Error, Result};
use crate::gnn::GnnConfig;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub paths: Paths,
    pub synthetic: SyntheticSpec,
    pub graph: GraphSection,
    pub gnn: GnnConfig,
    pub cluster: ClusterSection,
    pub vtd: VtdSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub clustering: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub eval_grids: Option<PathBuf>,
    pub mask_corpus: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub hidden: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub edited: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub block_h: Option<usize>,
    pub block_w: Option<usize>,
    pub retention: Option<f64>,
    pub excluded_labels: Option<Vec<String>>,
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub cluster_size: Option<usize>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VtdSection {
    pub preset: Option<String>,
    pub model_tag: Option<String>,
    pub layer: Option<usize>,
    pub gamma: Option<f64>,
    pub n_dominant: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
