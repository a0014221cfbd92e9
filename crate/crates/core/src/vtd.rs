//! Hidden-state decontamination.
//!
//! Tokens that belong to an image's dominant clusters but do not appear in
//! the image are treated as hallucinative. Their latent vectors are
//! projected out of every image-token hidden state, scaled by cosine
//! similarity and a global magnitude `gamma`.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::analysis::dominant_clusters;
use crate::binio;
use crate::cluster::Clustering;
use crate::corpus::TokenGrid;
use crate::error::{Error, Result};

/// Portable description of one edit, consumed by external runtimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPlan {
    pub model_tag: String,
    pub layer: usize,
    pub gamma: f64,
    pub n_dominant: usize,
    pub dominant_cluster_ids: Vec<u32>,
    pub hallucinative_token_ids: Vec<u32>,
    pub present_token_ids: Vec<u32>,
}

impl EditPlan {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&binio::read_file(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        binio::write_file(path, &bytes)
    }
}

/// Per-model edit settings and the model dimensions they were tuned for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub cluster_size: usize,
    pub n_dominant: usize,
    pub layer: usize,
    pub gamma: f64,
    pub d_codebook: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub vocab_size: usize,
}

pub const PRESETS: [Preset; 3] = [
    Preset {
        name: "chameleon-7b",
        cluster_size: 10,
        n_dominant: 2,
        layer: 25,
        gamma: 0.5,
        d_codebook: 256,
        d_hidden: 128,
        d_out: 256,
        vocab_size: 8192,
    },
    Preset {
        name: "janus-pro-7b",
        cluster_size: 10,
        n_dominant: 2,
        layer: 27,
        gamma: 0.2,
        d_codebook: 8,
        d_hidden: 128,
        d_out: 32,
        vocab_size: 16384,
    },
    Preset {
        name: "emu3-13b",
        cluster_size: 10,
        n_dominant: 4,
        layer: 21,
        gamma: 0.6,
        d_codebook: 4,
        d_hidden: 64,
        d_out: 32,
        vocab_size: 32768,
    },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Hallucinative tokens for `grid`: members of its `n_dominant` dominant
/// clusters that the image does not contain.
pub fn plan_edit(
    grid: &TokenGrid,
    clustering: &Clustering,
    model_tag: &str,
    n_dominant: usize,
    layer: usize,
    gamma: f64,
) -> Result<EditPlan> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be non-negative, got {gamma}")));
    }
    if n_dominant == 0 {
        return Err(Error::Config("n_dominant must be at least 1".into()));
    }
    let dominant = dominant_clusters(grid, clustering, n_dominant)?;
    let present = grid.unique_tokens();
    let hallucinative = clustering
        .assignment
        .iter()
        .enumerate()
        .filter(|&(t, c)| dominant.contains(c) && !present.contains(&(t as u32)))
        .map(|(t, _)| t as u32)
        .collect();
    Ok(EditPlan {
        model_tag: model_tag.to_string(),
        layer,
        gamma,
        n_dominant,
        dominant_cluster_ids: dominant,
        hallucinative_token_ids: hallucinative,
        present_token_ids: present.into_iter().collect(),
    })
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Subtract each vector of `hal` from every row of `hidden` in turn:
/// `g <- g - gamma * (ĝ·â / ||â||²) * a`. Later vectors see the rows already
/// edited by earlier ones. Zero rows and zero vectors are left alone.
pub fn decontaminate(hidden: &mut Array2<f64>, hal: &[Array1<f64>], gamma: f64) -> Result<()> {
    let d = hidden.ncols();
    if let Some(a) = hal.iter().find(|a| a.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: a.len(),
        });
    }
    for a in hal {
        let a_norm = norm(a);
        if a_norm == 0.0 {
            continue;
        }
        let a_hat = a / a_norm;
        let denom = a_hat.dot(&a_hat);
        for mut g in hidden.rows_mut() {
            let g_norm = g.dot(&g).sqrt();
            if g_norm == 0.0 {
                continue;
            }
            let coeff = g.dot(&a_hat) / g_norm / denom;
            g.scaled_add(-gamma * coeff, a);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditSummary {
    pub n_edits: usize,
    pub max_row_delta_norm: f64,
}

/// Edit an in-memory hidden-state matrix with rows of `table`.
pub fn apply_plan(
    hidden: &Array2<f32>,
    table: &Array2<f32>,
    plan: &EditPlan,
) -> Result<(Array2<f32>, EditSummary)> {
    if plan.hallucinative_token_ids.is_empty() {
        return Ok((
            hidden.clone(),
            EditSummary {
                n_edits: 0,
                max_row_delta_norm: 0.0,
            },
        ));
    }
    if table.ncols() != hidden.ncols() {
        return Err(Error::DimensionMismatch {
            expected: hidden.ncols(),
            found: table.ncols(),
        });
    }
    let mut ids = plan.hallucinative_token_ids.clone();
    ids.sort_unstable();
    let hal = ids
        .iter()
        .map(|&t| {
            if t as usize >= table.nrows() {
                return Err(Error::MissingToken {
                    token: t as usize,
                    rows: table.nrows(),
                });
            }
            Ok(table.row(t as usize).mapv(f64::from))
        })
        .collect::<Result<Vec<_>>>()?;
    let before = hidden.mapv(f64::from);
    let mut after = before.clone();
    decontaminate(&mut after, &hal, plan.gamma)?;
    let max_row_delta_norm = (&after - &before)
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    let out = after.mapv(|v| v as f32);
    if let Some((idx, _)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            row: idx / out.ncols(),
            col: idx % out.ncols(),
        });
    }
    Ok((
        out,
        EditSummary {
            n_edits: hal.len(),
            max_row_delta_norm,
        },
    ))
}

/// File-level wrapper: read a `CGCH` hidden-state file and an embedding
/// table (any matrix format), write the edited `CGCH` file.
pub fn apply_edit(hidden_path: &Path, table_path: &Path, plan: &EditPlan, out_path: &Path) -> Result<EditSummary> {
    let hidden_bytes = binio::read_file(hidden_path)?;
    if plan.hallucinative_token_ids.is_empty() {
        // Validate, then copy verbatim.
        binio::decode_matrix(binio::HIDDEN_MAGIC, &hidden_bytes)?;
        binio::write_file(out_path, &hidden_bytes)?;
        return Ok(EditSummary {
            n_edits: 0,
            max_row_delta_norm: 0.0,
        });
    }
    let hidden = binio::decode_matrix(binio::HIDDEN_MAGIC, &hidden_bytes)?;
    let table = binio::read_any_matrix(table_path)?;
    let (edited, summary) = apply_plan(&hidden, &table, plan)?;
    binio::write_hidden(out_path, &edited)?;
    Ok(summary)
}
