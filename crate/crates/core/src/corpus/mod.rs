//! Tokenized images with panoptic segment annotations.
//!
//! A corpus is stored as JSON Lines, one [`TokenGrid`] per line. Codebooks
//! use the `CGCB` binary format (see [`crate::binio`]).

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader, CODEBOOK_MAGIC};
use crate::error::{Error, Result};

pub use synthetic::{
    generate_synthetic_corpus, hallucination_benchmark, BenchmarkSpec, HallucinationBenchmark,
    PlantedTruth, SyntheticSpec,
};

/// Segment ID for positions not covered by any labelled segment.
pub const UNLABELED: i32 = -1;

/// One tokenized image: row-major codebook IDs plus a parallel segment grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrid {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub tokens: Vec<u32>,
    pub segments: Vec<i32>,
    #[serde(default)]
    pub segment_labels: BTreeMap<i32, String>,
}

impl TokenGrid {
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Label of the segment at `pos`, if the position is labelled.
    pub fn label_at(&self, pos: usize) -> Option<&str> {
        let seg = self.segments[pos];
        if seg == UNLABELED {
            return None;
        }
        self.segment_labels.get(&seg).map(String::as_str)
    }

    /// Distinct tokens present in the grid, ascending.
    pub fn unique_tokens(&self) -> BTreeSet<u32> {
        self.tokens.iter().copied().collect()
    }

    /// Check the structural invariants, optionally against a vocabulary size.
    pub fn validate(&self, vocab_size: Option<usize>) -> std::result::Result<(), String> {
        if self.height == 0 || self.width == 0 {
            return Err(format!(
                "grid dimensions must be positive, got {}x{}",
                self.height, self.width
            ));
        }
        let m = self.height * self.width;
        if self.tokens.len() != m {
            return Err(format!(
                "tokens has length {}, expected {}x{} = {m}",
                self.tokens.len(),
                self.height,
                self.width
            ));
        }
        if self.segments.len() != m {
            return Err(format!(
                "segments has length {}, expected {m}",
                self.segments.len()
            ));
        }
        if let Some(v) = vocab_size {
            if let Some(&t) = self.tokens.iter().find(|&&t| t as usize >= v) {
                return Err(format!("token {t} >= vocabulary size {v}"));
            }
        }
        for &s in &self.segments {
            if s == UNLABELED {
                continue;
            }
            if s < 0 {
                return Err(format!("segment id {s} is negative"));
            }
            if !self.segment_labels.contains_key(&s) {
                return Err(format!("segment id {s} has no label"));
            }
        }
        Ok(())
    }
}

/// A non-empty collection of grids over one shared vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<TokenGrid>,
    pub codebook_size: usize,
}

impl Corpus {
    pub fn new(records: Vec<TokenGrid>, codebook_size: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::MalformedRecord {
                line: 0,
                reason: "corpus is empty".into(),
            });
        }
        for (i, r) in records.iter().enumerate() {
            r.validate(Some(codebook_size))
                .map_err(|reason| Error::MalformedRecord { line: i + 1, reason })?;
        }
        Ok(Self {
            records,
            codebook_size,
        })
    }

    pub fn get(&self, image_id: &str) -> Option<&TokenGrid> {
        self.records.iter().find(|r| r.image_id == image_id)
    }
}

/// Load a JSON Lines corpus.
///
/// With `declared_vocab` set, any token at or beyond it is an
/// `InconsistentVocab` error; otherwise the vocabulary size is inferred as
/// one past the largest token seen.
pub fn load_corpus(path: &Path, declared_vocab: Option<usize>) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut max_token: Option<u32> = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let grid: TokenGrid =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        grid.validate(None)
            .map_err(|reason| Error::MalformedRecord { line: line_no, reason })?;
        if let Some(&t) = grid.tokens.iter().max() {
            if let Some(v) = declared_vocab {
                if t as usize >= v {
                    return Err(Error::InconsistentVocab(format!(
                        "line {line_no}: token {t} >= declared vocabulary size {v}"
                    )));
                }
            }
            max_token = Some(max_token.map_or(t, |m| m.max(t)));
        }
        records.push(grid);
    }
    if records.is_empty() {
        return Err(Error::MalformedRecord {
            line: 0,
            reason: "corpus file holds no records".into(),
        });
    }
    let codebook_size =
        declared_vocab.unwrap_or_else(|| max_token.map_or(1, |m| m as usize + 1));
    Ok(Corpus {
        records,
        codebook_size,
    })
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &corpus.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// The tokenizer's embedding table, one row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub matrix: Array2<f32>,
}

impl Codebook {
    pub fn new(matrix: Array2<f32>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidSpec(format!(
                "codebook must be non-empty, got {rows}x{cols}"
            )));
        }
        if let Some((idx, _)) = matrix.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: idx / cols,
                col: idx % cols,
            });
        }
        Ok(Self { matrix })
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        binio::encode_matrix(CODEBOOK_MAGIC, &self.matrix)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CODEBOOK_MAGIC)?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let matrix = binio::read_payload(&mut r, rows, cols)?;
        Self::new(matrix)
    }
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    Codebook::from_bytes(&binio::read_file(path)?)
}

pub fn save_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    binio::write_file(path, &codebook.to_bytes())
}
