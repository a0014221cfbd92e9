//! Context-guided co-occurrence graph over the token vocabulary.
//!
//! Two positions of one image co-occur when they share a non-overlapping
//! `block_h x block_w` block, or when they lie in the same labelled segment
//! whose label is not excluded. Each qualifying position pair adds one to
//! the count of its (unordered, distinct) token pair.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{self, Reader, GRAPH_MAGIC};
use crate::corpus::{Corpus, TokenGrid, UNLABELED};
use crate::error::{Error, Result};

/// Upper-triangular sparse co-occurrence counts, keyed by `(i, j)` with `i < j`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceCounts {
    pub vocab_size: usize,
    pub counts: HashMap<(u32, u32), u64>,
}

impl CooccurrenceCounts {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            counts: HashMap::new(),
        }
    }

    /// Add one to the pair `{a, b}`; self-pairs are ignored.
    pub fn bump(&mut self, a: u32, b: u32) {
        if a == b {
            return;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        *self.counts.entry(key).or_insert(0) += 1;
    }

    pub fn get(&self, a: u32, b: u32) -> u64 {
        let key = if a < b { (a, b) } else { (b, a) };
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// Number of non-zero unordered pairs.
    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn merge(mut self, other: Self) -> Self {
        let (mut big, small) = if self.counts.len() >= other.counts.len() {
            (std::mem::take(&mut self.counts), other.counts)
        } else {
            (other.counts, std::mem::take(&mut self.counts))
        };
        for (k, v) in small {
            *big.entry(k).or_insert(0) += v;
        }
        Self {
            vocab_size: self.vocab_size.max(other.vocab_size),
            counts: big,
        }
    }

    /// Pairs sorted by `(i, j)`.
    pub fn sorted(&self) -> Vec<((u32, u32), u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(&k, &c)| (k, c)).collect();
        v.sort_unstable_by_key(|&(k, _)| k);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountParams {
    pub block_h: usize,
    pub block_w: usize,
    pub excluded_labels: BTreeSet<String>,
}

impl Default for CountParams {
    fn default() -> Self {
        Self {
            block_h: 3,
            block_w: 3,
            excluded_labels: BTreeSet::from(["sky-other-merged".to_string()]),
        }
    }
}

/// Counts contributed by a single image.
pub fn count_grid(grid: &TokenGrid, params: &CountParams, vocab_size: usize) -> CooccurrenceCounts {
    let (h, w) = (grid.height, grid.width);
    let (bh, bw) = (params.block_h, params.block_w);
    let blocks_per_row = w.div_ceil(bw);
    let block_of = |pos: usize| (pos / w / bh) * blocks_per_row + (pos % w) / bw;

    let mut out = CooccurrenceCounts::new(vocab_size);

    // Spatial pairs: every pair inside one block.
    for br in (0..h).step_by(bh) {
        for bc in (0..w).step_by(bw) {
            let members: Vec<usize> = (br..(br + bh).min(h))
                .flat_map(|r| (bc..(bc + bw).min(w)).map(move |c| r * w + c))
                .collect();
            for (a, &p) in members.iter().enumerate() {
                for &q in &members[a + 1..] {
                    out.bump(grid.tokens[p], grid.tokens[q]);
                }
            }
        }
    }

    // Semantic pairs: same non-excluded segment, different block (pairs in
    // the same block were already counted once above).
    let mut by_segment: HashMap<i32, Vec<usize>> = HashMap::new();
    for (pos, &seg) in grid.segments.iter().enumerate() {
        if seg == UNLABELED {
            continue;
        }
        match grid.segment_labels.get(&seg) {
            Some(label) if params.excluded_labels.contains(label) => continue,
            _ => by_segment.entry(seg).or_default().push(pos),
        }
    }
    for members in by_segment.values() {
        let blocks: Vec<usize> = members.iter().map(|&p| block_of(p)).collect();
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                if blocks[a] != blocks[b] {
                    out.bump(grid.tokens[members[a]], grid.tokens[members[b]]);
                }
            }
        }
    }
    out
}

/// Accumulate co-occurrence counts over the whole corpus.
///
/// Images are counted in parallel; integer addition makes the merge exact
/// regardless of scheduling.
pub fn count_cooccurrences(corpus: &Corpus, params: &CountParams) -> Result<CooccurrenceCounts> {
    if params.block_h == 0 || params.block_w == 0 {
        return Err(Error::Config("block dimensions must be at least 1".into()));
    }
    let v = corpus.codebook_size;
    Ok(corpus
        .records
        .par_iter()
        .map(|g| count_grid(g, params, v))
        .reduce(|| CooccurrenceCounts::new(v), CooccurrenceCounts::merge))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    pub weight: f32,
}

/// Undirected weighted graph; edges sorted by `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceGraph {
    pub vocab_size: usize,
    pub edges: Vec<Edge>,
}

/// Number of edges kept from `nnz` non-zero pairs.
pub fn retained_edges(nnz: usize, retention: f64) -> usize {
    (retention * nnz as f64).floor() as usize
}

/// Keep the strongest `floor(retention * nnz)` pairs, weighted by
/// `count / max_count`. Ties at the cutoff go to the smaller `(i, j)`.
pub fn build_graph(counts: &CooccurrenceCounts, retention: f64) -> Result<CooccurrenceGraph> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(Error::Config(format!("retention {retention} outside (0, 1]")));
    }
    let mut pairs = counts.sorted();
    let keep = retained_edges(pairs.len(), retention);
    let max = pairs.iter().map(|&(_, c)| c).max().unwrap_or(0);
    // Stable sort keeps ascending (i, j) among equal counts.
    pairs.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    pairs.truncate(keep);
    pairs.sort_unstable_by_key(|&(k, _)| k);
    let edges = pairs
        .into_iter()
        .map(|((i, j), c)| Edge {
            i,
            j,
            weight: (c as f64 / max as f64) as f32,
        })
        .collect();
    Ok(CooccurrenceGraph {
        vocab_size: counts.vocab_size,
        edges,
    })
}

impl CooccurrenceGraph {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Adjacency lists `(neighbor, weight)`, each sorted by neighbor.
    pub fn adjacency(&self) -> Vec<Vec<(u32, f32)>> {
        let mut adj = vec![Vec::new(); self.vocab_size];
        for e in &self.edges {
            adj[e.i as usize].push((e.j, e.weight));
            adj[e.j as usize].push((e.i, e.weight));
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(n, _)| n);
        }
        adj
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.edges.len() * 12);
        out.extend_from_slice(GRAPH_MAGIC);
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.edges.len() as u64).to_le_bytes());
        for e in &self.edges {
            out.extend_from_slice(&e.i.to_le_bytes());
            out.extend_from_slice(&e.j.to_le_bytes());
            out.extend_from_slice(&e.weight.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(GRAPH_MAGIC)?;
        let vocab_size = r.u32()? as usize;
        let n = r.u64()?;
        r.require(n.saturating_mul(12))?;
        let mut edges = Vec::with_capacity(n as usize);
        for k in 0..n as usize {
            let (i, j, weight) = (r.u32()?, r.u32()?, r.f32()?);
            if !weight.is_finite() {
                return Err(Error::NonFiniteValue { row: k, col: 2 });
            }
            if i >= j || j as usize >= vocab_size {
                return Err(Error::InconsistentVocab(format!(
                    "edge {k} ({i}, {j}) is not an upper-triangular pair below {vocab_size}"
                )));
            }
            edges.push(Edge { i, j, weight });
        }
        Ok(Self { vocab_size, edges })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&binio::read_file(path)?)
    }
}
