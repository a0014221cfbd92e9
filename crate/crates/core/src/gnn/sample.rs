//! Layer-wise neighborhood sampling.

use std::collections::HashMap;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

/// A local computation graph. The first `n_targets` entries of `nodes` are
/// the batch nodes; `incoming[i]` lists `(local source, weight)` messages
/// into local node `i`, excluding the implicit self-edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSubgraph {
    pub nodes: Vec<u32>,
    pub n_targets: usize,
    pub incoming: Vec<Vec<(usize, f64)>>,
}

impl SampledSubgraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.incoming.iter().map(Vec::len).sum()
    }

    /// Graph edges whose endpoints are both batch nodes, as local
    /// `(i, j, weight)` with `i < j`, each unordered pair once.
    pub fn batch_edges(&self, adjacency: &[Vec<(u32, f32)>]) -> Vec<(usize, usize, f64)> {
        let local: HashMap<u32, usize> = self.nodes[..self.n_targets]
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, i))
            .collect();
        let mut out = Vec::new();
        for (i, &node) in self.nodes[..self.n_targets].iter().enumerate() {
            for &(nb, w) in &adjacency[node as usize] {
                if let Some(&j) = local.get(&nb) {
                    if i < j {
                        out.push((i, j, w as f64));
                    }
                }
            }
        }
        out.sort_unstable_by_key(|&(i, j, _)| (i, j));
        out
    }
}

/// The unsampled computation graph over every node, targets in ID order.
pub fn full_subgraph(adjacency: &[Vec<(u32, f32)>]) -> SampledSubgraph {
    SampledSubgraph {
        nodes: (0..adjacency.len() as u32).collect(),
        n_targets: adjacency.len(),
        incoming: adjacency
            .iter()
            .map(|l| l.iter().map(|&(n, w)| (n as usize, w as f64)).collect())
            .collect(),
    }
}

/// Sample a layered neighborhood around `batch`.
///
/// Hop `k` draws up to `sizes[k]` neighbors, without replacement, for every
/// node first reached at hop `k - 1` (the batch itself for hop 1).
pub fn sample_neighborhood(
    adjacency: &[Vec<(u32, f32)>],
    batch: &[u32],
    sizes: &[usize],
    rng: &mut ChaCha8Rng,
) -> SampledSubgraph {
    let mut nodes: Vec<u32> = Vec::with_capacity(batch.len());
    let mut local: HashMap<u32, usize> = HashMap::with_capacity(batch.len());
    for &b in batch {
        if let std::collections::hash_map::Entry::Vacant(e) = local.entry(b) {
            e.insert(nodes.len());
            nodes.push(b);
        }
    }
    let n_targets = nodes.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_targets];
    let mut frontier: Vec<usize> = (0..n_targets).collect();
    for &cap in sizes {
        let mut next = Vec::new();
        for &dst in &frontier {
            let neigh = &adjacency[nodes[dst] as usize];
            let picked: Vec<usize> = if neigh.len() <= cap {
                (0..neigh.len()).collect()
            } else {
                let mut p = index::sample(rng, neigh.len(), cap).into_vec();
                p.sort_unstable();
                p
            };
            for k in picked {
                let (src, w) = neigh[k];
                let src_local = *local.entry(src).or_insert_with(|| {
                    nodes.push(src);
                    incoming.push(Vec::new());
                    next.push(nodes.len() - 1);
                    nodes.len() - 1
                });
                incoming[dst].push((src_local, w as f64));
            }
        }
        frontier = next;
    }
    SampledSubgraph {
        nodes,
        n_targets,
        incoming,
    }
}
