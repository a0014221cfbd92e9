//! Balanced k-means over token embeddings.
//!
//! Cluster sizes are forced to differ by at most one: with `n` points and
//! `k` clusters, exactly `n % k` clusters hold `n / k + 1` points and the
//! rest hold `n / k`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{self, EMBEDDING_MAGIC};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub cluster_size: usize,
    /// Cluster ID of every token, indexed by token ID.
    pub assignment: Vec<u32>,
    /// `k x d` centroids in the normalised embedding space.
    pub centroids: Array2<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CentroidMeta {
    k: usize,
    cluster_size: usize,
}

impl Clustering {
    pub fn n_tokens(&self) -> usize {
        self.assignment.len()
    }

    pub fn cluster_of(&self, token: usize) -> Result<u32> {
        self.assignment
            .get(token)
            .copied()
            .ok_or(Error::OutOfRangeToken {
                token,
                vocab_size: self.assignment.len(),
            })
    }

    /// Token IDs of every cluster, ascending.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.k];
        for (t, &c) in self.assignment.iter().enumerate() {
            out[c as usize].push(t as u32);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &c in &self.assignment {
            out[c as usize] += 1;
        }
        out
    }

    /// `token_id,cluster_id` lines with a header, sorted by token.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("token_id,cluster_id\n");
        for (t, c) in self.assignment.iter().enumerate() {
            writeln!(s, "{t},{c}").unwrap();
        }
        s
    }

    /// Write the assignment CSV and its centroid sibling.
    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, self.to_csv().as_bytes())?;
        let meta = serde_json::to_vec(&CentroidMeta {
            k: self.k,
            cluster_size: self.cluster_size,
        })?;
        let bytes = binio::encode_with_trailer(EMBEDDING_MAGIC, &self.centroids, &meta);
        binio::write_file(&centroids_path(path), &bytes)
    }

    /// Read an assignment CSV and, when present, its centroid sibling.
    pub fn load(path: &Path) -> Result<Self> {
        let text = String::from_utf8(binio::read_file(path)?).map_err(|_| Error::MalformedRecord {
            line: 0,
            reason: "assignment file is not UTF-8".into(),
        })?;
        let assignment = parse_csv(&text)?;
        let cpath = centroids_path(path);
        let (centroids, meta) = if cpath.exists() {
            let bytes = binio::read_file(&cpath)?;
            let (m, trailer) = binio::decode_with_trailer(EMBEDDING_MAGIC, &bytes)?;
            (m, Some(serde_json::from_slice::<CentroidMeta>(trailer)?))
        } else {
            (Array2::zeros((0, 0)), None)
        };
        let k = match &meta {
            Some(m) => m.k,
            None => assignment.iter().map(|&c| c as usize + 1).max().unwrap_or(0),
        };
        if let Some(&bad) = assignment.iter().find(|&&c| c as usize >= k) {
            return Err(Error::MalformedRecord {
                line: 0,
                reason: format!("cluster {bad} outside [0, {k})"),
            });
        }
        let cluster_size = meta
            .map(|m| m.cluster_size)
            .unwrap_or_else(|| assignment.len().div_ceil(k.max(1)));
        Ok(Self {
            k,
            cluster_size,
            assignment,
            centroids,
        })
    }
}

/// `<dir>/<stem>.centroids.cgce` next to an assignment file.
pub fn centroids_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.centroids.cgce"))
}

fn parse_csv(text: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("token_id")) {
            continue;
        }
        let bad = |reason: String| Error::MalformedRecord {
            line: idx + 1,
            reason,
        };
        let (t, c) = line
            .split_once(',')
            .ok_or_else(|| bad("expected token_id,cluster_id".into()))?;
        let t: usize = t.trim().parse().map_err(|_| bad(format!("bad token id {t:?}")))?;
        let c: u32 = c.trim().parse().map_err(|_| bad(format!("bad cluster id {c:?}")))?;
        if t != out.len() {
            return Err(bad(format!("expected token {}, found {t}", out.len())));
        }
        out.push(c);
    }
    Ok(out)
}

fn normalize_rows(x: &Array2<f32>) -> Array2<f64> {
    let mut out = x.mapv(f64::from);
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(points: &Array2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select(Axis(0), &chosen)
}

/// Assign points under the size constraint, most confident points first.
fn balanced_assign(points: &Array2<f64>, centroids: &Array2<f64>) -> Vec<u32> {
    let (n, k) = (points.nrows(), centroids.nrows());
    let dists: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            centroids
                .rows()
                .into_iter()
                .map(|c| sq_dist(points.row(i), c))
                .collect()
        })
        .collect();
    let margins: Vec<(f64, usize)> = dists
        .iter()
        .map(|d| {
            let (mut best, mut second) = (f64::INFINITY, f64::INFINITY);
            let mut arg = 0;
            for (c, &v) in d.iter().enumerate() {
                if v < best {
                    second = best;
                    best = v;
                    arg = c;
                } else if v < second {
                    second = v;
                }
            }
            (if k > 1 { second - best } else { 0.0 }, arg)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| margins[b].0.total_cmp(&margins[a].0).then(a.cmp(&b)));

    let q = n / k;
    let r = n % k;
    let mut sizes = vec![0usize; k];
    let mut n_large = 0;
    let mut assignment = vec![0u32; n];
    let open = |sizes: &[usize], n_large: usize, c: usize| sizes[c] < q || (sizes[c] == q && n_large < r);
    for i in order {
        let c = if open(&sizes, n_large, margins[i].1) {
            margins[i].1
        } else {
            (0..k)
                .filter(|&c| open(&sizes, n_large, c))
                .min_by(|&a, &b| dists[i][a].total_cmp(&dists[i][b]).then(a.cmp(&b)))
                .expect("capacity covers every point")
        };
        if sizes[c] == q {
            n_large += 1;
        }
        sizes[c] += 1;
        assignment[i] = c as u32;
    }
    assignment
}

fn update_centroids(points: &Array2<f64>, assignment: &[u32], k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &c) in points.rows().into_iter().zip(assignment) {
        sums.row_mut(c as usize).scaled_add(1.0, &p);
        counts[c as usize] += 1;
    }
    for (mut row, &n) in sums.rows_mut().into_iter().zip(&counts) {
        if n > 0 {
            row /= n as f64;
        }
    }
    sums
}

/// Balanced k-means with `k = ceil(n / cluster_size)` on L2-normalised rows.
pub fn balanced_kmeans(
    embeddings: &Array2<f32>,
    cluster_size: usize,
    max_iter: usize,
    seed: u64,
) -> Result<Clustering> {
    let n = embeddings.nrows();
    if cluster_size == 0 || cluster_size > n {
        return Err(Error::InvalidClusterSize { cluster_size, n });
    }
    let k = n.div_ceil(cluster_size);
    let points = normalize_rows(embeddings);
    let mut centroids = kmeans_pp(&points, k, &mut rng::stream(seed, "cluster/init"));
    let mut assignment = balanced_assign(&points, &centroids);
    for _ in 0..max_iter {
        centroids = update_centroids(&points, &assignment, k);
        let next = balanced_assign(&points, &centroids);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let centroids = update_centroids(&points, &assignment, k);
    Ok(Clustering {
        k,
        cluster_size,
        assignment,
        centroids: centroids.mapv(|v| v as f32),
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let comb2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| comb2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| comb2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| comb2(v)).sum();
    let expected = sum_a * sum_b / comb2(a.len() as f64);
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}
