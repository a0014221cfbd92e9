//! Dominant-cluster statistics, token/object association and the
//! hallucination metrics computed from object sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::Clustering;
use crate::corpus::{Corpus, TokenGrid};
use crate::error::{Error, Result};

/// Objects mentioned in a model response next to the annotated objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallucinationRecord {
    pub image_id: String,
    pub mentioned_objects: BTreeSet<String>,
    pub truth_objects: BTreeSet<String>,
}

impl HallucinationRecord {
    /// Mentioned objects that are not annotated.
    pub fn hallucinated(&self) -> impl Iterator<Item = &String> {
        self.mentioned_objects.difference(&self.truth_objects)
    }
}

pub fn load_records(path: &Path) -> Result<Vec<HallucinationRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: HallucinationRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        if rec.mentioned_objects.iter().chain(&rec.truth_objects).any(String::is_empty) {
            return Err(Error::MalformedRecord {
                line: idx + 1,
                reason: "empty object label".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[HallucinationRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Occurrences of each cluster over the grid positions.
fn cluster_counts(grid: &TokenGrid, clustering: &Clustering) -> Result<BTreeMap<u32, usize>> {
    let mut counts = BTreeMap::new();
    for &t in &grid.tokens {
        *counts.entry(clustering.cluster_of(t as usize)?).or_insert(0) += 1;
    }
    Ok(counts)
}

/// The `n` clusters covering most grid positions, largest first, ties by
/// ascending cluster ID.
pub fn dominant_clusters(grid: &TokenGrid, clustering: &Clustering, n: usize) -> Result<Vec<u32>> {
    let mut ranked: Vec<(u32, usize)> = cluster_counts(grid, clustering)?.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(n).map(|(c, _)| c).collect())
}

/// Split of an image's tokens relative to its most dominant cluster `D`:
/// `c1` present tokens in `D`, `c2` absent tokens of `D`, `c3` present
/// tokens outside `D`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TokenGroups {
    pub c1: BTreeSet<u32>,
    pub c2: BTreeSet<u32>,
    pub c3: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupSelector {
    C1,
    C2,
    C3,
}

impl TokenGroups {
    pub fn get(&self, which: GroupSelector) -> &BTreeSet<u32> {
        match which {
            GroupSelector::C1 => &self.c1,
            GroupSelector::C2 => &self.c2,
            GroupSelector::C3 => &self.c3,
        }
    }
}

pub fn token_groups(grid: &TokenGrid, clustering: &Clustering) -> Result<TokenGroups> {
    let present = grid.unique_tokens();
    let Some(&dominant) = dominant_clusters(grid, clustering, 1)?.first() else {
        return Ok(TokenGroups::default());
    };
    let members: BTreeSet<u32> = clustering
        .assignment
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c == dominant)
        .map(|(t, _)| t as u32)
        .collect();
    Ok(TokenGroups {
        c1: present.intersection(&members).copied().collect(),
        c2: members.difference(&present).copied().collect(),
        c3: present.difference(&members).copied().collect(),
    })
}

/// How often tokens of a group fall inside each object's masks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AssociationTable {
    pub counts: BTreeMap<String, u64>,
}

impl AssociationTable {
    /// Labels by descending count, ties by label.
    pub fn ranking(&self) -> Vec<(&str, u64)> {
        let mut r: Vec<(&str, u64)> = self.counts.iter().map(|(l, &c)| (l.as_str(), c)).collect();
        r.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        r
    }

    pub fn top_k(&self, k: usize) -> Vec<&str> {
        self.ranking().into_iter().take(k).map(|(l, _)| l).collect()
    }

    pub fn merge(&mut self, other: &AssociationTable) {
        for (l, c) in &other.counts {
            *self.counts.entry(l.clone()).or_insert(0) += c;
        }
    }
}

pub fn object_association(
    group: &BTreeSet<u32>,
    corpus: &Corpus,
    excluded_labels: &BTreeSet<String>,
) -> AssociationTable {
    let mut table = AssociationTable::default();
    if group.is_empty() {
        return table;
    }
    for grid in &corpus.records {
        for (pos, t) in grid.tokens.iter().enumerate() {
            if !group.contains(t) {
                continue;
            }
            if let Some(label) = grid.label_at(pos) {
                if !excluded_labels.contains(label) {
                    *table.counts.entry(label.to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    table
}

/// Per-token label counts over a mask corpus, so that association tables
/// for many groups can be formed without rescanning the corpus.
#[derive(Debug, Clone, Default)]
pub struct TokenLabelIndex {
    by_token: HashMap<u32, BTreeMap<String, u64>>,
}

impl TokenLabelIndex {
    pub fn new(corpus: &Corpus, excluded_labels: &BTreeSet<String>) -> Self {
        let mut by_token: HashMap<u32, BTreeMap<String, u64>> = HashMap::new();
        for grid in &corpus.records {
            for (pos, &t) in grid.tokens.iter().enumerate() {
                if let Some(label) = grid.label_at(pos) {
                    if !excluded_labels.contains(label) {
                        *by_token.entry(t).or_default().entry(label.to_string()).or_insert(0) += 1;
                    }
                }
            }
        }
        Self { by_token }
    }

    pub fn association(&self, group: &BTreeSet<u32>) -> AssociationTable {
        let mut table = AssociationTable::default();
        for t in group {
            if let Some(m) = self.by_token.get(t) {
                for (l, c) in m {
                    *table.counts.entry(l.clone()).or_insert(0) += c;
                }
            }
        }
        table
    }
}

/// Pooled HitRate for several `K` at once: for each record, the hallucinated
/// objects are checked against the top-`K` objects associated with the
/// selected token group of that record's image.
pub fn hitrate_curve(
    records: &[HallucinationRecord],
    grids: &HashMap<String, TokenGrid>,
    index: &TokenLabelIndex,
    clustering: &Clustering,
    ks: &[usize],
    selector: GroupSelector,
) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; ks.len()];
    let mut total = 0usize;
    for rec in records {
        let hallucinated: Vec<&String> = rec.hallucinated().collect();
        if hallucinated.is_empty() {
            continue;
        }
        let grid = grids
            .get(&rec.image_id)
            .ok_or_else(|| Error::MissingGrid(rec.image_id.clone()))?;
        let groups = token_groups(grid, clustering)?;
        let table = index.association(groups.get(selector));
        let ranking = table.ranking();
        total += hallucinated.len();
        for (slot, &k) in ks.iter().enumerate() {
            let top: BTreeSet<&str> = ranking.iter().take(k).map(|(l, _)| *l).collect();
            hits[slot] += hallucinated.iter().filter(|o| top.contains(o.as_str())).count();
        }
    }
    if total == 0 {
        return Err(Error::NoHallucinations);
    }
    Ok(hits.into_iter().map(|h| h as f64 / total as f64).collect())
}

pub fn hitrate_at_k(
    records: &[HallucinationRecord],
    grids: &HashMap<String, TokenGrid>,
    mask_corpus: &Corpus,
    excluded_labels: &BTreeSet<String>,
    clustering: &Clustering,
    k: usize,
    selector: GroupSelector,
) -> Result<f64> {
    let index = TokenLabelIndex::new(mask_corpus, excluded_labels);
    Ok(hitrate_curve(records, grids, &index, clustering, &[k], selector)?[0])
}

/// Mean of a metric and the number of records it averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub count: usize,
}

impl MetricSummary {
    fn of(values: &[f64]) -> Self {
        Self {
            mean: values.iter().sum::<f64>() / values.len().max(1) as f64,
            count: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmberMetrics {
    pub chair: MetricSummary,
    pub cover: MetricSummary,
    pub hal: MetricSummary,
    pub cog: MetricSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amber_score: Option<f64>,
    /// Records with no mentioned objects, left out of CHAIR, Hal and Cog.
    pub skipped: usize,
}

pub fn amber_score(chair: f64, f1: f64) -> f64 {
    0.5 * (1.0 - chair + f1)
}

/// AMBER generative metrics. `hallucinatory_targets` is the benchmark's
/// list of likely hallucinated objects; `f1` comes from the discriminative
/// part of the benchmark.
pub fn amber_generative_metrics(
    records: &[HallucinationRecord],
    hallucinatory_targets: &BTreeSet<String>,
    f1: Option<f64>,
) -> Result<AmberMetrics> {
    let (mut chair, mut cover, mut hal, mut cog) = (vec![], vec![], vec![], vec![]);
    let mut skipped = 0;
    for r in records {
        if r.truth_objects.is_empty() {
            return Err(Error::EmptyTruth(r.image_id.clone()));
        }
        let correct = r.mentioned_objects.intersection(&r.truth_objects).count() as f64;
        cover.push(correct / r.truth_objects.len() as f64);
        if r.mentioned_objects.is_empty() {
            skipped += 1;
            continue;
        }
        let m = r.mentioned_objects.len() as f64;
        let c = 1.0 - correct / m;
        chair.push(c);
        hal.push(if c != 0.0 { 1.0 } else { 0.0 });
        cog.push(r.mentioned_objects.intersection(hallucinatory_targets).count() as f64 / m);
    }
    if chair.is_empty() {
        return Err(Error::NoResponsesWithObjects);
    }
    let chair = MetricSummary::of(&chair);
    Ok(AmberMetrics {
        amber_score: f1.map(|f| amber_score(chair.mean, f)),
        chair,
        cover: MetricSummary::of(&cover),
        hal: MetricSummary::of(&hal),
        cog: MetricSummary::of(&cog),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalbenchMetrics {
    pub chair_s: f64,
    pub chair_i: f64,
    pub n_records: usize,
    pub n_with_objects: usize,
}

/// Response-level and instance-level CHAIR.
pub fn halbench_metrics(records: &[HallucinationRecord]) -> Result<HalbenchMetrics> {
    let (mut with_objects, mut with_hal, mut mentioned, mut false_mentions) = (0, 0, 0, 0);
    for r in records {
        let n_hal = r.hallucinated().count();
        if !r.mentioned_objects.is_empty() {
            with_objects += 1;
            if n_hal > 0 {
                with_hal += 1;
            }
        }
        mentioned += r.mentioned_objects.len();
        false_mentions += n_hal;
    }
    if with_objects == 0 {
        return Err(Error::NoResponsesWithObjects);
    }
    Ok(HalbenchMetrics {
        chair_s: with_hal as f64 / with_objects as f64,
        chair_i: false_mentions as f64 / mentioned as f64,
        n_records: records.len(),
        n_with_objects: with_objects,
    })
}
