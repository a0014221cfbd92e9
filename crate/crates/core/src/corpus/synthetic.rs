//! Seeded synthetic corpora with planted co-occurrence structure.
//!
//! Tokens are split into planted groups. Every labelled segment is filled
//! with tokens from one group, so tokens of a group co-occur far more often
//! than tokens of different groups. The codebook is pure noise and carries
//! no information about the groups.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Codebook, Corpus, TokenGrid, UNLABELED};
use crate::analysis::HallucinationRecord;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    pub n_groups: usize,
    pub n_images: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub objects_per_image: usize,
    pub noise_rate: f64,
    /// Columns of the generated codebook.
    pub codebook_dim: usize,
    /// Lower bound on each object's extent as a fraction of its slot;
    /// 1.0 makes objects tile the grid with no background.
    pub min_object_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            n_groups: 10,
            n_images: 500,
            grid_h: 16,
            grid_w: 16,
            objects_per_image: 3,
            noise_rate: 0.1,
            codebook_dim: 8,
            min_object_fraction: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.vocab_size == 0 || self.n_groups < 2 {
            return bad("need a non-empty vocabulary and at least 2 groups".into());
        }
        if !self.vocab_size.is_multiple_of(self.n_groups) {
            return bad(format!(
                "vocab_size {} not divisible by n_groups {}",
                self.vocab_size, self.n_groups
            ));
        }
        if self.n_images == 0 || self.grid_h == 0 || self.grid_w == 0 || self.codebook_dim == 0 {
            return bad("image count, grid dims and codebook_dim must be positive".into());
        }
        if self.objects_per_image == 0 {
            return bad("objects_per_image must be at least 1".into());
        }
        if self.objects_per_image > self.n_groups - 1 {
            return bad(format!(
                "objects_per_image {} exceeds the {} object groups",
                self.objects_per_image,
                self.n_groups - 1
            ));
        }
        if self.objects_per_image > self.grid_w {
            return bad(format!(
                "grid width {} cannot host {} objects",
                self.grid_w, self.objects_per_image
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        if !(self.min_object_fraction > 0.0 && self.min_object_fraction <= 1.0) {
            return bad(format!(
                "min_object_fraction {} outside (0, 1]",
                self.min_object_fraction
            ));
        }
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.vocab_size / self.n_groups
    }

    /// The group used for unlabelled background positions.
    pub fn background_group(&self) -> usize {
        self.n_groups - 1
    }
}

/// Ground truth of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// `group_of[token]` is the planted group of each token.
    pub group_of: Vec<usize>,
    pub object_of_group: BTreeMap<usize, String>,
}

impl PlantedTruth {
    pub fn members(&self, group: usize) -> Vec<u32> {
        self.group_of
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == group)
            .map(|(t, _)| t as u32)
            .collect()
    }

    pub fn n_groups(&self) -> usize {
        self.object_of_group.len()
    }
}

pub fn object_label(group: usize) -> String {
    format!("object-{group:02}")
}

pub const BACKGROUND_LABEL: &str = "background";

fn plant_groups(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> PlantedTruth {
    let mut perm: Vec<usize> = (0..spec.vocab_size).collect();
    perm.shuffle(rng);
    let gs = spec.group_size();
    let mut group_of = vec![0; spec.vocab_size];
    for (rank, &token) in perm.iter().enumerate() {
        group_of[token] = rank / gs;
    }
    let object_of_group = (0..spec.n_groups)
        .map(|g| {
            let label = if g == spec.background_group() {
                BACKGROUND_LABEL.to_string()
            } else {
                object_label(g)
            };
            (g, label)
        })
        .collect();
    PlantedTruth {
        group_of,
        object_of_group,
    }
}

/// Pick `extent` in `[ceil(frac * slot), slot]` and an offset that keeps it
/// inside the slot.
fn span(slot: usize, frac: f64, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let lo = ((slot as f64 * frac).ceil() as usize).clamp(1, slot);
    let extent = rng.random_range(lo..=slot);
    let offset = rng.random_range(0..=slot - extent);
    (offset, extent)
}

/// Generate a corpus whose token co-occurrences follow planted groups.
///
/// Objects are laid out in equal-width vertical slots, one per object; each
/// object is a rectangle inside its slot. Pure function of `(spec, seed)`.
pub fn generate_synthetic_corpus(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Corpus, PlantedTruth, Codebook)> {
    spec.validate()?;
    let truth = plant_groups(spec, &mut rng::stream(seed, "synthetic/groups"));
    let members: Vec<Vec<u32>> = (0..spec.n_groups).map(|g| truth.members(g)).collect();
    let object_groups: Vec<usize> = (0..spec.n_groups)
        .filter(|&g| g != spec.background_group())
        .collect();

    let mut rng = rng::stream(seed, "synthetic/images");
    let (h, w, k) = (spec.grid_h, spec.grid_w, spec.objects_per_image);
    let mut records = Vec::with_capacity(spec.n_images);
    for idx in 0..spec.n_images {
        let chosen: Vec<usize> = object_groups
            .choose_multiple(&mut rng, k)
            .copied()
            .collect();
        let mut tokens = vec![0u32; h * w];
        let mut segments = vec![UNLABELED; h * w];
        let mut segment_labels = BTreeMap::new();
        for (slot, &group) in chosen.iter().enumerate() {
            let seg_id = slot as i32;
            segment_labels.insert(seg_id, truth.object_of_group[&group].clone());
            let c0 = slot * w / k;
            let c1 = (slot + 1) * w / k;
            let (dr, rh) = span(h, spec.min_object_fraction, &mut rng);
            let (dc, cw) = span(c1 - c0, spec.min_object_fraction, &mut rng);
            for r in dr..dr + rh {
                for c in c0 + dc..c0 + dc + cw {
                    segments[r * w + c] = seg_id;
                }
            }
        }
        let bg = &members[spec.background_group()];
        for pos in 0..h * w {
            tokens[pos] = match segments[pos] {
                UNLABELED => {
                    if rng.random::<f64>() < spec.noise_rate {
                        rng.random_range(0..spec.vocab_size as u32)
                    } else {
                        bg[rng.random_range(0..bg.len())]
                    }
                }
                seg => {
                    let g = &members[chosen[seg as usize]];
                    g[rng.random_range(0..g.len())]
                }
            };
        }
        records.push(TokenGrid {
            image_id: format!("syn-{idx:06}"),
            height: h,
            width: w,
            tokens,
            segments,
            segment_labels,
        });
    }

    let mut crng = rng::stream(seed, "synthetic/codebook");
    let z = Array2::from_shape_fn((spec.vocab_size, spec.codebook_dim), |_| {
        crng.sample::<f32, _>(StandardNormal)
    });
    let corpus = Corpus::new(records, spec.vocab_size)?;
    Ok((corpus, truth, Codebook::new(z)?))
}

/// Knobs for [`hallucination_benchmark`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub corpus: SyntheticSpec,
    pub n_eval: usize,
    /// Share of the grid width given to the first (dominant) object.
    pub dominant_share: f64,
    /// Fraction of each group's tokens an evaluation object actually shows.
    pub visible_fraction: f64,
    /// Probability that the hallucinated object is the sibling of the
    /// dominant object rather than of another present object.
    pub p_dominant: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            corpus: SyntheticSpec::default(),
            n_eval: 200,
            dominant_share: 0.5,
            visible_fraction: 0.5,
            p_dominant: 0.75,
        }
    }
}

/// Sibling object labels sharing planted group `group`.
pub fn sibling_labels(group: usize) -> [String; 2] {
    [format!("object-{group:02}a"), format!("object-{group:02}b")]
}

/// A desk-scale hallucination benchmark built on planted groups.
#[derive(Debug, Clone)]
pub struct HallucinationBenchmark {
    /// Segmentation corpus used for token/object association.
    pub mask_corpus: Corpus,
    pub truth: PlantedTruth,
    pub codebook: Codebook,
    /// Evaluation images, keyed by `image_id` in `records`.
    pub eval_grids: Vec<TokenGrid>,
    pub records: Vec<HallucinationRecord>,
}

/// Build a benchmark where each planted group is shared by two sibling
/// objects. Evaluation images show only part of each object's group; the
/// hallucinated object of a record is the absent sibling of one present
/// object, usually the dominant one.
pub fn hallucination_benchmark(spec: &BenchmarkSpec, seed: u64) -> Result<HallucinationBenchmark> {
    if !(spec.dominant_share > 0.0 && spec.dominant_share < 1.0)
        || !(spec.visible_fraction > 0.0 && spec.visible_fraction <= 1.0)
        || !(0.0..=1.0).contains(&spec.p_dominant)
        || spec.n_eval == 0
    {
        return Err(Error::InvalidSpec("benchmark fractions out of range".into()));
    }
    let (mut mask_corpus, truth, codebook) = generate_synthetic_corpus(&spec.corpus, seed)?;

    // Relabel every mask segment with one of its group's two siblings.
    let label_to_group: BTreeMap<String, usize> = truth
        .object_of_group
        .iter()
        .map(|(g, l)| (l.clone(), *g))
        .collect();
    let mut rng = rng::stream(seed, "benchmark/relabel");
    for rec in &mut mask_corpus.records {
        for label in rec.segment_labels.values_mut() {
            let g = label_to_group[label.as_str()];
            *label = sibling_labels(g)[rng.random_range(0..2)].clone();
        }
    }

    let cs = &spec.corpus;
    let (h, w, k) = (cs.grid_h, cs.grid_w, cs.objects_per_image);
    let object_groups: Vec<usize> = (0..cs.n_groups)
        .filter(|&g| g != cs.background_group())
        .collect();
    let members: Vec<Vec<u32>> = (0..cs.n_groups).map(|g| truth.members(g)).collect();
    let mut rng = rng::stream(seed, "benchmark/eval");
    let mut eval_grids = Vec::with_capacity(spec.n_eval);
    let mut records = Vec::with_capacity(spec.n_eval);
    for idx in 0..spec.n_eval {
        let chosen: Vec<usize> = object_groups
            .choose_multiple(&mut rng, k)
            .copied()
            .collect();
        // Column boundaries: the first object gets `dominant_share` of the
        // width, the rest split the remainder evenly.
        let mut bounds = vec![0usize];
        let first = if k == 1 {
            w
        } else {
            ((w as f64 * spec.dominant_share).round() as usize).clamp(1, w - (k - 1))
        };
        bounds.push(first);
        for s in 1..k {
            bounds.push(first + (w - first) * s / (k - 1));
        }
        let mut tokens = vec![0u32; h * w];
        let mut segments = vec![0i32; h * w];
        let mut segment_labels = BTreeMap::new();
        let mut present_labels = Vec::with_capacity(k);
        for (slot, &g) in chosen.iter().enumerate() {
            let pick = rng.random_range(0..2);
            let siblings = sibling_labels(g);
            segment_labels.insert(slot as i32, siblings[pick].clone());
            present_labels.push((siblings[pick].clone(), siblings[1 - pick].clone()));
            let n_visible = ((members[g].len() as f64 * spec.visible_fraction).ceil() as usize)
                .clamp(1, members[g].len());
            let visible: Vec<u32> = members[g]
                .choose_multiple(&mut rng, n_visible)
                .copied()
                .collect();
            for r in 0..h {
                for c in bounds[slot]..bounds[slot + 1] {
                    segments[r * w + c] = slot as i32;
                    tokens[r * w + c] = visible[rng.random_range(0..visible.len())];
                }
            }
        }
        let source = if k == 1 || rng.random::<f64>() < spec.p_dominant {
            0
        } else {
            rng.random_range(1..k)
        };
        let hallucinated = present_labels[source].1.clone();
        let truth_objects: std::collections::BTreeSet<String> =
            present_labels.iter().map(|(l, _)| l.clone()).collect();
        let mut mentioned = truth_objects.clone();
        mentioned.insert(hallucinated);
        let image_id = format!("eval-{idx:05}");
        eval_grids.push(TokenGrid {
            image_id: image_id.clone(),
            height: h,
            width: w,
            tokens,
            segments,
            segment_labels,
        });
        records.push(HallucinationRecord {
            image_id,
            mentioned_objects: mentioned,
            truth_objects,
        });
    }
    Ok(HallucinationBenchmark {
        mask_corpus,
        truth,
        codebook,
        eval_grids,
        records,
    })
}
