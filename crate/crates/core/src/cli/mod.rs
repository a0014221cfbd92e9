//! The `vptd` command line.

pub mod config;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Value};

use crate::analysis::{
    amber_generative_metrics, halbench_metrics, hitrate_curve, load_records, save_records,
    GroupSelector, TokenLabelIndex,
};
use crate::binio;
use crate::cluster::{adjusted_rand_index, balanced_kmeans, Clustering};
use crate::corpus::{
    generate_synthetic_corpus, hallucination_benchmark, load_codebook, load_corpus, save_codebook,
    save_corpus, BenchmarkSpec, Corpus, PlantedTruth,
};
use crate::error::{Error, Result};
use crate::gnn::{train, NodeEmbeddings};
use crate::graph::{build_graph, count_cooccurrences, CooccurrenceGraph, CountParams};
use crate::vtd::{self, apply_edit, plan_edit, EditPlan};
use config::PipelineConfig;

const DEFAULT_RETENTION: f64 = 0.1;
const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "vptd", version, about = "Co-occurrence clustering of image tokens and hidden-state decontamination")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options accepted by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Top-level seed; every stage derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML configuration file. Flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker thread cap. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted co-occurring token groups.
    GenCorpus(GenCorpusArgs),
    /// Count token co-occurrences and keep the strongest pairs as a graph.
    BuildGraph(BuildGraphArgs),
    /// Train node embeddings on a co-occurrence graph.
    Train(TrainArgs),
    /// Balanced k-means over node embeddings.
    Cluster(ClusterArgs),
    /// HitRate@K of hallucinated objects against token-group associations.
    AnalyzeHitrate(HitrateArgs),
    /// CHAIR-family hallucination metrics over response records.
    Metrics(MetricsArgs),
    /// Build an edit plan for one image.
    PlanEdit(PlanEditArgs),
    /// Apply an edit plan to a hidden-state file.
    ApplyEdit(ApplyEditArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output corpus (JSON Lines).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output codebook (CGCB).
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// Output planted ground truth (JSON).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub n_groups: Option<usize>,
    #[arg(long)]
    pub n_images: Option<usize>,
    #[arg(long)]
    pub grid_h: Option<usize>,
    #[arg(long)]
    pub grid_w: Option<usize>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    /// Also emit a hallucination benchmark: the corpus becomes its mask
    /// corpus, and evaluation grids and records are written alongside.
    #[arg(long)]
    pub benchmark: bool,
    /// Output evaluation grids (JSON Lines), with --benchmark.
    #[arg(long)]
    pub eval_grids: Option<PathBuf>,
    /// Output hallucination records (JSON Lines), with --benchmark.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Number of evaluation images, with --benchmark.
    #[arg(long)]
    pub n_eval: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub common: Common,
    /// Input corpus (JSON Lines).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output graph (CGCG).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fraction of co-occurring pairs kept as edges, in (0, 1].
    #[arg(long)]
    pub retention: Option<f64>,
    #[arg(long)]
    pub block_h: Option<usize>,
    #[arg(long)]
    pub block_w: Option<usize>,
    /// Segment label ignored when counting; repeatable.
    #[arg(long = "exclude-label")]
    pub exclude_labels: Vec<String>,
    /// Vocabulary size; defaults to the codebook row count when a codebook
    /// path is configured, else one past the largest token.
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Input graph (CGCG).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Codebook supplying node features (CGCB).
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// Output embeddings (CGCE).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub d_hidden: Option<usize>,
    #[arg(long)]
    pub d_out: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub common: Common,
    /// Input embeddings (CGCE, or any matrix format).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Output assignment CSV; centroids go to a `.centroids.cgce` sibling.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tokens per cluster.
    #[arg(long)]
    pub cluster_size: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Planted truth to score the clustering against (JSON).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupArg {
    C1,
    C2,
    C3,
}

#[derive(Debug, Args)]
pub struct HitrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Hallucination records (JSON Lines).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Token grids of the evaluated images (JSON Lines).
    #[arg(long)]
    pub eval_grids: Option<PathBuf>,
    /// Segmentation corpus for token/object association (JSON Lines).
    #[arg(long)]
    pub mask_corpus: Option<PathBuf>,
    /// Assignment CSV.
    #[arg(long)]
    pub clustering: Option<PathBuf>,
    /// Values of K, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5, 10])]
    pub k: Vec<usize>,
    /// Token groups to evaluate; all three by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub group: Vec<GroupArg>,
    /// Segment label ignored when associating; repeatable.
    #[arg(long = "exclude-label")]
    pub exclude_labels: Vec<String>,
    /// Optional JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Hallucination records (JSON Lines).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Hallucination-prone target objects, one label per line.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Discriminative F1, as a fraction; enables the combined score.
    #[arg(long)]
    pub f1: Option<f64>,
    /// Optional JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanEditArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus holding the image's token grid (JSON Lines).
    #[arg(long)]
    pub grids: Option<PathBuf>,
    /// Image to plan for; defaults to the first grid.
    #[arg(long)]
    pub image_id: Option<String>,
    /// Assignment CSV.
    #[arg(long)]
    pub clustering: Option<PathBuf>,
    /// Named model preset: chameleon-7b, janus-pro-7b or emu3-13b.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub model_tag: Option<String>,
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub n_dominant: Option<usize>,
    /// Output plan (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApplyEditArgs {
    #[command(flatten)]
    pub common: Common,
    /// Hidden states to edit (CGCH).
    #[arg(long)]
    pub hidden: Option<PathBuf>,
    /// Latent vector per token (CGCB, CGCE or CGCH).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Edit plan (JSON).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Output hidden states (CGCH).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let level = std::env::var("VPTD_LOG").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            1
        }
    }
}

struct Ctx {
    cfg: PipelineConfig,
    seed: u64,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let seed = common.seed.or(cfg.seed).unwrap_or(0);
        if let Some(n) = common.threads.or(cfg.threads) {
            if n == 0 {
                return Err(Error::Config("--threads must be positive".into()));
            }
            // A pool may already exist when called repeatedly in-process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(Self { cfg, seed })
    }
}

/// Flag value, else config value, else a missing-option error.
fn pick<T: Clone>(flag: &Option<T>, config: &Option<T>, name: &str) -> Result<T> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| Error::Config(format!("missing --{name} (or its config entry)")))
}

fn input(flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let p = pick(flag, config, name)?;
    if !p.exists() {
        return Err(Error::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("--{name} does not exist")),
        ));
    }
    Ok(p)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    binio::write_file(path, &bytes)
}

pub fn run(command: Command) -> Result<Value> {
    match command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::BuildGraph(a) => build_graph_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Cluster(a) => cluster_cmd(a),
        Command::AnalyzeHitrate(a) => hitrate_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::PlanEdit(a) => plan_edit_cmd(a),
        Command::ApplyEdit(a) => apply_edit_cmd(a),
    }
}

fn gen_corpus(a: GenCorpusArgs) -> Result<Value> {
    let ctx = Ctx::new(&a.common)?;
    let p = &ctx.cfg.paths;
    let mut spec = ctx.cfg.synthetic.clone();
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v
        }
    };
    set(&mut spec.vocab_size, a.vocab_size);
    set(&mut spec.n_groups, a.n_groups);
    set(&mut spec.n_images, a.n_images);
    set(&mut spec.grid_h, a.grid_h);
    set(&mut spec.grid_w, a.grid_w);
    if let Some(r) = a.noise_rate {
        spec.noise_rate = r;
    }
    let corpus_path = pick(&a.corpus, &p.corpus, "corpus")?;
    let codebook_path = pick(&a.codebook, &p.codebook, "codebook")?;
    let truth_path = a.truth.clone().or_else(|| p.truth.clone());

    let (corpus, truth, codebook, n_records) = if a.benchmark {
        let bspec = BenchmarkSpec {
            corpus: spec.clone(),
            n_eval: a.n_eval.unwrap_or(BenchmarkSpec::default().n_eval),
            ..BenchmarkSpec::default()
        };
        let bench = hallucination_benchmark(&bspec, ctx.seed)?;
        let grids_path = pick(&a.eval_grids, &p.eval_grids, "eval-grids")?;
        let records_path = pick(&a.records, &p.records, "records")?;
        save_corpus(&grids_path, &Corpus::new(bench.eval_grids, spec.vocab_size)?)?;
        save_records(&records_path, &bench.records)?;
        let n = bench.records.len();
        (bench.mask_corpus, bench.truth, bench.codebook, Some(n))
    } else {
        let (c, t, cb) = generate_synthetic_corpus(&spec, ctx.seed)?;
        (c, t, cb, None)
    };
    save_corpus(&corpus_path, &corpus)?;
    save_codebook(&codebook_path, &codebook)?;
    if let Some(tp) = truth_path {
        write_json(&tp, &serde_json::to_value(&truth)?)?;
    }
    let mut summary = json!({
        "images": corpus.records.len(),
        "vocab_size": spec.vocab_size,
        "groups": spec.n_groups,
    });
    if let Some(n) = n_records {
        summary["records"] = json!(n);
    }
    Ok(summary)
}

fn build_graph_cmd(a: BuildGraphArgs) -> Result<Value> {
    let ctx = Ctx::new(&a.common)?;
    let (p, g) = (&ctx.cfg.paths, &ctx.cfg.graph);
    let corpus_path = input(&a.corpus, &p.corpus, "corpus")?;
    let out = pick(&a.out, &p.graph, "out")?;
    let retention = a.retention.or(g.retention).unwrap_or(DEFAULT_RETENTION);
    let defaults = CountParams::default();
    let excluded: BTreeSet<String> = if !a.exclude_labels.is_empty() {
        a.exclude_labels.iter().cloned().collect()
    } else if let Some(l) = &g.excluded_labels {
        l.iter().cloned().collect()
    } else {
        defaults.excluded_labels.clone()
    };
    let params = CountParams {
        block_h: a.block_h.or(g.block_h).unwrap_or(defaults.block_h),
        block_w: a.block_w.or(g.block_w).unwrap_or(defaults.block_w),
        excluded_labels: excluded,
    };
    let vocab = match a.vocab_size.or(g.vocab_size) {
        Some(v) => Some(v),
        None => match &p.codebook {
            Some(cb) if cb.exists() => Some(load_codebook(cb)?.size()),
            _ => None,
        },
    };
    let corpus = load_corpus(&corpus_path, vocab)?;
    let counts = count_cooccurrences(&corpus, &params)?;
    let graph = build_graph(&counts, retention)?;
    graph.save(&out)?;
    info!("graph over {} tokens written to {}", graph.vocab_size, out.display());
    Ok(json!({"edges": graph.n_edges(), "nnz": counts.nnz()}))
}

fn train_cmd(a: TrainArgs) -> Result<Value> {
    let ctx = Ctx::new(&a.common)?;
    let p = &ctx.cfg.paths;
    let graph = CooccurrenceGraph::load(&input(&a.graph, &p.graph, "graph")?)?;
    let codebook = load_codebook(&input(&a.codebook, &p.codebook, "codebook")?)?;
    let out = pick(&a.out, &p.embeddings, "out")?;
    let mut cfg = ctx.cfg.gnn.clone();
    cfg.seed = ctx.seed;
    cfg.d_codebook = codebook.dim();
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.d_hidden {
        cfg.d_hidden = v;
    }
    if let Some(v) = a.d_out {
        cfg.d_out = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    let (emb, report) = train(&graph, &codebook.matrix, &cfg)?;
    emb.save(&out)?;
    Ok(json!({
        "epochs_run": report.epochs_run,
        "steps": report.steps,
        "final_loss": report.loss_history.last(),
        "final_tau": emb.meta.final_tau,
        "config_hash": emb.meta.config_hash,
    }))
}

fn cluster_cmd(a: ClusterArgs) -> Result<Value> {
    let ctx = Ctx::new(&a.common)?;
    let (p, c) = (&ctx.cfg.paths, &ctx.cfg.cluster);
    let emb_path = input(&a.embeddings, &p.embeddings, "embeddings")?;
    let out = pick(&a.out, &p.clustering, "out")?;
    let cluster_size = a
        .cluster_size
        .or(c.cluster_size)
        .unwrap_or(vtd::PRESETS[0].cluster_size);
    let max_iter = a.max_iter.or(c.max_iter).unwrap_or(DEFAULT_MAX_ITER);
    let matrix = match NodeEmbeddings::load(&emb_path) {
        Ok(e) => e.matrix,
        Err(Error::BadMagic { .. }) => binio::read_any_matrix(&emb_path)?,
        Err(e) => return Err(e),
    };
    let clustering = balanced_kmeans(&matrix, cluster_size, max_iter, ctx.seed)?;
    clustering.save(&out)?;
    let sizes = clustering.sizes();
    let mut summary = json!({
        "k": clustering.k,
        "min_size": sizes.iter().min(),
        "max_size": sizes.iter().max(),
    });
    if let Some(tp) = a.truth.as_ref().or(p.truth.as_ref()) {
        let truth: PlantedTruth = serde_json::from_slice(&binio::read_file(tp)?)?;
        if truth.group_of.len() != clustering.n_tokens() {
            return Err(Error::DimensionMismatch {
                expected: clustering.n_tokens(),
                found: truth.group_of.len(),
            });
        }
        let labels: Vec<usize> = clustering.assignment.iter().map(|&x| x as usize).collect();
        summary["ari"] = json!(adjusted_rand_index(&labels, &truth.group_of));
    }
    Ok(summary)
}

fn hitrate_cmd(a: HitrateArgs) -> Result<Value> {
    let ctx = Ctx::new(&a.common)?;
    let p = &ctx.cfg.paths;
    let records = load_records(&input(&a.records, &p.records, "records")?)?;
    let grids = load_corpus(&input(&a.eval_grids, &p.eval_grids, "eval-grids")?, None)?;
    let mask = load_corpus(&input(&a.mask_corpus, &p.mask_corpus, "mask-corpus")?, None)?;
    let clustering = Clustering::load(&input(&a.clustering, &p.clustering, "clustering")?)?;
    if a.k.contains(&0) {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let excluded: BTreeSet<String> = if a.exclude_labels.is_empty() {
        ctx.cfg
            .graph
            .excluded_labels
            .clone()
            .map(|l| l.into_iter().collect())
            .unwrap_or_else(|| CountParams::default().excluded_labels)
    } else {
        a.exclude_labels.iter().cloned().collect()
    };
    let index = TokenLabelIndex::new(&mask, &excluded);
    let by_id: HashMap<String, _> = grids
        .records
        .into_iter()
        .map(|g| (g.image_id.clone(), g))
        .collect();
    let groups = if a.group.is_empty() {
        vec![GroupArg::C1, GroupArg::C2, GroupArg::C3]
    } else {
        a.group.clone()
    };
    let mut report = serde_json::Map::new();
    for g in groups {
        let (name, sel) = match g {
            GroupArg::C1 => ("C1", GroupSelector::C1),
            GroupArg::C2 => ("C2", GroupSelector::C2),
            GroupArg::C3 => ("C3", GroupSelector::C3),
        };
        let rates = hitrate_curve(&records, &by_id, &index, &clustering, &a.k, sel)?;
        let per_k: serde_json::Map<String, Value> =
            a.k.iter().zip(rates).map(|(k, r)| (k.to_string(), json!(r))).collect();
        report.insert(name.to_string(), Value::Object(per_k));
    }
    let value = Value::Object(report);
    if let Some(out) = a.out.as_ref().or(p.report.as_ref()) {
        write_json(out, &value)?;
    }
    Ok(json!({"hitrate": value}))
}

fn metrics_cmd(a: MetricsArgs) -> Result<Value> {
    let ctx = Ctx::new(&a.common)?;
    let p = &ctx.cfg.paths;
    let records = load_records(&input(&a.records, &p.records, "records")?)?;
    let targets: BTreeSet<String> = match &a.targets {
        Some(t) => String::from_utf8_lossy(&binio::read_file(t)?)
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        None => BTreeSet::new(),
    };
    if let Some(f) = a.f1 {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config(format!("--f1 {f} outside [0, 1]")));
        }
    }
    let amber = amber_generative_metrics(&records, &targets, a.f1)?;
    let halbench = halbench_metrics(&records)?;
    let value = json!({"amber": amber, "halbench": halbench, "records": records.len()});
    if let Some(out) = a.out.as_ref().or(p.report.as_ref()) {
        write_json(out, &value)?;
    }
    Ok(value)
}

fn plan_edit_cmd(a: PlanEditArgs) -> Result<Value> {
    let ctx = Ctx::new(&a.common)?;
    let (p, v) = (&ctx.cfg.paths, &ctx.cfg.vtd);
    let grids = load_corpus(&input(&a.grids, &p.eval_grids, "grids")?, None)?;
    let clustering = Clustering::load(&input(&a.clustering, &p.clustering, "clustering")?)?;
    let out = pick(&a.out, &p.plan, "out")?;
    let preset_name = a.preset.clone().or_else(|| v.preset.clone());
    let preset = match &preset_name {
        Some(name) => Some(
            vtd::preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?,
        ),
        None => None,
    };
    let layer = a.layer.or(v.layer).or(preset.map(|p| p.layer));
    let gamma = a.gamma.or(v.gamma).or(preset.map(|p| p.gamma));
    let n_dominant = a.n_dominant.or(v.n_dominant).or(preset.map(|p| p.n_dominant));
    let (Some(layer), Some(gamma), Some(n_dominant)) = (layer, gamma, n_dominant) else {
        return Err(Error::Config(
            "need --preset or all of --layer, --gamma, --n-dominant".into(),
        ));
    };
    let model_tag = a
        .model_tag
        .clone()
        .or_else(|| v.model_tag.clone())
        .or(preset_name)
        .unwrap_or_else(|| "custom".into());
    let grid = match &a.image_id {
        Some(id) => grids.get(id).ok_or_else(|| Error::MissingGrid(id.clone()))?,
        None => &grids.records[0],
    };
    let plan = plan_edit(grid, &clustering, &model_tag, n_dominant, layer, gamma)?;
    plan.save(&out)?;
    Ok(json!({
        "image_id": grid.image_id,
        "model_tag": plan.model_tag,
        "layer": plan.layer,
        "gamma": plan.gamma,
        "n_dominant": plan.n_dominant,
        "n_hallucinative": plan.hallucinative_token_ids.len(),
    }))
}

fn apply_edit_cmd(a: ApplyEditArgs) -> Result<Value> {
    let ctx = Ctx::new(&a.common)?;
    let p = &ctx.cfg.paths;
    let hidden = input(&a.hidden, &p.hidden, "hidden")?;
    let table = input(&a.table, &p.table, "table")?;
    let plan = EditPlan::load(&input(&a.plan, &p.plan, "plan")?)?;
    let out = pick(&a.out, &p.edited, "out")?;
    let summary = apply_edit(&hidden, &table, &plan, &out)?;
    Ok(serde_json::to_value(summary)?)
}
