use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use walkembed::error::{Error, Result};
use walkembed::eval::{self, DistanceMetric, EvalConfig};
use walkembed::graph::{self, EdgeListFormat};
use walkembed::pipeline::{self, PipelineConfig};
use walkembed::records::{self, RecordManifest};
use walkembed::sampler::{self, SamplerConfig};
use walkembed::sbm::{self, SbmConfig, SbmPreset};
use walkembed::trainer::{self, Mode, Optimizer, TrainConfig};

#[derive(Parser)]
#[command(name = "walkembed", version, about = "Random-walk graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic block model graph.
    Sbm(SbmArgs),
    /// Drop nodes below a degree threshold, in one pass.
    Prune(PruneArgs),
    /// Sample co-occurrence records into shards.
    Sample(SampleArgs),
    /// Train an embedding table from record shards.
    Train(TrainArgs),
    /// Compute quality metrics for an embedding.
    Eval(EvalArgs),
    /// Run prune → sample → train → eval from a TOML config.
    Pipeline(PipelineArgs),
    /// Align the reports of several runs.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SbmArgs {
    /// sbm-10k, sbm-100k or sbm-1m; overrides the explicit parameters.
    #[arg(long)]
    preset: Option<SbmPreset>,
    #[arg(long, default_value_t = 10_000)]
    nodes: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 0.01)]
    p_in: f64,
    #[arg(long, default_value_t = 0.001)]
    p_out: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; `.csr` writes binary CSR, otherwise an edge list.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 2)]
    min_degree: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Walks per seed node.
    #[arg(long, default_value_t = 128)]
    gamma: u32,
    #[arg(long, default_value_t = 3)]
    walk_length: u32,
    #[arg(long, default_value_t = 8)]
    shards: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for shards and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Also dump all records as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Record directory written by `sample`.
    #[arg(long)]
    records: PathBuf,
    /// TOML training config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    /// Constant learning rate instead of the configured schedule.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the checkpoint and training log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    non_edge_samples: usize,
    #[arg(long, default_value_t = 100)]
    recall_nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_metric, default_value = "euclidean")]
    metric: DistanceMetric,
    #[arg(long, default_value = "run")]
    label: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories, in the order expected to improve.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for compare.csv and merged percentile tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_metric(s: &str) -> std::result::Result<DistanceMetric, String> {
    match s {
        "euclidean" => Ok(DistanceMetric::Euclidean),
        "cosine" => Ok(DistanceMetric::Cosine),
        _ => Err(format!("unknown metric `{s}`")),
    }
}

fn sbm(a: SbmArgs) -> Result<()> {
    let cfg = match a.preset {
        Some(p) => p.config(a.seed),
        None => SbmConfig {
            nodes: a.nodes,
            classes: a.classes,
            p_in: a.p_in,
            p_out: a.p_out,
            seed: a.seed,
            max_edges: sbm::DEFAULT_MAX_EDGES,
        },
    };
    let g = sbm::generate_sbm(&cfg)?;
    log::info!("generated {} nodes, {} edges", g.num_nodes(), g.num_edges());
    write_graph(&g, &a.out)
}

fn write_graph(g: &graph::Graph, out: &Path) -> Result<()> {
    if out.extension().is_some_and(|e| e == "csr") {
        graph::write_csr(g, out)
    } else {
        graph::write_edge_list(g, out, EdgeListFormat::from_path(out))
    }
}

fn prune(a: PruneArgs) -> Result<()> {
    let g = graph::load_graph(&a.graph)?;
    let pruned = graph::prune_low_degree(&g, a.min_degree)?;
    println!(
        "kept {} of {} nodes, {} edges",
        pruned.num_nodes(),
        g.num_nodes(),
        pruned.num_edges()
    );
    write_graph(&pruned, &a.out)
}

fn sample(a: SampleArgs) -> Result<()> {
    let g = graph::load_graph(&a.graph)?;
    let cfg = SamplerConfig {
        gamma: a.gamma,
        walk_length: a.walk_length,
        num_shards: a.shards,
        seed: a.seed,
        ..SamplerConfig::default()
    };
    let m = sampler::run_sampling(&g, &cfg, &a.out)?;
    println!(
        "{} walks, {} dead ends, {} records in {} shards",
        m.stats.total_walks, m.stats.dead_end_terminations, m.stats.records, m.num_shards
    );
    if let Some(tsv) = a.tsv {
        records::write_tsv(&m.shard_paths(&a.out), &tsv)?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            TrainConfig::from_toml(&text)?
        }
        None => match a.mode {
            Some(Mode::Async) => TrainConfig::asynchronous_defaults(),
            _ => TrainConfig::synchronous_defaults(),
        },
    };
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(v) = a.dim {
        cfg.dim = v;
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.replicas {
        cfg.num_replicas = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    if let Some(v) = a.batch_size {
        cfg.per_replica_batch_size = v;
    }
    if let Some(v) = a.negatives {
        cfg.num_neg_per_pos = v;
    }
    if let Some(lr) = a.lr {
        cfg.optimizer = Optimizer::FixedSgd { lr };
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;

    let manifest = RecordManifest::read(&a.records)?;
    let table = cfg.initial_table(manifest.num_nodes);
    let outcome = trainer::train(&manifest.shard_paths(&a.records), &cfg, table)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    pipeline::write_train_outputs(&outcome, &cfg, &a.out)?;
    trainer::write_checkpoint(
        &outcome.table,
        outcome.steps,
        cfg.config_hash(),
        a.out.join(pipeline::CHECKPOINT_FILE),
    )?;
    println!(
        "{} steps, {} examples, {:.0} examples/s",
        outcome.steps,
        outcome.examples,
        outcome.examples_per_sec()
    );
    Ok(())
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let g = graph::load_graph(&a.graph)?;
    let (_, table) = trainer::read_checkpoint(&a.embedding)?;
    let cfg = EvalConfig {
        non_edge_samples: a.non_edge_samples,
        recall_nodes: a.recall_nodes,
        seed: a.seed,
        metric: a.metric,
        ..EvalConfig::default()
    };
    let report = eval::evaluate(&g, &table, &cfg, &a.label)?;
    eval::write_report(&report, &a.out)?;
    println!(
        "edge SNR {:.4}, mean recall {:.4}",
        report.edge_snr, report.mean_recall
    );
    Ok(())
}

fn run_pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(d) = a.run_dir {
        cfg.run_dir = d;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let manifest = pipeline::run_pipeline(&cfg)?;
    for s in &manifest.stages {
        println!(
            "{:<6} {:?} {:.2}s {}",
            s.name, s.status, s.seconds, s.output_hash
        );
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let cmp = pipeline::compare_runs(&a.runs)?;
    print!("{}", cmp.to_table());
    if let Some(out) = a.out {
        cmp.write(&out)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Sbm(a) => sbm(a),
        Command::Prune(a) => prune(a),
        Command::Sample(a) => sample(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => evaluate(a),
        Command::Pipeline(a) => run_pipeline(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
