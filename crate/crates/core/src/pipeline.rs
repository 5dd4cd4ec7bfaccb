//! End-to-end runs: prune → sample → train → eval.
//!
//! A run directory has a fixed layout:
//!
//! ```text
//! <run_dir>/
//!   config.json          resolved configuration (seeds filled in)
//!   manifest.json        per-stage input/output hashes and timings
//!   graph.csr            pruned graph, binary CSR
//!   records/             co-occurrence shards and their manifest
//!   embedding.ckpt       trained table
//!   train_log.jsonl      per-step progress
//!   train_summary.json   training totals
//!   eval/                report.json and percentile CSVs
//! ```
//!
//! Each stage's input hash covers its configuration and the output hash of
//! the stage it consumes. A stage whose recorded input hash matches and whose
//! output still hashes to the recorded value is skipped.
//!
//! Configuration is TOML. Stage seeds are always derived from the global
//! `seed`; the environment variables `WALKEMBED_SEED`, `WALKEMBED_RUN_DIR` and
//! `WALKEMBED_GRAPH` override the seed, run directory and input graph path.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, MetricsReport};
use crate::graph::{self, hex};
use crate::records::RecordManifest;
use crate::rng::derive_seed;
use crate::sampler::{self, SamplerConfig};
use crate::sbm::{self, SbmConfig, SbmPreset};
use crate::trainer::{self, Mode, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const GRAPH_FILE: &str = "graph.csr";
pub const RECORDS_DIR: &str = "records";
pub const CHECKPOINT_FILE: &str = "embedding.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const EVAL_DIR: &str = "eval";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Preset(SbmPreset),
    Sbm {
        nodes: usize,
        classes: usize,
        p_in: f64,
        p_out: f64,
    },
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphStage {
    pub source: GraphSource,
    #[serde(default = "default_min_degree")]
    pub min_degree: usize,
}

fn default_min_degree() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub run_dir: PathBuf,
    pub seed: u64,
    /// Name of the run in reports and comparison tables.
    #[serde(default = "default_label")]
    pub label: String,
    pub graph: GraphStage,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_label() -> String {
    "run".into()
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// JSON form; resolved seeds can exceed the TOML integer range.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Applies `WALKEMBED_*` overrides from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(s) = lookup("WALKEMBED_SEED") {
            self.seed = s
                .parse()
                .map_err(|_| Error::Config(format!("WALKEMBED_SEED `{s}` is not an integer")))?;
        }
        if let Some(d) = lookup("WALKEMBED_RUN_DIR") {
            self.run_dir = d.into();
        }
        if let Some(p) = lookup("WALKEMBED_GRAPH") {
            self.graph.source = GraphSource::Path(p.into());
        }
        Ok(())
    }

    /// Copy with every stage seed derived from the global seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.sampler.seed = derive_seed(self.seed, &[1]);
        c.train.seed = derive_seed(self.seed, &[2]);
        c.eval.seed = derive_seed(self.seed, &[3]);
        c
    }

    fn sbm_config(&self) -> Option<SbmConfig> {
        let seed = derive_seed(self.seed, &[0]);
        match &self.graph.source {
            GraphSource::Preset(p) => Some(p.config(seed)),
            GraphSource::Sbm {
                nodes,
                classes,
                p_in,
                p_out,
            } => Some(SbmConfig {
                nodes: *nodes,
                classes: *classes,
                p_in: *p_in,
                p_out: *p_out,
                seed,
                max_edges: sbm::DEFAULT_MAX_EDGES,
            }),
            GraphSource::Path(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sbm_config() {
            s.validate()?;
        }
        self.sampler.validate()?;
        self.train.validate()?;
        self.eval.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub input_hash: String,
    pub output_hash: String,
    pub status: StageStatus,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub label: String,
    pub config_hash: String,
    pub stages: Vec<StageEntry>,
}

impl RunManifest {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let p = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&p, e.to_string()))
    }

    fn write(&self, run_dir: &Path) -> Result<()> {
        let p = run_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageEntry> {
        self.stages.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: Mode,
    pub steps: u64,
    pub examples: u64,
    pub elapsed_secs: f64,
    pub examples_per_sec: f64,
    pub global_batch_size: usize,
    pub loss_first_decile: Option<f64>,
    pub loss_last_decile: Option<f64>,
}

fn sha_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex(&h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha_hex(&[&bytes]))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("serializes")
}

struct Stage<'a> {
    name: &'static str,
    input_hash: String,
    /// Current hash of the stage's output, if it exists.
    output_hash: Box<dyn Fn() -> Option<String> + 'a>,
    run: Box<dyn FnOnce() -> Result<()> + 'a>,
}

fn run_stage(stage: Stage<'_>, previous: Option<&RunManifest>) -> Result<StageEntry> {
    let wrap = |e: Error| Error::Stage {
        stage: stage.name.to_string(),
        source: Box::new(e),
    };
    if let Some(prev) = previous.and_then(|m| m.stage(stage.name)) {
        if prev.input_hash == stage.input_hash
            && (stage.output_hash)().as_deref() == Some(prev.output_hash.as_str())
        {
            log::info!("stage {}: up to date, skipping", stage.name);
            return Ok(StageEntry {
                status: StageStatus::Skipped,
                seconds: 0.0,
                ..prev.clone()
            });
        }
    }
    log::info!("stage {}: running", stage.name);
    let t0 = Instant::now();
    (stage.run)().map_err(wrap)?;
    let output_hash = (stage.output_hash)()
        .ok_or_else(|| wrap(Error::Config("stage produced no output".into())))?;
    Ok(StageEntry {
        name: stage.name.to_string(),
        input_hash: stage.input_hash,
        output_hash,
        status: StageStatus::Completed,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Runs (or resumes) every stage of `cfg` and returns the run manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let dir = cfg.run_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_json()).map_err(|e| Error::io(&config_path, e))?;
    let previous = RunManifest::read(&dir).ok();

    let graph_path = dir.join(GRAPH_FILE);
    let records_dir = dir.join(RECORDS_DIR);
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let eval_dir = dir.join(EVAL_DIR);
    let mut stages = Vec::new();

    // prune
    let source_hash = match &cfg.graph.source {
        GraphSource::Path(p) => file_hash(p).map_err(|e| Error::Stage {
            stage: "prune".into(),
            source: Box::new(e),
        })?,
        _ => sha_hex(&[&json(&cfg.sbm_config())]),
    };
    let prune = run_stage(
        Stage {
            name: "prune",
            input_hash: sha_hex(&[source_hash.as_bytes(), &json(&cfg.graph)]),
            output_hash: Box::new(|| file_hash(&graph_path).ok()),
            run: Box::new(|| {
                let raw = match (&cfg.graph.source, cfg.sbm_config()) {
                    (GraphSource::Path(p), _) => graph::load_graph(p)?,
                    (_, Some(s)) => sbm::generate_sbm(&s)?,
                    _ => unreachable!("non-path sources have an SBM config"),
                };
                let pruned = graph::prune_low_degree(&raw, cfg.graph.min_degree)?;
                log::info!(
                    "pruned graph: {} → {} nodes, {} edges",
                    raw.num_nodes(),
                    pruned.num_nodes(),
                    pruned.num_edges()
                );
                graph::write_csr(&pruned, &graph_path)
            }),
        },
        previous.as_ref(),
    )?;

    // sample
    let records_hash = || {
        let m = RecordManifest::read(&records_dir).ok()?;
        let intact = m
            .shard_paths(&records_dir)
            .iter()
            .zip(&m.shards)
            .all(|(p, s)| shard_sha(p).as_deref() == Some(s.sha256.as_str()));
        intact.then(|| m.content_hash())
    };
    let sample = run_stage(
        Stage {
            name: "sample",
            input_hash: sha_hex(&[prune.output_hash.as_bytes(), &json(&cfg.sampler)]),
            output_hash: Box::new(records_hash),
            run: Box::new(|| {
                let g = graph::read_csr(&graph_path)?;
                if records_dir.exists() {
                    std::fs::remove_dir_all(&records_dir)
                        .map_err(|e| Error::io(&records_dir, e))?;
                }
                let m = sampler::run_sampling(&g, &cfg.sampler, &records_dir)?;
                log::info!("sampled {} records", m.stats.records);
                Ok(())
            }),
        },
        previous.as_ref(),
    )?;

    // train
    let train = run_stage(
        Stage {
            name: "train",
            input_hash: sha_hex(&[sample.output_hash.as_bytes(), &json(&cfg.train)]),
            output_hash: Box::new(|| file_hash(&ckpt_path).ok()),
            run: Box::new(|| {
                let manifest = RecordManifest::read(&records_dir)?;
                let table = cfg.train.initial_table(manifest.num_nodes);
                let outcome =
                    trainer::train(&manifest.shard_paths(&records_dir), &cfg.train, table)?;
                write_train_outputs(&outcome, &cfg.train, &dir)?;
                trainer::write_checkpoint(
                    &outcome.table,
                    outcome.steps,
                    cfg.train.config_hash(),
                    &ckpt_path,
                )
            }),
        },
        previous.as_ref(),
    )?;

    // eval
    let report_path = eval_dir.join(eval::REPORT_FILE);
    let evaluation = run_stage(
        Stage {
            name: "eval",
            input_hash: sha_hex(&[
                prune.output_hash.as_bytes(),
                train.output_hash.as_bytes(),
                &json(&cfg.eval),
                cfg.label.as_bytes(),
            ]),
            output_hash: Box::new(|| file_hash(&report_path).ok()),
            run: Box::new(|| {
                let g = graph::read_csr(&graph_path)?;
                let (_, table) = trainer::read_checkpoint(&ckpt_path)?;
                let report = eval::evaluate(&g, &table, &cfg.eval, &cfg.label)?;
                eval::write_report(&report, &eval_dir)
            }),
        },
        previous.as_ref(),
    )?;

    stages.extend([prune, sample, train, evaluation]);
    let manifest = RunManifest {
        label: cfg.label.clone(),
        config_hash: sha_hex(&[cfg.to_json().as_bytes()]),
        stages,
    };
    manifest.write(&dir)?;
    Ok(manifest)
}

fn shard_sha(path: &Path) -> Option<String> {
    let bytes = std::fs::read(path).ok()?;
    Some(hex(&Sha256::digest(&bytes)))
}

/// Writes the progress log and summary for a finished training run.
pub fn write_train_outputs(
    outcome: &trainer::TrainOutcome,
    cfg: &TrainConfig,
    dir: &Path,
) -> Result<()> {
    outcome.write_log(&dir.join(TRAIN_LOG_FILE))?;
    let head_tail = outcome.loss_head_tail(0.1);
    let summary = TrainSummary {
        mode: cfg.mode,
        steps: outcome.steps,
        examples: outcome.examples,
        elapsed_secs: outcome.elapsed_secs,
        examples_per_sec: outcome.examples_per_sec(),
        global_batch_size: cfg.global_batch_size(),
        loss_first_decile: head_tail.map(|h| h.0),
        loss_last_decile: head_tail.map(|h| h.1),
    };
    let p = dir.join(TRAIN_SUMMARY_FILE);
    std::fs::write(
        &p,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| Error::io(&p, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: String,
    pub label: String,
    pub mode: Option<Mode>,
    pub examples: Option<u64>,
    pub final_loss: Option<f64>,
    pub edge_snr: f64,
    pub mean_recall: f64,
    pub median_edge_distance: f64,
    pub non_edge_p25: f64,
    /// SNR no lower than 95% of the previous row's.
    pub snr_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    #[serde(skip)]
    reports: Vec<MetricsReport>,
}

/// Tolerance for the monotone-SNR column.
pub const MONOTONE_TOLERANCE: f64 = 0.05;

/// Aligns the reports of several run directories, in the given order.
pub fn compare_runs(run_dirs: &[PathBuf]) -> Result<Comparison> {
    if run_dirs.len() < 2 {
        return Err(Error::Config(
            "compare needs at least two run directories".into(),
        ));
    }
    let mut rows: Vec<ComparisonRow> = Vec::new();
    let mut reports = Vec::new();
    for dir in run_dirs {
        let eval_dir = dir.join(EVAL_DIR);
        if !eval_dir.join(eval::REPORT_FILE).exists() {
            return Err(Error::MissingReport(dir.clone()));
        }
        let report = eval::read_report(&eval_dir)?;
        let summary: Option<TrainSummary> = std::fs::read_to_string(dir.join(TRAIN_SUMMARY_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        let snr_monotone = rows
            .last()
            .is_none_or(|prev| report.edge_snr >= prev.edge_snr * (1.0 - MONOTONE_TOLERANCE));
        rows.push(ComparisonRow {
            run: dir
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string()),
            label: report.label.clone(),
            mode: summary.as_ref().map(|s| s.mode),
            examples: summary.as_ref().map(|s| s.examples),
            final_loss: summary.as_ref().and_then(|s| s.loss_last_decile),
            edge_snr: report.edge_snr,
            mean_recall: report.mean_recall,
            median_edge_distance: report.edge_distance_percentiles[50],
            non_edge_p25: report.non_edge_distance_percentiles[25],
            snr_monotone,
        });
        reports.push(report);
    }
    Ok(Comparison { rows, reports })
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "run,label,mode,examples,final_loss,edge_snr,mean_recall,median_edge_distance,non_edge_p25,snr_monotone\n",
        );
        for r in &self.rows {
            let mode = r.mode.map(|m| format!("{m:?}").to_lowercase());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.run,
                r.label,
                opt(&mode),
                opt(&r.examples),
                opt(&r.final_loss),
                r.edge_snr,
                r.mean_recall,
                r.median_edge_distance,
                r.non_edge_p25,
                r.snr_monotone
            );
        }
        s
    }

    /// Writes `compare.csv` and merged percentile tables, one column per run.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let write = |name: &str, text: String| {
            let p = out.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("compare.csv", self.to_csv())?;
        let names: Vec<String> = self.rows.iter().map(|r| r.run.clone()).collect();
        let series = |f: fn(&MetricsReport) -> &Vec<f64>| -> String {
            let cols: Vec<(&str, &[f64])> = names
                .iter()
                .zip(&self.reports)
                .map(|(n, r)| (n.as_str(), f(r).as_slice()))
                .collect();
            eval::percentile_csv(&cols)
        };
        write(eval::EDGE_CSV, series(|r| &r.edge_distance_percentiles))?;
        write(
            eval::NON_EDGE_CSV,
            series(|r| &r.non_edge_distance_percentiles),
        )?;
        write(eval::RECALL_CSV, series(|r| &r.recall_percentiles))
    }

    /// Human-readable aligned table.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<20} {:<8} {:>12} {:>10} {:>10} {:>10} {:>9}\n",
            "run", "mode", "examples", "loss", "snr", "recall", "monotone"
        );
        for r in &self.rows {
            let mode = r
                .mode
                .map(|m| format!("{m:?}").to_lowercase())
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{:<20} {:<8} {:>12} {:>10} {:>10.4} {:>10.4} {:>9}",
                r.run,
                mode,
                opt(&r.examples),
                r.final_loss.map(|l| format!("{l:.4}")).unwrap_or_default(),
                r.edge_snr,
                r.mean_recall,
                r.snr_monotone
            );
        }
        s
    }
}
