//! Commands behind the `bridgerec` binary.
//!
//! Machine-readable artifacts go to files in the output directory; progress
//! and errors go to the log on stderr.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::{RunConfig, RunStage, SuiteConfig};
use crate::data::{load_domain, make_split, Format};
use crate::pipeline::{
    run_suite, EmbeddingExport, Experiment, MetricsReport, Pretraining, SuiteOptions, SuiteTable,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BRIDGEREC_OUT";
const FALLBACK_OUT_DIR: &str = "bridgerec-out";

#[derive(Debug, Parser)]
#[command(name = "bridgerec", version, about = "Cross-domain cold-start recommendation experiments")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split overlapping users into training and cold-start test users.
    Prepare(PrepareArgs),
    /// Run one method on one task.
    Run(RunArgs),
    /// Run every (base model, β, method, seed) combination of a suite.
    Suite(SuiteArgs),
    /// Write attention weights or transformed embeddings of a run.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    pub config: PathBuf,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, short = 'j', default_value_t = 1)]
    pub parallelism: usize,
    /// Write per-user attention weights of personalized-bridge methods.
    #[arg(long)]
    pub export_attention: bool,
    /// Write the test users' initial target representations.
    #[arg(long)]
    pub export_embeddings: bool,
    /// Record zero runtimes so that reruns produce identical files.
    #[arg(long)]
    pub zero_runtime: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Attention,
    Embeddings,
    Both,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportKind::Both)]
    pub what: ExportKind,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn out_dir(flag: Option<PathBuf>, config: Option<&PathBuf>) -> PathBuf {
    flag.or_else(|| config.cloned())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(path)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a).map(|_| ()),
        Command::Run(a) => cmd_run(&a).map(|_| ()),
        Command::Suite(a) => cmd_suite(&a).map(|_| ()),
        Command::Export(a) => cmd_export(&a).map(|_| ()),
    }
}

/// Writes `split.json` and the four id maps. Returns the output directory.
pub fn cmd_prepare(a: &PrepareArgs) -> anyhow::Result<PathBuf> {
    if !(a.beta > 0.0 && a.beta < 1.0) {
        bail!("--beta must be in (0, 1), got {}", a.beta);
    }
    let src = load_domain(&a.source, Format::from_path(&a.source))?;
    let tgt = load_domain(&a.target, Format::from_path(&a.target))?;
    info!("source: {} ratings, target: {} ratings", src.len(), tgt.len());
    let split = make_split(&src, &tgt, a.beta, a.seed)?;
    let dir = out_dir(a.out.clone(), None);
    write(&dir, "split.json", &split.to_json()?)?;
    for (name, map) in [
        ("source_users.json", &src.users),
        ("source_items.json", &src.items),
        ("target_users.json", &tgt.users),
        ("target_items.json", &tgt.items),
    ] {
        write(&dir, name, &serde_json::to_string_pretty(map)?)?;
    }
    Ok(dir)
}

fn reports_csv(reports: &[MetricsReport]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn load_run(path: &Path, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn prepare(cfg: &RunConfig) -> anyhow::Result<Experiment> {
    let pretraining = match (cfg.stage, &cfg.checkpoint_dir) {
        (RunStage::Meta, Some(dir)) => Pretraining::Load(dir),
        _ => Pretraining::Train,
    };
    Ok(Experiment::prepare_with(
        &cfg.task,
        cfg.base_model,
        cfg.beta,
        cfg.seed,
        &cfg.hyper,
        pretraining,
    )?)
}

fn embeddings_csv(exp: &Experiment, rows: Vec<crate::pipeline::TransformedRow>) -> anyhow::Result<String> {
    let rows: Vec<EmbeddingExport> = rows
        .into_iter()
        .map(|row| EmbeddingExport {
            task: exp.task_label.clone(),
            beta: exp.beta,
            seed: exp.seed,
            row,
        })
        .collect();
    Ok(crate::pipeline::embeddings_csv(&rows)?)
}

fn attention_csv(exp: &Experiment, rows: Vec<crate::pipeline::AttentionRow>) -> anyhow::Result<String> {
    let table = SuiteTable {
        attention: rows
            .into_iter()
            .map(|row| crate::pipeline::AttentionExport {
                task: exp.task_label.clone(),
                beta: exp.beta,
                seed: exp.seed,
                row,
            })
            .collect(),
        ..SuiteTable::default()
    };
    Ok(table.attention_csv()?)
}

/// Executes the configured stage. Returns the output directory.
pub fn cmd_run(a: &RunArgs) -> anyhow::Result<PathBuf> {
    let cfg = load_run(&a.config, a.seed)?;
    let dir = out_dir(a.out.clone(), cfg.out_dir.as_ref());
    let exp = prepare(&cfg)?;
    if cfg.stage == RunStage::Pretrain {
        let ck = cfg.checkpoint_dir.as_ref().expect("validated");
        exp.save_pretrained(ck)?;
        info!("pre-trained models written to {}", ck.display());
        return Ok(dir);
    }
    let cold = exp.cold_start(cfg.method)?;
    let (warm, _) = exp.warm_start(&cold)?;
    if let Some(ck) = &cfg.checkpoint_dir {
        if cfg.stage == RunStage::Full {
            exp.save_pretrained(ck)?;
        }
        if let Some(m) = &cold.meta {
            m.to_checkpoint().save(&ck.join("meta_bridge.json"))?;
        }
        if let Some(b) = &cold.common {
            b.to_checkpoint().save(&ck.join("common_bridge.json"))?;
        }
    }
    let reports = [cold.report.clone(), warm];
    write(&dir, "report.csv", &reports_csv(&reports)?)?;
    write(&dir, "report.json", &serde_json::to_string_pretty(&reports)?)?;
    if cfg.export_attention {
        if let Some(m) = &cold.meta {
            write(&dir, "attention.csv", &attention_csv(&exp, exp.attention_rows(m)?)?)?;
        } else {
            bail!("export_attention needs a personalized-bridge method, not {}", cfg.method);
        }
    }
    if cfg.export_embeddings {
        write(&dir, "embeddings.csv", &embeddings_csv(&exp, exp.transformed_rows(&cold))?)?;
    }
    Ok(dir)
}

/// Writes `suite.csv` and `suite.json` (plus optional dumps). Fails after
/// writing if any plan failed.
pub fn cmd_suite(a: &SuiteArgs) -> anyhow::Result<PathBuf> {
    let mut cfg = SuiteConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    let dir = out_dir(a.out.clone(), cfg.out_dir.as_ref());
    let opts = SuiteOptions {
        parallelism: a.parallelism,
        zero_runtime: a.zero_runtime,
        collect_attention: a.export_attention,
        collect_embeddings: a.export_embeddings,
    };
    let table = run_suite(&cfg.plans(), &opts)?;
    write(&dir, "suite.csv", &table.to_csv()?)?;
    write(&dir, "suite.json", &table.to_json()?)?;
    if a.export_attention {
        write(&dir, "attention.csv", &table.attention_csv()?)?;
    }
    if a.export_embeddings {
        write(&dir, "embeddings.csv", &table.embeddings_csv()?)?;
    }
    let failed = table.failures();
    if failed > 0 {
        bail!("{failed} plan(s) failed; see the failed rows in suite.csv");
    }
    Ok(dir)
}

pub fn cmd_export(a: &ExportArgs) -> anyhow::Result<PathBuf> {
    let cfg = load_run(&a.config, a.seed)?;
    let dir = out_dir(a.out.clone(), cfg.out_dir.as_ref());
    let exp = prepare(&cfg)?;
    let cold = exp.cold_start(cfg.method)?;
    if matches!(a.what, ExportKind::Attention | ExportKind::Both) {
        match &cold.meta {
            Some(m) => {
                write(&dir, "attention.csv", &attention_csv(&exp, exp.attention_rows(m)?)?)?;
            }
            None if a.what == ExportKind::Attention => {
                bail!("method {} has no attention weights", cfg.method)
            }
            None => {}
        }
    }
    if matches!(a.what, ExportKind::Embeddings | ExportKind::Both) {
        write(&dir, "embeddings.csv", &embeddings_csv(&exp, exp.transformed_rows(&cold))?)?;
    }
    Ok(dir)
}
