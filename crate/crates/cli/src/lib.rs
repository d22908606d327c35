//! Batch pipeline for context-conditioned anomaly detection: ingest,
//! train, select-context, evaluate, complexity, and report subcommands
//! over dataset manifests and a TOML run configuration.

pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ctxad_core::{Error, ErrorClass, Result};

use config::{resolve_out_dir, RunConfig};
use pipeline::{ContextChoice, EvaluateArgs};

#[derive(Debug, Parser)]
#[command(name = "ctxad", version, about = "Context-conditioned anomaly detection pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Dataset manifest (overrides the config's `manifest` entry).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Run configuration TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seed list (overrides the config's `seeds`).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory; defaults to config, then $CTXAD_OUT_DIR, then `runs`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a CSV dataset per its manifest and persist it.
    Ingest(CommonArgs),
    /// Train one model and write a checkpoint plus loss curves.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Context column name, or `none` for the baseline.
        #[arg(long, default_value = "none")]
        context: String,
        /// Seed for this single run; defaults to the first config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep candidate context columns by one-epoch joint validation loss.
    SelectContext(CommonArgs),
    /// Multi-seed evaluation of the chosen context against the baseline.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Context column name, `auto` to run selection first, or `none`.
        #[arg(long, default_value = "auto")]
        context: String,
        /// Evaluate every candidate fully and keep the best mean AUCROC.
        #[arg(long)]
        sweep_best: bool,
    },
    /// Rank encoded datasets by the four complexity metrics.
    Complexity {
        /// Encoded dataset files produced by `ingest`.
        #[arg(required_unless_present = "raw_scores")]
        datasets: Vec<PathBuf>,
        /// CSV of published raw scores to scale and rank instead.
        #[arg(long)]
        raw_scores: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render run summaries (and optionally complexity ranks) as a table.
    Report {
        /// RunSummary JSON files from `evaluate`.
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// complexity.csv emitted by `complexity`.
        #[arg(long)]
        complexity: Option<PathBuf>,
    },
}

/// Structured exit codes per error class; clap owns code 2 for usage.
pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Io => 3,
        ErrorClass::Validation => 4,
        ErrorClass::Divergence => 5,
        ErrorClass::DegenerateLabels => 6,
    }
}

/// Loads the run config and applies flag-level overrides.
fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_manifest(common: &CommonArgs, cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(m) = &common.manifest {
        return Ok(m.clone());
    }
    cfg.manifest_path(common.config.as_deref())
        .ok_or_else(|| Error::validation("no manifest given: pass --manifest or set it in the config"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(common) => {
            let cfg = load_config(&common)?;
            let manifest = resolve_manifest(&common, &cfg)?;
            let out_dir = resolve_out_dir(common.out_dir.as_deref(), &cfg);
            let (stats, path) = pipeline::cmd_ingest(&manifest, &out_dir)?;
            println!("{}", stats.render());
            println!("wrote {}", path.display());
        }
        Command::Train { common, context, seed } => {
            let cfg = load_config(&common)?;
            let manifest = resolve_manifest(&common, &cfg)?;
            let out_dir = resolve_out_dir(common.out_dir.as_deref(), &cfg);
            let ctx = match ContextChoice::parse(&context) {
                ContextChoice::Auto => {
                    return Err(Error::validation(
                        "train takes a concrete context; run select-context or evaluate --context auto",
                    ))
                }
                ContextChoice::None => None,
                ContextChoice::Named(name) => Some(name),
            };
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let (report, ckpt) =
                pipeline::cmd_train(&manifest, &cfg, &out_dir, ctx.as_deref(), seed)?;
            let last = report.epoch_total.len();
            println!(
                "trained {last} epochs: total {:.4}, recon {:.4}, mmd {:.6}",
                report.epoch_total[last - 1],
                report.epoch_recon[last - 1],
                report.epoch_mmd[last - 1]
            );
            if let Some(v) = report.epoch_val_recon.last() {
                println!("validation recon {v:.4}");
            }
            println!("wrote {}", ckpt.display());
        }
        Command::SelectContext(common) => {
            let cfg = load_config(&common)?;
            let manifest = resolve_manifest(&common, &cfg)?;
            let out_dir = resolve_out_dir(common.out_dir.as_deref(), &cfg);
            let arts = pipeline::cmd_select_context(&manifest, &cfg, &out_dir)?;
            for c in &arts.report.candidates {
                println!(
                    "{:<24} joint {:.4} = conditional {:.4} + context {:.4}",
                    c.candidate, c.joint_loss, c.conditional_nll, c.context_nll
                );
            }
            for f in &arts.report.failures {
                println!("{:<24} failed: {}", f.candidate, f.error);
            }
            println!("chosen: {}", arts.report.chosen);
            println!("wrote {}", arts.report_path.display());
        }
        Command::Evaluate { common, context, sweep_best } => {
            let cfg = load_config(&common)?;
            let manifest = resolve_manifest(&common, &cfg)?;
            let out_dir = resolve_out_dir(common.out_dir.as_deref(), &cfg);
            let arts = pipeline::cmd_evaluate(EvaluateArgs {
                manifest_path: &manifest,
                cfg: &cfg,
                out_dir: &out_dir,
                context: ContextChoice::parse(&context),
                sweep_best,
            })?;
            let s = &arts.summary;
            for o in &s.seeds {
                println!(
                    "seed {}: cwae {:.4}  wae {:.4}",
                    o.seed, o.cwae_aucroc, o.wae_aucroc
                );
            }
            println!(
                "{} context {}: cwae {:.4} +/- {:.4}, wae {:.4} +/- {:.4}",
                s.dataset, s.chosen_context, s.cwae_mean, s.cwae_stddev, s.wae_mean, s.wae_stddev
            );
            println!("wrote {}", arts.summary_path.display());
        }
        Command::Complexity { datasets, raw_scores, out_dir } => {
            let out_dir = match out_dir {
                Some(d) => d,
                None => resolve_out_dir(None, &RunConfig::default()),
            };
            let (reports, outcomes, csv) =
                pipeline::cmd_complexity(&datasets, raw_scores.as_deref(), &out_dir)?;
            for o in &outcomes {
                for (name, val) in pipeline::METRIC_NAMES.iter().zip(&o.values) {
                    if let Err(e) = val {
                        println!("{}: {name} error: {e}", o.dataset);
                    }
                }
            }
            for r in &reports {
                println!(
                    "{:<12} avg_scaled {:.3} rank {}",
                    r.dataset, r.avg_scaled, r.overall_rank
                );
            }
            println!("wrote {}", csv.display());
        }
        Command::Report { summaries, complexity } => {
            let table = pipeline::cmd_report(&summaries, complexity.as_deref())?;
            print!("{table}");
        }
    }
    Ok(())
}
