use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use spfts_core::diagnostics::{DEFAULT_ACF_LAGS, DEFAULT_K_MAX};

use crate::commands;
use crate::config::{ExperimentConfig, Mode, CONFIG_SCHEMA_VERSION};
use crate::error::{AppError, Result};
use crate::pipeline::{IngestOptions, Schema, Transform};

/// Spurious factor diagnostics for integrated functional panels.
#[derive(Debug, Parser)]
#[command(name = "spfts", version)]
pub struct Cli {
    /// Worker threads for replicate and curve loops (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate replicates and summarize their eigenstructure.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Effective rank table for one or more models.
    Rank {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ingest a CSV panel and compare its eigenvectors with the cosine limits.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        kmax: usize,
        #[arg(long, default_value_t = DEFAULT_ACF_LAGS)]
        acf_lags: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lag-1 autocorrelation of leading eigenvectors across replicates.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ingest and smooth a CSV panel into a JSON panel container.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Schema::Long)]
    pub schema: Schema,
    /// Number of Fourier basis functions.
    #[arg(long)]
    pub q: usize,
    /// Pool grid points from this label onward into one.
    #[arg(long)]
    pub tail_cutoff: Option<String>,
    #[arg(long, value_enum, default_value_t = Transform::Log)]
    pub transform: Transform,
}

fn load_config(path: &Path, expected: Mode) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?.resolve_seed_from_env()?;
    if cfg.mode != expected {
        return Err(AppError::Config(format!(
            "config mode is {:?}, expected {:?}",
            cfg.mode, expected
        )));
    }
    Ok(cfg)
}

fn flag_config(
    mode: Mode,
    input: InputArgs,
    k_max: usize,
    acf_lags: usize,
    out: &Path,
) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        mode,
        model: None,
        models: Vec::new(),
        replicates: 1,
        k_max,
        acf_lags,
        data: Some(input.data),
        ingest: Some(IngestOptions {
            schema: input.schema,
            q: input.q,
            tail_cutoff: input.tail_cutoff,
            transform: input.transform,
        }),
        out: Some(out.to_path_buf()),
        seed: None,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and returns the text to print.
pub fn run(cli: Cli) -> Result<String> {
    let threads = cli.threads;
    if threads == Some(0) {
        return Err(AppError::Config("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(&config, Mode::Simulate)?;
            let res = commands::with_threads(threads, || commands::simulate(&cfg, Some(&out)))??;
            let mut text = format!(
                "config {}\n{:>3} {:>10} {:>10} {:>10}\n",
                cfg.hash(),
                "k",
                "alignment",
                "share",
                "6/(kpi)^2"
            );
            for c in &res.summary.components {
                text += &format!(
                    "{:>3} {:>10.4} {:>10.4} {:>10.4}\n",
                    c.k, c.alignment.median, c.share.median, c.theory_share
                );
            }
            Ok(text)
        }
        Command::Rank { config, out } => {
            let cfg = load_config(&config, Mode::Rank)?;
            let rows = commands::with_threads(threads, || commands::rank(&cfg))??;
            if let Some(dir) = out {
                commands::write_rank(&cfg, &rows, &dir)?;
            }
            Ok(commands::rank_table(&rows))
        }
        Command::Analyze {
            input,
            kmax,
            acf_lags,
            out,
        } => {
            let cfg = flag_config(Mode::Analyze, input, kmax, acf_lags, &out)?;
            let res = commands::with_threads(threads, || commands::analyze(&cfg, Some(&out)))??;
            let r = &res.report;
            let mut text = format!(
                "config {}\np = {}, T = {}\n{:>3} {:>10} {:>10} {:>10}\n",
                cfg.hash(),
                r.p,
                r.t_len,
                "k",
                "alignment",
                "share",
                "6/(kpi)^2"
            );
            for k in 0..r.k_max {
                text += &format!(
                    "{:>3} {:>10.4} {:>10.4} {:>10.4}\n",
                    k + 1,
                    r.alignments[k],
                    r.variance_shares[k],
                    r.theory_shares[k]
                );
            }
            Ok(text)
        }
        Command::Probe { config, out } => {
            let cfg = load_config(&config, Mode::Probe)?;
            let res = commands::with_threads(threads, || commands::probe(&cfg, out.as_deref()))??;
            Ok(commands::probe_table(&res))
        }
        Command::Ingest { input, out } => {
            let cfg = flag_config(Mode::Ingest, input, DEFAULT_K_MAX, DEFAULT_ACF_LAGS, &out)?;
            let c = commands::with_threads(threads, || commands::ingest_only(&cfg, Some(&out)))??;
            Ok(format!(
                "config {}\n{} series x {} times, q = {}, {} cells filled\n",
                cfg.hash(),
                c.p,
                c.t_len,
                c.basis.q,
                c.provenance.filled.len()
            ))
        }
    }
}
