//! Subcommand implementations. Each returns its results and, when given an
//! output directory, writes them there with the config hash attached.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use spfts_core::dgp::{make_loadings, CovarianceSetting, LoadingScheme, ModelConfig};
use spfts_core::diagnostics::{build_report, PersistenceCutoffs, ReportConstants, SpectralReport};
use spfts_core::experiment::{
    probe_summary, simulate_replicate, summarize, MonteCarloSummary, ProbeSummary,
};
use spfts_core::rank::{
    effective_rank_report, order_tag, per_direction_stats, weighted_ratio_statistic,
    EffectiveRankReport, RegimeThresholds,
};
use spfts_core::spectral::{eigendecompose, gram_matrix};

use crate::config::ExperimentConfig;
use crate::error::{AppError, Result, StageExt};
use crate::figures::{eigenvector_overlay, scree, Figure};
use crate::pipeline::{ingest, write_file, IngestOptions, PanelContainer};

/// JSON artifact stamped with the hash of the config that produced it.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn stamped_json<T: Serialize>(hash: &str, body: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(&Stamped {
        config_hash: hash,
        body,
    })
    .expect("artifact serializes");
    bytes.push(b'\n');
    bytes
}

/// Collects written files so they can be listed in `manifest.json`.
struct Artifacts {
    dir: PathBuf,
    hash: String,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path, hash: &str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            files: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_file(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let bytes = stamped_json(&self.hash, body);
        self.write(name, &bytes)
    }

    fn figure(&mut self, stem: &str, fig: &Figure) -> Result<()> {
        self.write(&format!("{stem}.svg"), fig.svg.as_bytes())?;
        self.write(&format!("{stem}.csv"), fig.csv.as_bytes())
    }

    fn finish(mut self, config: &ExperimentConfig) -> Result<Vec<String>> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            config: &'a ExperimentConfig,
            files: &'a [String],
        }
        self.files.sort();
        let bytes = stamped_json(
            &self.hash,
            &Manifest {
                config,
                files: &self.files,
            },
        );
        write_file(&self.dir.join("manifest.json"), &bytes)?;
        Ok(self.files)
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| {
                    AppError::Config(format!("cannot build a pool of {n} threads: {e}"))
                })?;
            Ok(pool.install(f))
        }
    }
}

fn require_model(cfg: &ExperimentConfig) -> Result<&ModelConfig> {
    cfg.model
        .as_ref()
        .ok_or_else(|| AppError::Config("this command needs a `model`".into()))
}

fn run_replicates(model: &ModelConfig, cfg: &ExperimentConfig) -> Result<Vec<SpectralReport>> {
    (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            simulate_replicate(model, r, cfg.k_max, cfg.acf_lags)
                .map(|(_, rep)| rep)
                .stage("simulate")
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub summary: MonteCarloSummary,
    pub reports: Vec<SpectralReport>,
}

pub fn simulate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SimulateOutput> {
    let model = require_model(cfg)?;
    let reports = run_replicates(model, cfg)?;
    let summary = summarize(&reports).stage("summarize")?;
    if let Some(dir) = out {
        let hash = cfg.hash();
        let mut art = Artifacts::new(dir, &hash);
        for (r, rep) in reports.iter().enumerate() {
            art.json(&format!("replicates/replicate_{r:04}.json"), rep)?;
        }
        art.json("summary.json", &summary)?;
        let (sim, _) = simulate_replicate(model, 0, cfg.k_max, cfg.acf_lags).stage("simulate")?;
        let eig = eigendecompose(&gram_matrix(&sim.panel), cfg.k_max).stage("eigen")?;
        art.figure(
            "eigenvectors",
            &eigenvector_overlay(
                &eig.vectors,
                "Leading eigenvectors (replicate 0) vs cosine limits",
                &hash,
            ),
        )?;
        let shares: Vec<f64> = summary.components.iter().map(|c| c.share.median).collect();
        let theory: Vec<f64> = summary.components.iter().map(|c| c.theory_share).collect();
        art.figure(
            "scree",
            &scree(
                &shares,
                &theory,
                "Median variance share vs 6/(k pi)^2",
                &hash,
            ),
        )?;
        art.finish(cfg)?;
    }
    Ok(SimulateOutput { summary, reports })
}

/// The six standard settings at `K = 10`.
pub fn standard_models(seed: u64) -> Vec<ModelConfig> {
    (1..=6)
        .map(|s| ModelConfig::setting(s, 10, seed).expect("standard settings are valid"))
        .collect()
}

pub const RANK_K_GRID: [usize; 4] = [5, 10, 20, 40];

fn model_label(m: &ModelConfig) -> String {
    let cov = match &m.covariance {
        CovarianceSetting::DelocalizedFlat => "flat",
        CovarianceSetting::LocalizedGeometric => "geometric",
        CovarianceSetting::LocalizedRank2 => "rank2",
        CovarianceSetting::Custom { .. } => "custom",
    };
    format!("{cov}/{}", m.loadings.label())
}

fn rank_row(m: &ModelConfig) -> Result<EffectiveRankReport> {
    let cov = m.covariance_spec().stage("rank")?;
    let loadings = m.loading_spec().stage("rank")?;
    let grid = match m.loadings {
        LoadingScheme::Custom { .. } => Vec::new(),
        _ => RANK_K_GRID
            .iter()
            .filter(|k| **k <= m.p)
            .map(|k| {
                let l = make_loadings(&m.loadings, m.p, *k, m.q, m.seed)?;
                Ok((
                    *k as f64,
                    weighted_ratio_statistic(&cov, &per_direction_stats(&l)),
                ))
            })
            .collect::<spfts_core::Result<Vec<_>>>()
            .stage("rank")?,
    };
    effective_rank_report(
        model_label(m),
        &cov,
        &loadings,
        order_tag(&m.covariance, &m.loadings),
        &RegimeThresholds::default(),
        &grid,
    )
    .stage("rank")
}

pub fn rank(cfg: &ExperimentConfig) -> Result<Vec<EffectiveRankReport>> {
    let models = if cfg.models.is_empty() {
        standard_models(cfg.seed.unwrap_or(0))
    } else {
        cfg.models.clone()
    };
    models.par_iter().map(rank_row).collect()
}

pub fn rank_table(rows: &[EffectiveRankReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:>3} {:>3} {:>9} {:>11} {:>8} {:>8} {:>8} {:>8}  {:<11} {:>3} {:>3}  order",
        "setting",
        "K",
        "q",
        "|Ce|_2^2",
        "<B>^2/|B|^2",
        "R",
        "R_op",
        "lower",
        "upper",
        "regime",
        "(a)",
        "(b)"
    );
    for r in rows {
        let flag = |b: bool| if b { "yes" } else { "no" };
        let _ = writeln!(
            s,
            "{:<24} {:>3} {:>3} {:>9.4} {:>11.4} {:>8.3} {:>8.3} {:>8.3} {:>8.3}  {:<11} {:>3} {:>3}  {}",
            r.label,
            r.k,
            r.q,
            r.hs_ceps * r.hs_ceps,
            r.mean_ratio_sq,
            r.effective_rank,
            r.effective_rank_op,
            r.bounds.lower,
            r.bounds.upper,
            format!("{:?}", r.regime).to_lowercase(),
            flag(r.conditions.cond_a),
            flag(r.conditions.cond_b),
            r.order.map_or("-", |o| o.label())
        );
    }
    s
}

pub fn write_rank(cfg: &ExperimentConfig, rows: &[EffectiveRankReport], out: &Path) -> Result<()> {
    let mut art = Artifacts::new(out, &cfg.hash());
    #[derive(Serialize)]
    struct Rows<'a> {
        rows: &'a [EffectiveRankReport],
    }
    art.json("rank.json", &Rows { rows })?;
    art.write("rank.txt", rank_table(rows).as_bytes())?;
    art.finish(cfg).map(|_| ())
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeOutput {
    pub report: SpectralReport,
    pub container: PanelContainer,
}

pub fn analyze(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<AnalyzeOutput> {
    let (data, opts) = ingest_inputs(cfg)?;
    let (container, _) = ingest(data, opts)?;
    let panel = container.panel()?;
    if cfg.k_max > panel.t_len() {
        return Err(AppError::Config(format!(
            "k_max = {} exceeds the {} time points in the data",
            cfg.k_max,
            panel.t_len()
        )));
    }
    let eig = eigendecompose(&gram_matrix(&panel), cfg.k_max).stage("eigen")?;
    let report = build_report(
        &eig,
        &ReportConstants {
            p: panel.p(),
            trace_ce_omega: None,
            acf_lags: cfg.acf_lags,
        },
    )
    .stage("report")?;
    if let Some(dir) = out {
        let hash = cfg.hash();
        let mut art = Artifacts::new(dir, &hash);
        art.json("report.json", &report)?;
        art.write("panel.json", &container.to_bytes())?;
        art.figure(
            "eigenvectors",
            &eigenvector_overlay(&eig.vectors, "Leading eigenvectors vs cosine limits", &hash),
        )?;
        art.figure(
            "scree",
            &scree(
                &report.variance_shares[..report.k_max],
                &report.theory_shares,
                "Variance share vs 6/(k pi)^2",
                &hash,
            ),
        )?;
        art.finish(cfg)?;
    }
    Ok(AnalyzeOutput { report, container })
}

fn ingest_inputs(cfg: &ExperimentConfig) -> Result<(&Path, &IngestOptions)> {
    match (&cfg.data, &cfg.ingest) {
        (Some(d), Some(o)) => Ok((d.as_path(), o)),
        _ => Err(AppError::Config(
            "this command needs `data` and `ingest`".into(),
        )),
    }
}

pub fn ingest_only(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PanelContainer> {
    let (data, opts) = ingest_inputs(cfg)?;
    let (container, _) = ingest(data, opts)?;
    if let Some(dir) = out {
        let mut art = Artifacts::new(dir, &cfg.hash());
        art.write("panel.json", &container.to_bytes())?;
        art.finish(cfg)?;
    }
    Ok(container)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutput {
    pub summary: ProbeSummary,
    /// Share of replicates in which eigenvector `k` is persistent.
    pub persistent_fraction: Vec<f64>,
    /// Share of replicates whose split lands on the modal index.
    pub modal_fraction: f64,
}

pub fn probe(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ProbeOutput> {
    let model = require_model(cfg)?;
    let reports = run_replicates(model, cfg)?;
    let cutoffs = PersistenceCutoffs::default();
    let summary = probe_summary(&reports, cutoffs).stage("probe")?;
    let n = reports.len() as f64;
    let persistent_fraction = (0..cfg.k_max)
        .map(|k| {
            reports
                .iter()
                .filter(|r| {
                    r.lag1_acf()
                        .get(k)
                        .is_some_and(|v| *v > cutoffs.persistent_above)
                })
                .count() as f64
                / n
        })
        .collect();
    let modal_fraction = summary
        .split_indices
        .iter()
        .filter(|s| **s == summary.modal_split)
        .count() as f64
        / n;
    let output = ProbeOutput {
        summary,
        persistent_fraction,
        modal_fraction,
    };
    if let Some(dir) = out {
        let mut art = Artifacts::new(dir, &cfg.hash());
        art.json("probe.json", &output)?;
        art.write("probe.txt", probe_table(&output).as_bytes())?;
        art.finish(cfg)?;
    }
    Ok(output)
}

pub fn probe_table(out: &ProbeOutput) -> String {
    let cutoffs = out.summary.cutoffs;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>3} {:>12} {:>12}  class",
        "k", "median acf1", "persistent"
    );
    for (k, (acf, frac)) in out
        .summary
        .median_lag1
        .iter()
        .zip(&out.persistent_fraction)
        .enumerate()
    {
        let class = format!("{:?}", cutoffs.classify(*acf)).to_lowercase();
        let _ = writeln!(
            s,
            "{:>3} {:>12.3} {:>11.0}%  {class}",
            k + 1,
            acf,
            100.0 * frac
        );
    }
    let _ = writeln!(
        s,
        "modal split after eigenvector {} in {:.0}% of replicates",
        out.summary.modal_split,
        100.0 * out.modal_fraction
    );
    s
}
