//! Monte Carlo replicates and their summaries.
//!
//! Replicates are independent given their index, so callers may run them in
//! any order or in parallel and still get identical results.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dgp::{simulate_panel, ModelConfig, SimulatedPanel};
use crate::diagnostics::{build_report, PersistenceCutoffs, ReportConstants, SpectralReport};
use crate::error::{bail, Result};
use crate::operator::build_omega;
use crate::rank::trace_ce_omega;
use crate::rng::replicate_seed;
use crate::spectral::{eigendecompose, gram_matrix};
use crate::stats::{median, quantile};

/// Draws replicate `replicate` of `cfg` and returns the panel with its report.
pub fn simulate_replicate(
    cfg: &ModelConfig,
    replicate: u64,
    k_max: usize,
    acf_lags: usize,
) -> Result<(SimulatedPanel, SpectralReport)> {
    let cfg = cfg.with_seed(replicate_seed(cfg.seed, replicate));
    let sim = simulate_panel(&cfg)?;
    let cov = cfg.covariance_spec()?;
    let trace = trace_ce_omega(&cov, &build_omega(&sim.loadings))?;
    let eig = eigendecompose(&gram_matrix(&sim.panel), k_max)?;
    let report = build_report(
        &eig,
        &ReportConstants {
            p: cfg.p,
            trace_ce_omega: Some(trace),
            acf_lags,
        },
    )?;
    Ok((sim, report))
}

pub fn run_replicate(
    cfg: &ModelConfig,
    replicate: u64,
    k_max: usize,
    acf_lags: usize,
) -> Result<SpectralReport> {
    simulate_replicate(cfg, replicate, k_max, acf_lags).map(|(_, r)| r)
}

/// Median and interquartile range of one quantity across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Spread {
    pub fn of(x: &[f64]) -> Self {
        Self {
            median: median(x),
            q25: quantile(x, 0.25),
            q75: quantile(x, 0.75),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

/// Replicate spread for eigenvector `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    /// 1-based.
    pub k: usize,
    /// `lambda_k` over its limit; absent when the limit is unknown.
    pub eigenvalue_ratio: Option<Spread>,
    pub eigenvalue: Spread,
    pub alignment: Spread,
    pub share: Spread,
    pub theory_share: f64,
    pub lag1_acf: Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub replicates: usize,
    pub components: Vec<ComponentSummary>,
}

pub fn summarize(reports: &[SpectralReport]) -> Result<MonteCarloSummary> {
    let Some(first) = reports.first() else {
        bail!(Sizing, "no replicates to summarize");
    };
    let k_max = first.k_max;
    if reports.iter().any(|r| r.k_max != k_max) {
        bail!(Dimension, "replicates disagree on k_max");
    }
    let components = (0..k_max)
        .map(|k| {
            let column = |f: &dyn Fn(&SpectralReport) -> Option<f64>| -> Option<Vec<f64>> {
                reports.iter().map(f).collect()
            };
            let ratios = column(&|r| {
                let theory = r.theory_eigenvalues.as_ref()?[k];
                Some(r.eigenvalues[k] / theory)
            });
            let eigenvalues = column(&|r| Some(r.eigenvalues[k])).unwrap_or_default();
            let alignment = column(&|r| Some(r.alignments[k])).unwrap_or_default();
            let share = column(&|r| Some(r.variance_shares[k])).unwrap_or_default();
            let lag1 = column(&|r| Some(r.acf[k].first().copied().unwrap_or(f64::NAN)))
                .unwrap_or_default();
            ComponentSummary {
                k: k + 1,
                eigenvalue_ratio: ratios.map(|x| Spread::of(&x)),
                eigenvalue: Spread::of(&eigenvalues),
                alignment: Spread::of(&alignment),
                share: Spread::of(&share),
                theory_share: first.theory_shares[k],
                lag1_acf: Spread::of(&lag1),
            }
        })
        .collect();
    Ok(MonteCarloSummary {
        replicates: reports.len(),
        components,
    })
}

/// Where the persistent leading eigenvectors end, per replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub cutoffs: PersistenceCutoffs,
    pub split_indices: Vec<usize>,
    /// Most frequent split; ties go to the smaller index.
    pub modal_split: usize,
    /// Median lag-1 autocorrelation per eigenvector.
    pub median_lag1: Vec<f64>,
}

pub fn probe_summary(
    reports: &[SpectralReport],
    cutoffs: PersistenceCutoffs,
) -> Result<ProbeSummary> {
    if reports.is_empty() {
        bail!(Sizing, "no replicates to summarize");
    }
    let split_indices: Vec<usize> = reports
        .iter()
        .map(|r| cutoffs.split_index(&r.lag1_acf()))
        .collect();
    let max = split_indices.iter().copied().max().unwrap_or(0);
    let mut counts = alloc::vec![0usize; max + 1];
    for s in &split_indices {
        counts[*s] += 1;
    }
    let modal_split = counts
        .iter()
        .enumerate()
        .fold(
            (0, 0),
            |best, (i, c)| if *c > best.1 { (i, *c) } else { best },
        )
        .0;
    let k_max = reports[0].k_max;
    let median_lag1 = (0..k_max)
        .map(|k| {
            let x: Vec<f64> = reports
                .iter()
                .map(|r| r.lag1_acf().get(k).copied().unwrap_or(f64::NAN))
                .collect();
            median(&x)
        })
        .collect();
    Ok(ProbeSummary {
        cutoffs,
        split_indices,
        modal_split,
        median_lag1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::NoiseSetting;

    fn small(number: u8) -> ModelConfig {
        ModelConfig {
            t_len: 60,
            p: 20,
            q: 5,
            k: 3,
            noise: NoiseSetting::Geometric,
            ..ModelConfig::setting(number, 3, 11).unwrap()
        }
    }

    #[test]
    fn replicates_are_reproducible_and_distinct() {
        let cfg = small(1);
        let a = run_replicate(&cfg, 0, 4, 5).unwrap();
        let b = run_replicate(&cfg, 0, 4, 5).unwrap();
        let c = run_replicate(&cfg, 1, 4, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.eigenvalues, c.eigenvalues);
        assert!(a.theory_eigenvalues.is_some());
        assert_eq!(a.acf[0].len(), 5);
    }

    #[test]
    fn summary_shapes() {
        let cfg = small(2);
        let reports: Vec<SpectralReport> = (0..6)
            .map(|r| run_replicate(&cfg, r, 3, 5).unwrap())
            .collect();
        let s = summarize(&reports).unwrap();
        assert_eq!(s.replicates, 6);
        assert_eq!(s.components.len(), 3);
        for c in &s.components {
            assert!(c.share.q25 <= c.share.median && c.share.median <= c.share.q75);
            assert!(c.eigenvalue_ratio.unwrap().median > 0.0);
        }
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn probe_split_counts() {
        let cfg = small(1);
        let reports: Vec<SpectralReport> = (0..4)
            .map(|r| run_replicate(&cfg, r, 4, 3).unwrap())
            .collect();
        let probe = probe_summary(&reports, PersistenceCutoffs::default()).unwrap();
        assert_eq!(probe.split_indices.len(), 4);
        assert!(probe.split_indices.contains(&probe.modal_split));
        // Every leading eigenvector of a pure integrated panel is persistent.
        assert!(
            probe.median_lag1.iter().all(|v| *v > 0.8),
            "{:?}",
            probe.median_lag1
        );
    }

    #[test]
    fn spread_of_constant() {
        let s = Spread::of(&[2.0; 5]);
        assert_eq!((s.median, s.iqr()), (2.0, 0.0));
    }
}
