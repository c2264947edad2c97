//! Limits of the sample eigenstructure under integrated factors and the
//! metrics comparing observed eigenvectors and eigenvalues against them.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DVector;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::spectral::Eigen;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_ACF_LAGS: usize = 20;
pub const DEFAULT_K_MAX: usize = 8;

/// `d_kt = sqrt(2/T) cos(pi k t / T)`, `t = 1..T`.
pub fn spurious_vector(k: usize, t_len: usize) -> Result<DVector<f64>> {
    if k == 0 || k >= t_len {
        bail!(Parameter, "spurious vector index {k} outside 1..{t_len}");
    }
    let scale = Float::sqrt(2.0 / t_len as f64);
    Ok(DVector::from_fn(t_len, |t, _| {
        scale * Float::cos(PI * (k * (t + 1)) as f64 / t_len as f64)
    }))
}

/// `|<u, d_k / |d_k|>|` for a unit vector `u`.
pub fn alignment(u: &DVector<f64>, k: usize) -> Result<f64> {
    let norm = u.norm();
    if (norm - 1.0).abs() > 1e-8 {
        bail!(Parameter, "alignment needs a unit vector, got norm {norm}");
    }
    let d = spurious_vector(k, u.len())?;
    Ok((u.dot(&d) / d.norm()).abs().min(1.0))
}

/// `T^2 / (k^2 pi^2 p) <C_eps Omega>`.
pub fn theory_eigenvalue(k: usize, t_len: usize, p: usize, trace_ce_omega: f64) -> Result<f64> {
    if k == 0 || t_len == 0 || p == 0 {
        bail!(Parameter, "k, T and p must be positive");
    }
    if trace_ce_omega <= 0.0 || !trace_ce_omega.is_finite() {
        bail!(
            Parameter,
            "<C_eps Omega> must be positive, got {trace_ce_omega}"
        );
    }
    let (k, t) = (k as f64, t_len as f64);
    Ok(t * t / (k * k * PI * PI * p as f64) * trace_ce_omega)
}

/// Limiting share of variance of the `k`-th eigenvalue, `6 / (k pi)^2`.
pub fn theory_share(k: usize) -> f64 {
    let kp = k as f64 * PI;
    6.0 / (kp * kp)
}

/// Sample autocorrelations at lags `1..=max_lag`.
pub fn eigenvector_acf(u: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = u.len();
    if max_lag >= n {
        bail!(
            Parameter,
            "max lag {max_lag} must be below the series length {n}"
        );
    }
    let mean = u.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = u.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom <= f64::EPSILON * f64::EPSILON * n as f64 {
        bail!(Undefined, "autocorrelation of a constant series");
    }
    Ok((1..=max_lag)
        .map(|h| {
            centered
                .iter()
                .zip(&centered[h..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom
        })
        .collect())
}

/// Whether an eigenvector looks like an integrated path or like white noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persistence {
    Persistent,
    WhiteNoise,
    Ambiguous,
}

/// Lag-1 autocorrelation cutoffs for [`Persistence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceCutoffs {
    pub persistent_above: f64,
    pub white_noise_below: f64,
}

impl Default for PersistenceCutoffs {
    fn default() -> Self {
        Self {
            persistent_above: 0.8,
            white_noise_below: 0.3,
        }
    }
}

impl PersistenceCutoffs {
    pub fn classify(&self, lag1: f64) -> Persistence {
        if lag1 > self.persistent_above {
            Persistence::Persistent
        } else if lag1 < self.white_noise_below {
            Persistence::WhiteNoise
        } else {
            Persistence::Ambiguous
        }
    }

    /// Number of leading persistent eigenvectors.
    pub fn split_index(&self, lag1: &[f64]) -> usize {
        lag1.iter()
            .take_while(|v| self.classify(**v) == Persistence::Persistent)
            .count()
    }
}

/// Constants needed to compare a sample spectrum with its limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportConstants {
    pub p: usize,
    /// `<C_eps Omega>` when the generating model is known.
    pub trace_ce_omega: Option<f64>,
    pub acf_lags: usize,
}

/// Eigenstructure of one Gram matrix set against its spurious limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub schema_version: u32,
    pub t_len: usize,
    pub p: usize,
    pub k_max: usize,
    /// All `T` eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `|<u_k, d_k>|` for `k = 1..k_max`.
    pub alignments: Vec<f64>,
    /// `lambda_k / sum_j lambda_j` over all `T` eigenvalues.
    pub variance_shares: Vec<f64>,
    pub theory_eigenvalues: Option<Vec<f64>>,
    pub theory_shares: Vec<f64>,
    /// Lag `1..acf_lags` autocorrelations per leading eigenvector; empty when undefined.
    pub acf: Vec<Vec<f64>>,
    /// Set when the spectrum carries no variance.
    pub degenerate: bool,
}

impl SpectralReport {
    pub fn lag1_acf(&self) -> Vec<f64> {
        self.acf
            .iter()
            .map(|a| a.first().copied().unwrap_or(f64::NAN))
            .collect()
    }
}

pub fn build_report(eig: &Eigen, constants: &ReportConstants) -> Result<SpectralReport> {
    let t_len = eig.values.len();
    let k_max = eig.vectors.ncols();
    if eig.vectors.nrows() != t_len {
        bail!(
            Dimension,
            "eigenvectors have length {} but there are {t_len} eigenvalues",
            eig.vectors.nrows()
        );
    }
    let clipped: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let scale = eig.values.first().copied().unwrap_or(0.0).abs();
    let degenerate = total <= f64::MIN_POSITIVE || scale == 0.0;
    let variance_shares = if degenerate {
        alloc::vec![0.0; t_len]
    } else {
        clipped.iter().map(|v| v / total).collect()
    };

    let mut alignments = Vec::with_capacity(k_max);
    let mut acf = Vec::with_capacity(k_max);
    let lags = constants.acf_lags.min(t_len.saturating_sub(1));
    for k in 0..k_max {
        let u = eig.vectors.column(k).into_owned();
        alignments.push(if k + 1 < t_len {
            alignment(&u, k + 1)?
        } else {
            0.0
        });
        acf.push(eigenvector_acf(u.as_slice(), lags).unwrap_or_default());
    }

    let theory_eigenvalues = match constants.trace_ce_omega {
        Some(tr) if tr > 0.0 => Some(
            (1..=k_max)
                .map(|k| theory_eigenvalue(k, t_len, constants.p, tr))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };

    Ok(SpectralReport {
        schema_version: REPORT_SCHEMA_VERSION,
        t_len,
        p: constants.p,
        k_max,
        eigenvalues: eig.values.clone(),
        alignments,
        variance_shares,
        theory_eigenvalues,
        theory_shares: (1..=k_max).map(theory_share).collect(),
        acf,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::FunctionalPanel;
    use crate::spectral::{eigendecompose, gram_matrix, mtheta_svd};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn random_unit(t_len: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
        DVector::from_fn(t_len, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize()
    }

    #[test]
    fn spurious_vector_cases() {
        let d = spurious_vector(1, 2).unwrap();
        assert!(d[0].abs() < 1e-15);
        assert!((d[1] + 1.0).abs() < 1e-15);
        assert!((spurious_vector(1, 200).unwrap().norm_squared() - 1.0).abs() < 5.0 / 200.0);
        assert!(spurious_vector(0, 10).is_err());
        assert!(spurious_vector(10, 10).is_err());
        for j in 1..6 {
            for k in (j + 1)..6 {
                let ip = spurious_vector(j, 50)
                    .unwrap()
                    .dot(&spurious_vector(k, 50).unwrap());
                assert!(ip.abs() <= 2.0 / 50.0 + 1e-12);
            }
        }
    }

    #[test]
    fn spurious_vectors_track_mtheta_left_vectors() {
        let svd = mtheta_svd(200).unwrap();
        for k in 1..=5 {
            let d = spurious_vector(k, 200).unwrap();
            let ip = d.dot(&svd.left.column(k - 1)).abs();
            assert!(ip >= 1.0 - 10.0 / 200.0, "k = {k}: {ip}");
        }
    }

    #[test]
    fn alignment_cases() {
        let d = spurious_vector(3, 40).unwrap();
        let u = d.normalize();
        assert!((alignment(&u, 3).unwrap() - 1.0).abs() < 1e-12);

        let other = spurious_vector(4, 41).unwrap();
        let v = spurious_vector(3, 41).unwrap();
        let perp = (&other - &v * (other.dot(&v) / v.norm_squared())).normalize();
        assert!(alignment(&perp, 3).unwrap() < 1e-12);

        assert!(alignment(&(d * 2.0), 3).is_err());
    }

    #[test]
    fn alignment_null_distribution() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let draws: Vec<f64> = (0..2000)
            .map(|_| alignment(&random_unit(200, &mut rng), 1).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let expected = Float::sqrt(2.0 / (PI * 200.0));
        assert!((mean - expected).abs() < 0.01, "mean {mean} vs {expected}");
        let below = draws.iter().filter(|a| **a < 0.2).count() as f64 / draws.len() as f64;
        assert!(below >= 0.99);
    }

    #[test]
    fn theory_eigenvalue_cases() {
        // T = pi would need a non-integer T; check unit normalization via the formula instead.
        let one = theory_eigenvalue(1, 10, 1, PI * PI / 100.0).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        let a = theory_eigenvalue(2, 100, 5, 3.0).unwrap();
        let b = theory_eigenvalue(2, 200, 5, 3.0).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!(theory_eigenvalue(1, 10, 1, 0.0).is_err());
    }

    #[test]
    fn theory_share_cases() {
        assert!((theory_share(1) - 0.60793).abs() < 1e-5);
        assert!((theory_share(2) - 0.15198).abs() < 1e-5);
        let partial: f64 = (1..=10_000).map(theory_share).sum();
        assert!((partial - 1.0).abs() < 1e-3);
    }

    #[test]
    fn acf_cases() {
        let d = spurious_vector(1, 200).unwrap();
        assert!(eigenvector_acf(d.as_slice(), 5).unwrap()[0] > 0.95);

        let alt: Vec<f64> = (0..100)
            .map(|t| if t % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert!((eigenvector_acf(&alt, 1).unwrap()[0] + 1.0).abs() < 0.02);

        assert!(eigenvector_acf(&[2.0; 10], 1).is_err());
        assert!(eigenvector_acf(&[1.0, 2.0], 2).is_err());

        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let inside = (0..500)
            .filter(|_| {
                let u = random_unit(200, &mut rng);
                eigenvector_acf(u.as_slice(), 1).unwrap()[0].abs() < 2.0 / Float::sqrt(200.0)
            })
            .count();
        assert!(inside as f64 / 500.0 > 0.92);
    }

    #[test]
    fn persistence_split() {
        let cut = PersistenceCutoffs::default();
        assert_eq!(cut.split_index(&[0.99, 0.95, 0.9, 0.1, 0.95]), 3);
        assert_eq!(cut.classify(0.5), Persistence::Ambiguous);
        assert_eq!(cut.split_index(&[]), 0);
    }

    #[test]
    fn zero_panel_report_is_degenerate() {
        let s = gram_matrix(&FunctionalPanel::zeros(2, 6, 2));
        let eig = eigendecompose(&s, 3).unwrap();
        let r = build_report(
            &eig,
            &ReportConstants {
                p: 2,
                trace_ce_omega: None,
                acf_lags: 3,
            },
        )
        .unwrap();
        assert!(r.degenerate);
        assert!(r.theory_eigenvalues.is_none());
        assert_eq!(r.theory_shares.len(), 3);
    }

    #[test]
    fn report_round_trips_through_json() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let values: Vec<f64> = (0..3 * 10 * 2)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let panel = FunctionalPanel::from_tensor(3, 10, 2, &values).unwrap();
        let eig = eigendecompose(&gram_matrix(&panel), 4).unwrap();
        let r = build_report(
            &eig,
            &ReportConstants {
                p: 3,
                trace_ce_omega: Some(2.5),
                acf_lags: 4,
            },
        )
        .unwrap();
        assert!(!r.degenerate);
        assert!((r.variance_shares.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(r.variance_shares.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.alignments.iter().all(|a| (0.0..=1.0).contains(a)));
        let json = serde_json::to_string(&r).unwrap();
        let back: SpectralReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
