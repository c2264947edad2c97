//! Data-generating process: integrated functional factors loaded onto a
//! high-dimensional panel through a matrix of kernel operators.
//!
//! With `Psi_ik = sum_n a_nik phi_n (x) phi_n`, coefficient `n` of series `i`
//! at time `t` is `sum_k a_nik F^n_kt + W^n_it`, where `F^n` is the running
//! sum of Gaussian innovations with variance `c_n` and `W^n_it` is Gaussian
//! noise with variance `noise[n]`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::FunctionalPanel;
use crate::error::{bail, Result};
use crate::operator::CovarianceSpec;
use crate::rng::{stream_rng, Stream};

/// Eigenvalue profile of the innovation covariance `C_eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSetting {
    /// `c_n = 1/q` for `n <= q`.
    DelocalizedFlat,
    /// `c_n proportional to 2^-n` for `n <= q`, rescaled to sum to one.
    LocalizedGeometric,
    /// `c_1 = c_2 = 1/2`.
    LocalizedRank2,
    /// User-supplied eigenvalues, rescaled to sum to one and zero-padded to `q`.
    Custom { c: Vec<f64> },
}

pub fn make_covariance(setting: &CovarianceSetting, q: usize) -> Result<CovarianceSpec> {
    if q == 0 {
        bail!(Sizing, "q must be at least 1");
    }
    let raw: Vec<f64> = match setting {
        CovarianceSetting::DelocalizedFlat => alloc::vec![1.0; q],
        CovarianceSetting::LocalizedGeometric => {
            (1..=q).map(|n| Float::powi(0.5, n as i32)).collect()
        }
        CovarianceSetting::LocalizedRank2 => {
            if q < 2 {
                bail!(Sizing, "rank-2 covariance needs q >= 2");
            }
            (0..q).map(|n| if n < 2 { 0.5 } else { 0.0 }).collect()
        }
        CovarianceSetting::Custom { c } => {
            if c.len() > q {
                bail!(
                    Dimension,
                    "custom covariance has {} eigenvalues but q = {q}",
                    c.len()
                );
            }
            if let Some(v) = c.iter().find(|v| !v.is_finite() || **v < 0.0) {
                bail!(
                    Parameter,
                    "custom covariance eigenvalue {v} is negative or non-finite"
                );
            }
            let mut out = c.clone();
            out.resize(q, 0.0);
            out
        }
    };
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        bail!(Parameter, "covariance eigenvalues sum to zero");
    }
    CovarianceSpec::new(raw.into_iter().map(|v| v / total).collect())
}

/// Variances of the stationary noise coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSetting {
    /// `var(W^n) = 2^-n`.
    #[default]
    Geometric,
    /// `var(W^n) = factor * 2^-n`.
    ScaledGeometric {
        factor: f64,
    },
    Zero,
    Custom {
        variances: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub variances: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if let Some(v) = variances.iter().find(|v| !v.is_finite() || **v < 0.0) {
            bail!(Parameter, "noise variance {v} is negative or non-finite");
        }
        Ok(Self { variances })
    }

    pub fn from_setting(setting: &NoiseSetting, q: usize) -> Result<Self> {
        let geometric = |scale: f64| {
            (1..=q)
                .map(|n| scale * Float::powi(0.5, n as i32))
                .collect()
        };
        match setting {
            NoiseSetting::Geometric => Self::new(geometric(1.0)),
            NoiseSetting::ScaledGeometric { factor } => Self::new(geometric(*factor)),
            NoiseSetting::Zero => Self::new(alloc::vec![0.0; q]),
            NoiseSetting::Custom { variances } => {
                if variances.len() != q {
                    bail!(
                        Dimension,
                        "noise has {} variances but q = {q}",
                        variances.len()
                    );
                }
                Self::new(variances.clone())
            }
        }
    }

    /// Trace of the noise covariance of a single series.
    pub fn trace(&self) -> f64 {
        self.variances.iter().sum()
    }
}

/// How the loading matrices `A_n` (each `p x K`) are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadingScheme {
    /// Independent standard Gaussian entries.
    FullRank,
    /// `p^(1/2) U_p diag(2^-1/2, ..., 2^-K/2, 0, ...) U_K'` with Haar `U_p`, `U_K`.
    LowEffRank,
    /// Product of Gaussian `p x r` and `r x K` matrices.
    ReducedRank { rank: usize },
    /// Explicit matrices, one per basis direction, each given row by row.
    Custom { matrices: Vec<Vec<Vec<f64>>> },
}

impl LoadingScheme {
    pub fn label(&self) -> &'static str {
        match self {
            Self::FullRank => "full rank",
            Self::LowEffRank => "low eff. rank",
            Self::ReducedRank { .. } => "reduced rank",
            Self::Custom { .. } => "custom",
        }
    }
}

/// The loading matrices `A_n`, `n = 1..q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingSpec {
    p: usize,
    k: usize,
    matrices: Vec<DMatrix<f64>>,
}

impl LoadingSpec {
    pub fn custom(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            bail!(Sizing, "loadings need at least one basis direction");
        };
        let (p, k) = first.shape();
        if p == 0 || k == 0 {
            bail!(Sizing, "loading matrices must be non-empty");
        }
        if matrices.iter().any(|a| a.shape() != (p, k)) {
            bail!(Dimension, "loading matrices differ in shape");
        }
        if matrices
            .iter()
            .flat_map(|a| a.iter())
            .any(|v| !v.is_finite())
        {
            bail!(Data, "loading matrices contain non-finite entries");
        }
        Ok(Self { p, k, matrices })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrices: self.matrices.iter().map(|a| a * factor).collect(),
            ..self.clone()
        }
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    out
}

/// First `cols` columns of a Haar-distributed `rows x rows` orthogonal matrix.
///
/// QR of a Gaussian matrix with the signs of `R`'s diagonal moved into `Q`.
pub fn sample_haar_columns<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(rows, cols, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn sample_haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    sample_haar_columns(n, n, rng)
}

/// Draws the loading matrices for `q` basis directions.
pub fn make_loadings(
    scheme: &LoadingScheme,
    p: usize,
    k: usize,
    q: usize,
    seed: u64,
) -> Result<LoadingSpec> {
    let mut rng = stream_rng(seed, Stream::Loadings);
    sample_loadings(scheme, p, k, q, &mut rng)
}

pub fn sample_loadings<R: Rng + ?Sized>(
    scheme: &LoadingScheme,
    p: usize,
    k: usize,
    q: usize,
    rng: &mut R,
) -> Result<LoadingSpec> {
    if p == 0 || k == 0 || q == 0 {
        bail!(Sizing, "loadings need p, K, q >= 1 (got {p}, {k}, {q})");
    }
    let matrices = match scheme {
        LoadingScheme::FullRank => (0..q).map(|_| gaussian_matrix(p, k, rng)).collect(),
        LoadingScheme::LowEffRank => {
            if k > p {
                bail!(
                    Parameter,
                    "low effective rank loadings need K <= p (got K = {k}, p = {p})"
                );
            }
            let scale = Float::sqrt(p as f64);
            (0..q)
                .map(|_| {
                    let mut left = sample_haar_columns(p, k, rng);
                    for j in 0..k {
                        left.column_mut(j)
                            .scale_mut(scale * Float::powf(2.0, -((j + 1) as f64) / 2.0));
                    }
                    let right = sample_haar_orthogonal(k, rng);
                    left * right.transpose()
                })
                .collect()
        }
        LoadingScheme::ReducedRank { rank } => {
            if *rank == 0 {
                bail!(Parameter, "reduced-rank loadings need rank >= 1");
            }
            (0..q)
                .map(|_| gaussian_matrix(p, *rank, rng) * gaussian_matrix(*rank, k, rng))
                .collect()
        }
        LoadingScheme::Custom { matrices } => {
            if matrices.len() != q {
                bail!(
                    Dimension,
                    "custom loadings have {} matrices but q = {q}",
                    matrices.len()
                );
            }
            let mut out = Vec::with_capacity(q);
            for rows in matrices {
                if rows.len() != p || rows.iter().any(|r| r.len() != k) {
                    bail!(Dimension, "custom loading matrix is not {p} x {k}");
                }
                out.push(DMatrix::from_fn(p, k, |i, j| rows[i][j]));
            }
            out
        }
    };
    LoadingSpec::custom(matrices)
}

/// Full description of one simulated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub t_len: usize,
    pub p: usize,
    pub q: usize,
    pub k: usize,
    pub covariance: CovarianceSetting,
    pub loadings: LoadingScheme,
    #[serde(default)]
    pub noise: NoiseSetting,
    pub seed: u64,
}

impl ModelConfig {
    /// One of the six simulation settings (1-based), at `T = 200`, `p = 100`, `q = 20`.
    pub fn setting(number: u8, k: usize, seed: u64) -> Result<Self> {
        let (covariance, loadings) = match number {
            1 => (CovarianceSetting::DelocalizedFlat, LoadingScheme::FullRank),
            2 => (
                CovarianceSetting::DelocalizedFlat,
                LoadingScheme::LowEffRank,
            ),
            3 => (
                CovarianceSetting::LocalizedGeometric,
                LoadingScheme::FullRank,
            ),
            4 => (
                CovarianceSetting::LocalizedGeometric,
                LoadingScheme::LowEffRank,
            ),
            5 => (CovarianceSetting::LocalizedRank2, LoadingScheme::FullRank),
            6 => (CovarianceSetting::LocalizedRank2, LoadingScheme::LowEffRank),
            _ => bail!(Parameter, "unknown setting {number}; expected 1..=6"),
        };
        Ok(Self {
            t_len: 200,
            p: 100,
            q: 20,
            k,
            covariance,
            loadings,
            noise: NoiseSetting::Geometric,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_len < 2 {
            bail!(Parameter, "T must be at least 2");
        }
        if self.p == 0 || self.q == 0 || self.k == 0 {
            bail!(Parameter, "p, q and K must all be at least 1");
        }
        if matches!(self.loadings, LoadingScheme::LowEffRank) && self.k > self.p {
            bail!(Parameter, "low effective rank loadings need K <= p");
        }
        make_covariance(&self.covariance, self.q)?;
        NoiseSpec::from_setting(&self.noise, self.q)?;
        Ok(())
    }

    pub fn covariance_spec(&self) -> Result<CovarianceSpec> {
        make_covariance(&self.covariance, self.q)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        NoiseSpec::from_setting(&self.noise, self.q)
    }

    pub fn loading_spec(&self) -> Result<LoadingSpec> {
        make_loadings(&self.loadings, self.p, self.k, self.q, self.seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// One draw of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: FunctionalPanel,
    pub loadings: LoadingSpec,
    /// `(K q) x T`, row `k q + n` is coefficient `n` of factor `k`.
    pub factors: DMatrix<f64>,
    /// Same layout as `factors`; `factors` is its running sum over time.
    pub innovations: DMatrix<f64>,
}

/// Draws a panel from `cfg`; identical configurations give identical panels.
pub fn simulate_panel(cfg: &ModelConfig) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let loadings = cfg.loading_spec()?;
    simulate_with_loadings(cfg, loadings)
}

/// As [`simulate_panel`] but with fixed loadings.
pub fn simulate_with_loadings(cfg: &ModelConfig, loadings: LoadingSpec) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let (t_len, p, q, k) = (cfg.t_len, cfg.p, cfg.q, cfg.k);
    if (loadings.p(), loadings.k(), loadings.q()) != (p, k, q) {
        bail!(
            Dimension,
            "loadings are {} x {} over {} directions, config wants {p} x {k} over {q}",
            loadings.p(),
            loadings.k(),
            loadings.q()
        );
    }
    let cov = cfg.covariance_spec()?;
    let noise = cfg.noise_spec()?;

    let sd: Vec<f64> = cov.c.iter().map(|c| Float::sqrt(*c)).collect();
    let mut rng = stream_rng(cfg.seed, Stream::Innovations);
    let mut innovations = DMatrix::zeros(k * q, t_len);
    for t in 0..t_len {
        for kk in 0..k {
            for n in 0..q {
                let z: f64 = rng.sample(StandardNormal);
                innovations[(kk * q + n, t)] = sd[n] * z;
            }
        }
    }
    let mut factors = innovations.clone();
    for t in 1..t_len {
        let prev = factors.column(t - 1).into_owned();
        let mut col = factors.column_mut(t);
        col += &prev;
    }

    let mut data = DMatrix::zeros(p * q, t_len);
    for (n, a) in loadings.matrices().iter().enumerate() {
        if sd[n] == 0.0 {
            continue;
        }
        let f_n = DMatrix::from_fn(k, t_len, |kk, t| factors[(kk * q + n, t)]);
        let signal = a * f_n;
        for i in 0..p {
            data.row_mut(i * q + n).copy_from(&signal.row(i));
        }
    }

    let noise_sd: Vec<f64> = noise.variances.iter().map(|v| Float::sqrt(*v)).collect();
    if noise_sd.iter().any(|s| *s > 0.0) {
        let mut rng = stream_rng(cfg.seed, Stream::Noise);
        for t in 0..t_len {
            for i in 0..p {
                for n in 0..q {
                    let z: f64 = rng.sample(StandardNormal);
                    data[(i * q + n, t)] += noise_sd[n] * z;
                }
            }
        }
    }

    Ok(SimulatedPanel {
        panel: FunctionalPanel::from_matrix(p, q, data)?,
        loadings,
        factors,
        innovations,
    })
}
