//! Coordinates for square-integrable curves on an interval.
//!
//! Curves are represented by their coefficients in a truncated orthonormal
//! basis. The quadrature grid is only used when moving between sampled
//! curves and coefficients; everything downstream works on coefficients.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{bail, CoreError, Result};

/// Truncated orthonormal basis together with a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisContext {
    interval: (f64, f64),
    q: usize,
    grid: Vec<f64>,
    /// `m x q`, entry `(j, n)` is `phi_n(u_j)`.
    eval: DMatrix<f64>,
    weights: Vec<f64>,
    /// `q x m` weighted least-squares projector.
    projector: DMatrix<f64>,
}

/// Value of the `n`-th (zero-based) real Fourier basis function on `[0, 1]`.
///
/// Index 0 is the constant; indices `2j - 1` and `2j` are
/// `sqrt(2) sin(2 pi j u)` and `sqrt(2) cos(2 pi j u)`.
pub fn fourier_value(n: usize, u: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let freq = n.div_ceil(2) as f64;
    let arg = 2.0 * PI * freq * u;
    if n % 2 == 1 {
        Float::sqrt(2.0) * Float::sin(arg)
    } else {
        Float::sqrt(2.0) * Float::cos(arg)
    }
}

/// Builds the Fourier basis of order `q` on `[0, 1]` with `m` equispaced
/// trapezoid nodes. Requires `m >= 4q + 1`.
pub fn build_fourier_basis(q: usize, m: usize) -> Result<BasisContext> {
    if q == 0 {
        bail!(Sizing, "basis order must be at least 1");
    }
    if m < 4 * q + 1 {
        bail!(
            Sizing,
            "grid of {m} points is too coarse for q = {q} (need m >= {})",
            4 * q + 1
        );
    }
    let h = 1.0 / (m - 1) as f64;
    let grid: Vec<f64> = (0..m).map(|j| j as f64 * h).collect();
    let mut weights = alloc::vec![h; m];
    weights[0] = h / 2.0;
    weights[m - 1] = h / 2.0;
    let eval = DMatrix::from_fn(m, q, |j, n| fourier_value(n, grid[j]));
    BasisContext::from_parts((0.0, 1.0), grid, eval, weights)
}

impl BasisContext {
    fn from_parts(
        interval: (f64, f64),
        grid: Vec<f64>,
        eval: DMatrix<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let (m, q) = eval.shape();
        if m < q {
            bail!(
                Sizing,
                "grid of {m} points cannot determine {q} coefficients"
            );
        }
        // Weighted normal equations: (Phi' W Phi) c = Phi' W f.
        let mut weighted_t = eval.transpose();
        for (j, w) in weights.iter().enumerate() {
            weighted_t.column_mut(j).scale_mut(*w);
        }
        let normal = &weighted_t * &eval;
        let chol = normal.cholesky().ok_or_else(|| {
            CoreError::Numeric("basis Gram matrix is not positive definite".into())
        })?;
        let projector = chol.solve(&weighted_t);
        Ok(Self {
            interval,
            q,
            grid,
            eval,
            weights,
            projector,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eval_matrix(&self) -> &DMatrix<f64> {
        &self.eval
    }

    /// Quadrature Gram matrix `sum_j w_j phi_n(u_j) phi_n'(u_j)`.
    pub fn discrete_gram(&self) -> DMatrix<f64> {
        let mut weighted = self.eval.clone();
        for (j, w) in self.weights.iter().enumerate() {
            weighted.row_mut(j).scale_mut(*w);
        }
        self.eval.transpose() * weighted
    }

    /// Largest entrywise deviation of the discrete Gram from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.discrete_gram();
        let mut worst: f64 = 0.0;
        for i in 0..self.q {
            for j in 0..self.q {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Weighted least-squares projection of grid samples onto the basis.
    pub fn project(&self, samples: &[f64]) -> Result<Curve> {
        if samples.len() != self.m() {
            bail!(
                Dimension,
                "expected {} samples, got {}",
                self.m(),
                samples.len()
            );
        }
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            bail!(Data, "non-finite sample at grid index {j}");
        }
        let f = DVector::from_column_slice(samples);
        let coeffs = &self.projector * f;
        Ok(Curve::new(coeffs.as_slice().to_vec()))
    }

    /// Samples a curve on the grid.
    pub fn reconstruct(&self, curve: &Curve) -> Result<Vec<f64>> {
        self.check(curve)?;
        let c = DVector::from_column_slice(&curve.coeffs);
        Ok((&self.eval * c).as_slice().to_vec())
    }

    /// Grid-quadrature inner product of two sampled curves.
    pub fn quadrature_inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        if f.len() != self.m() || g.len() != self.m() {
            bail!(Dimension, "samples must have length {}", self.m());
        }
        Ok(self
            .weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    fn check(&self, curve: &Curve) -> Result<()> {
        if curve.coeffs.len() != self.q {
            bail!(
                Dimension,
                "curve has {} coefficients, context has q = {}",
                curve.coeffs.len(),
                self.q
            );
        }
        Ok(())
    }
}

/// Coordinates of one element of `L^2(I)` in a [`BasisContext`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub coeffs: Vec<f64>,
}

impl Curve {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(q: usize) -> Self {
        Self::new(alloc::vec![0.0; q])
    }

    /// Unit vector `e_n` (zero-based).
    pub fn basis_element(q: usize, n: usize) -> Self {
        let mut c = Self::zeros(q);
        c.coeffs[n] = 1.0;
        c
    }

    pub fn q(&self) -> usize {
        self.coeffs.len()
    }
}

pub fn project_curve(samples: &[f64], ctx: &BasisContext) -> Result<Curve> {
    ctx.project(samples)
}

/// `<f, g>` by Parseval in orthonormal coordinates.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    if f.q() != g.q() {
        return Err(CoreError::Dimension(format!(
            "curves live in different contexts (q = {} vs {})",
            f.q(),
            g.q()
        )));
    }
    Ok(f.coeffs.iter().zip(&g.coeffs).map(|(a, b)| a * b).sum())
}

/// A `p x T` panel of curves stored as a `(p q) x T` coefficient matrix.
///
/// Row `i * q + n` holds coefficient `n` of series `i` over time.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalPanel {
    p: usize,
    t_len: usize,
    q: usize,
    data: DMatrix<f64>,
}

impl FunctionalPanel {
    pub fn zeros(p: usize, t_len: usize, q: usize) -> Self {
        Self {
            p,
            t_len,
            q,
            data: DMatrix::zeros(p * q, t_len),
        }
    }

    pub fn from_matrix(p: usize, q: usize, data: DMatrix<f64>) -> Result<Self> {
        if p == 0 || q == 0 || data.ncols() == 0 {
            bail!(Sizing, "panel dimensions must be positive");
        }
        if data.nrows() != p * q {
            bail!(
                Dimension,
                "expected {} rows for p = {p}, q = {q}, got {}",
                p * q,
                data.nrows()
            );
        }
        if data.iter().any(|v| !v.is_finite()) {
            bail!(Data, "panel contains non-finite coefficients");
        }
        Ok(Self {
            p,
            t_len: data.ncols(),
            q,
            data,
        })
    }

    /// Builds a panel from a flat tensor in `(series, time, coefficient)` order.
    pub fn from_tensor(p: usize, t_len: usize, q: usize, values: &[f64]) -> Result<Self> {
        if values.len() != p * t_len * q {
            bail!(
                Dimension,
                "tensor has {} entries, expected {}",
                values.len(),
                p * t_len * q
            );
        }
        let data = DMatrix::from_fn(p * q, t_len, |row, t| {
            let (i, n) = (row / q, row % q);
            values[(i * t_len + t) * q + n]
        });
        Self::from_matrix(p, q, data)
    }

    /// Flat tensor in `(series, time, coefficient)` order.
    pub fn to_tensor(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.p * self.t_len * self.q);
        for i in 0..self.p {
            for t in 0..self.t_len {
                for n in 0..self.q {
                    out.push(self.coeff(i, t, n));
                }
            }
        }
        out
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn coeff(&self, i: usize, t: usize, n: usize) -> f64 {
        self.data[(i * self.q + n, t)]
    }

    pub fn set_coeff(&mut self, i: usize, t: usize, n: usize, value: f64) {
        self.data[(i * self.q + n, t)] = value;
    }

    pub fn curve(&self, i: usize, t: usize) -> Curve {
        Curve::new((0..self.q).map(|n| self.coeff(i, t, n)).collect())
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: &self.data * factor,
            ..self.clone()
        }
    }
}
