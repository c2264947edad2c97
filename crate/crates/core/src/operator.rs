//! Matrices of kernel operators acting on `H^K`.
//!
//! Every operator is stored through its `q x q` coefficient matrix in an
//! orthonormal basis, so composition is matrix multiplication and the
//! adjoint is the transpose.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dgp::LoadingSpec;
use crate::error::{bail, Result};

/// A single integral operator on `H`, acting on coefficients by `c -> G c`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOperator {
    mat: DMatrix<f64>,
}

impl KernelOperator {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if !mat.is_square() {
            bail!(
                Dimension,
                "kernel operator must be square, got {:?}",
                mat.shape()
            );
        }
        if mat.iter().any(|v| !v.is_finite()) {
            bail!(Data, "kernel operator has non-finite entries");
        }
        Ok(Self { mat })
    }

    pub fn identity(q: usize) -> Self {
        Self {
            mat: DMatrix::identity(q, q),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self {
            mat: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)),
        }
    }

    pub fn q(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.transpose(),
        }
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.q() != other.q() {
            bail!(
                Dimension,
                "cannot compose operators with q = {} and q = {}",
                self.q(),
                other.q()
            );
        }
        Ok(Self {
            mat: &self.mat * &other.mat,
        })
    }
}

/// A `rows x cols` matrix of kernel operators sharing one basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    rows: usize,
    cols: usize,
    q: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl OperatorMatrix {
    /// Blocks are given in row-major order.
    pub fn new(rows: usize, cols: usize, q: usize, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if blocks.len() != rows * cols {
            bail!(
                Dimension,
                "expected {} blocks, got {}",
                rows * cols,
                blocks.len()
            );
        }
        if let Some(b) = blocks.iter().find(|b| b.shape() != (q, q)) {
            bail!(
                Dimension,
                "block of shape {:?} in a q = {q} operator matrix",
                b.shape()
            );
        }
        if blocks.iter().flat_map(|b| b.iter()).any(|v| !v.is_finite()) {
            bail!(Data, "operator matrix has non-finite entries");
        }
        Ok(Self {
            rows,
            cols,
            q,
            blocks,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        q: usize,
        mut f: impl FnMut(usize, usize) -> DMatrix<f64>,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                blocks.push(f(i, j));
            }
        }
        Self::new(rows, cols, q, blocks)
    }

    /// Identity operator on `H^k`.
    pub fn identity(k: usize, q: usize) -> Self {
        let blocks = (0..k * k)
            .map(|idx| {
                if idx / k == idx % k {
                    DMatrix::identity(q, q)
                } else {
                    DMatrix::zeros(q, q)
                }
            })
            .collect();
        Self {
            rows: k,
            cols: k,
            q,
            blocks,
        }
    }

    /// Splits a `(rows q) x (cols q)` matrix into blocks.
    pub fn from_assembled(rows: usize, cols: usize, q: usize, mat: &DMatrix<f64>) -> Result<Self> {
        if mat.shape() != (rows * q, cols * q) {
            bail!(Dimension, "assembled matrix has shape {:?}", mat.shape());
        }
        Self::from_fn(rows, cols, q, |i, j| {
            mat.view((i * q, j * q), (q, q)).into_owned()
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.blocks[i * self.cols + j]
    }

    /// The `(rows q) x (cols q)` matrix with block `(i, j)` at offset `(i q, j q)`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let q = self.q;
        let mut out = DMatrix::zeros(self.rows * q, self.cols * q);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.view_mut((i * q, j * q), (q, q))
                    .copy_from(self.block(i, j));
            }
        }
        out
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| {
                    let (a, b) = (self.block(i, j), self.block(j, i));
                    (a - b.transpose()).amax() <= tol
                })
            })
    }

    fn all_blocks_diagonal(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| (0..self.q).all(|r| (0..self.q).all(|c| r == c || b[(r, c)] == 0.0)))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b * factor).collect(),
            ..self.clone()
        }
    }
}

/// Blockwise product `(C1 Om_ij C2)_ij`.
pub fn sandwich(
    c1: &KernelOperator,
    om: &OperatorMatrix,
    c2: &KernelOperator,
) -> Result<OperatorMatrix> {
    if c1.q() != om.q || c2.q() != om.q {
        bail!(
            Dimension,
            "sandwich operands have q = {}, {}, {}",
            c1.q(),
            om.q,
            c2.q()
        );
    }
    let blocks = om.blocks.iter().map(|b| &c1.mat * b * &c2.mat).collect();
    Ok(OperatorMatrix {
        blocks,
        ..om.clone()
    })
}

/// Block `(i, j)` of the result is the transpose of block `(j, i)`.
pub fn adjoint(om: &OperatorMatrix) -> OperatorMatrix {
    let mut blocks = Vec::with_capacity(om.blocks.len());
    for i in 0..om.cols {
        for j in 0..om.rows {
            blocks.push(om.block(j, i).transpose());
        }
    }
    OperatorMatrix {
        rows: om.cols,
        cols: om.rows,
        q: om.q,
        blocks,
    }
}

/// Trace on `H^K`, the sum of the traces of the diagonal blocks.
pub fn trace(om: &OperatorMatrix) -> Result<f64> {
    if om.rows != om.cols {
        bail!(
            Dimension,
            "trace of a non-square {} x {} operator matrix",
            om.rows,
            om.cols
        );
    }
    Ok((0..om.rows).map(|i| om.block(i, i).trace()).sum())
}

/// Hilbert-Schmidt norm, `sqrt(sum_ij |Om_ij|_F^2)`.
pub fn hs_norm(om: &OperatorMatrix) -> f64 {
    Float::sqrt(om.blocks.iter().map(|b| b.norm_squared()).sum::<f64>())
}

/// Operator norm: the largest singular value of the assembled matrix.
///
/// When every block is diagonal the assembled matrix is a permutation of
/// `q` independent `rows x cols` matrices, one per basis direction, and the
/// norm is the largest of theirs.
pub fn op_norm(om: &OperatorMatrix) -> f64 {
    if om.all_blocks_diagonal() {
        (0..om.q)
            .map(|n| {
                let slice = DMatrix::from_fn(om.rows, om.cols, |i, j| om.block(i, j)[(n, n)]);
                largest_singular_value(slice)
            })
            .fold(0.0, f64::max)
    } else {
        largest_singular_value(om.assemble())
    }
}

fn largest_singular_value(mat: DMatrix<f64>) -> f64 {
    if mat.is_empty() {
        return 0.0;
    }
    mat.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Eigenvalues of a covariance operator that is diagonal in the basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub c: Vec<f64>,
}

impl CovarianceSpec {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            bail!(Sizing, "covariance needs at least one eigenvalue");
        }
        if let Some(v) = c.iter().find(|v| !v.is_finite() || **v < 0.0) {
            bail!(
                Parameter,
                "covariance eigenvalue {v} is negative or non-finite"
            );
        }
        Ok(Self { c })
    }

    pub fn q(&self) -> usize {
        self.c.len()
    }

    /// `|C|_2`, the Hilbert-Schmidt norm.
    pub fn hs_norm(&self) -> f64 {
        Float::sqrt(self.c.iter().map(|v| v * v).sum::<f64>())
    }

    pub fn trace(&self) -> f64 {
        self.c.iter().sum()
    }

    pub fn rank(&self) -> usize {
        self.c.iter().filter(|v| **v > 0.0).count()
    }

    pub fn operator(&self) -> KernelOperator {
        KernelOperator::diagonal(&self.c)
    }
}

pub fn sqrt_covariance(spec: &CovarianceSpec) -> Result<KernelOperator> {
    if let Some(v) = spec.c.iter().find(|v| **v < 0.0) {
        bail!(Parameter, "negative covariance eigenvalue {v}");
    }
    let roots: Vec<f64> = spec.c.iter().map(|v| Float::sqrt(*v)).collect();
    Ok(KernelOperator::diagonal(&roots))
}

/// `Om_kl = sum_n (A_n' A_n)_kl phi_n (x) phi_n`, the loading operator Gram.
pub fn build_omega(loadings: &LoadingSpec) -> OperatorMatrix {
    let k = loadings.k();
    let q = loadings.q();
    let grams: Vec<DMatrix<f64>> = loadings
        .matrices()
        .iter()
        .map(|a| a.transpose() * a)
        .collect();
    let mut blocks = Vec::with_capacity(k * k);
    for r in 0..k {
        for c in 0..k {
            let mut block = DMatrix::zeros(q, q);
            for (n, g) in grams.iter().enumerate() {
                block[(n, n)] = g[(r, c)];
            }
            blocks.push(block);
        }
    }
    OperatorMatrix {
        rows: k,
        cols: k,
        q,
        blocks,
    }
}
