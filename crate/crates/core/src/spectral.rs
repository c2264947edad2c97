//! Sample Gram matrix of a functional panel and the matrices that describe
//! its behaviour under integrated factors.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_traits::Float;

use crate::basis::FunctionalPanel;
use crate::diagnostics::spurious_vector;
use crate::error::{bail, CoreError, Result};
use crate::operator::OperatorMatrix;

/// The `T x T` demeaned Gram matrix of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    s: DMatrix<f64>,
}

impl GramMatrix {
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if !s.is_square() {
            bail!(Dimension, "Gram matrix must be square, got {:?}", s.shape());
        }
        if s.iter().any(|v| !v.is_finite()) {
            bail!(Data, "Gram matrix has non-finite entries");
        }
        Ok(Self { s })
    }

    pub fn t_len(&self) -> usize {
        self.s.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.s
    }
}

fn demeaned(panel: &FunctionalPanel) -> DMatrix<f64> {
    let mut d = panel.data().clone();
    let t_len = d.ncols() as f64;
    for mut row in d.row_iter_mut() {
        let mean = row.sum() / t_len;
        row.add_scalar_mut(-mean);
    }
    d
}

/// `S_st = p^-1 sum_i <X_is - mean_i, X_it - mean_i>`.
///
/// Computed as `p^-1 D' D` where `D` is the row-demeaned `(p q) x T`
/// coefficient matrix, which equals `p^-1 M (sum_n C_n' C_n) M` over the
/// per-direction `p x T` slices `C_n`.
pub fn gram_matrix(panel: &FunctionalPanel) -> GramMatrix {
    let d = demeaned(panel);
    let mut s = d.tr_mul(&d) / panel.p() as f64;
    symmetrize(&mut s);
    GramMatrix { s }
}

/// The `(p q) x (p q)` sample covariance `p^-1 D D'` of the demeaned panel.
///
/// Shares its nonzero spectrum with [`gram_matrix`].
pub fn sample_covariance(panel: &FunctionalPanel) -> DMatrix<f64> {
    let d = demeaned(panel);
    let mut s = &d * d.transpose() / panel.p() as f64;
    symmetrize(&mut s);
    s
}

fn symmetrize(s: &mut DMatrix<f64>) {
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
}

/// `M = I - T^-1 1 1'`.
pub fn centering_matrix(t_len: usize) -> DMatrix<f64> {
    let inv = 1.0 / t_len as f64;
    DMatrix::from_fn(t_len, t_len, |s, t| if s == t { 1.0 - inv } else { -inv })
}

/// `Theta_st = 1{s <= t}`, so that `(eps Theta)_t = sum_{s <= t} eps_s`.
pub fn cumulation_matrix(t_len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t_len, t_len, |s, t| if s <= t { 1.0 } else { 0.0 })
}

/// Closed-form singular value decomposition of `M Theta'`.
#[derive(Debug, Clone, PartialEq)]
pub struct MThetaSvd {
    /// Descending; the last entry is zero.
    pub sigma: Vec<f64>,
    /// Column `t` is the left vector `w_t`.
    pub left: DMatrix<f64>,
    /// Column `t` is the right vector `v_t`.
    pub right: DMatrix<f64>,
}

impl MThetaSvd {
    pub fn t_len(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&self.sigma));
        &self.left * sigma * self.right.transpose()
    }
}

/// `sigma_t = (2 sin(t pi / 2T))^-1`, `w_tn = -sqrt(2/T) cos((n - 1/2) pi t / T)`,
/// `v_tn = sqrt(2/T) sin((n - 1) pi t / T)` for `t < T`; `sigma_T = 0`,
/// `w_T = T^-1/2 1` and `v_T = e_1`.
pub fn mtheta_svd(t_len: usize) -> Result<MThetaSvd> {
    if t_len < 2 {
        bail!(Sizing, "M Theta' decomposition needs T >= 2");
    }
    let tf = t_len as f64;
    let scale = Float::sqrt(2.0 / tf);
    let mut sigma = alloc::vec![0.0; t_len];
    let mut left = DMatrix::zeros(t_len, t_len);
    let mut right = DMatrix::zeros(t_len, t_len);
    for t in 1..t_len {
        let col = t - 1;
        sigma[col] = 1.0 / (2.0 * Float::sin(t as f64 * PI / (2.0 * tf)));
        for n in 1..=t_len {
            let nf = n as f64;
            left[(n - 1, col)] = -scale * Float::cos((nf - 0.5) * PI * t as f64 / tf);
            right[(n - 1, col)] = scale * Float::sin((nf - 1.0) * PI * t as f64 / tf);
        }
    }
    left.column_mut(t_len - 1).fill(1.0 / Float::sqrt(tf));
    right[(0, t_len - 1)] = 1.0;
    Ok(MThetaSvd { sigma, left, right })
}

/// `W_st = sum_kl <eps_ks, Om_kl eps_lt>` for innovations laid out as a
/// `(K q) x T` matrix with row `k q + n`.
pub fn w_matrix(innovations: &DMatrix<f64>, om: &OperatorMatrix) -> Result<DMatrix<f64>> {
    if om.rows() != om.cols() {
        bail!(
            Dimension,
            "Omega must be square, got {} x {}",
            om.rows(),
            om.cols()
        );
    }
    let kq = om.rows() * om.q();
    if innovations.nrows() != kq {
        bail!(
            Dimension,
            "innovations have {} rows, Omega acts on {kq}",
            innovations.nrows()
        );
    }
    let assembled = om.assemble();
    Ok(innovations.transpose() * assembled * innovations)
}

/// `p^-1 M Theta' W Theta M`.
pub fn cumulated_gram(w: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let t_len = w.nrows();
    let m = centering_matrix(t_len);
    let theta = cumulation_matrix(t_len);
    let left = &m * theta.transpose();
    &left * w * left.transpose() / p as f64
}

/// Leading part of a symmetric eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    /// All `T` eigenvalues, descending.
    pub values: Vec<f64>,
    /// `T x k_max`, unit columns matching the leading `values`.
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition with descending eigenvalues.
///
/// Eigenvector `k` (1-based) is signed so that its inner product with the
/// spurious limit `d_k` is nonnegative, or with `e_1` when `k >= T`.
pub fn eigendecompose(s: &GramMatrix, k_max: usize) -> Result<Eigen> {
    let t_len = s.t_len();
    if k_max > t_len {
        bail!(Parameter, "k_max = {k_max} exceeds T = {t_len}");
    }
    let eig = SymmetricEigen::try_new(s.s.clone(), f64::EPSILON, 0).ok_or_else(|| {
        CoreError::Numeric("symmetric eigendecomposition did not converge".into())
    })?;
    let mut order: Vec<usize> = (0..t_len).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let values: Vec<f64> = order.iter().map(|i| eig.eigenvalues[*i]).collect();
    crate::rank::check_spectrum(&values);
    let mut vectors = DMatrix::zeros(t_len, k_max);
    for (k, idx) in order.iter().take(k_max).enumerate() {
        let mut u = eig.eigenvectors.column(*idx).into_owned();
        let reference = if k + 1 < t_len {
            u.dot(&spurious_vector(k + 1, t_len)?)
        } else {
            u[0]
        };
        if reference < 0.0 {
            u.neg_mut();
        }
        vectors.set_column(k, &u);
    }
    Ok(Eigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate_panel, CovarianceSetting, LoadingScheme, ModelConfig, NoiseSetting};
    use crate::operator::build_omega;
    use alloc::vec;

    fn nonzero_sorted(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
        v.retain(|x| x.abs() > tol);
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    fn small_cfg(p: usize, t_len: usize, q: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            t_len,
            p,
            q,
            k: 2,
            covariance: CovarianceSetting::DelocalizedFlat,
            loadings: LoadingScheme::FullRank,
            noise: NoiseSetting::Geometric,
            seed,
        }
    }

    #[test]
    fn zero_panel_has_zero_gram() {
        let g = gram_matrix(&FunctionalPanel::zeros(3, 4, 2));
        assert!(g.matrix().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_point_scalar_series() {
        let c = 3.0;
        let panel = FunctionalPanel::from_tensor(1, 2, 1, &[0.0, c]).unwrap();
        let g = gram_matrix(&panel);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]) * (c * c / 4.0);
        assert!((g.matrix() - expected).amax() < 1e-15);
    }

    #[test]
    fn gram_matches_slice_formula() {
        let sim = simulate_panel(&small_cfg(4, 7, 3, 1)).unwrap();
        let panel = &sim.panel;
        let m = centering_matrix(7);
        let mut total = DMatrix::zeros(7, 7);
        for n in 0..3 {
            let c_n = DMatrix::from_fn(4, 7, |i, t| panel.coeff(i, t, n));
            total += c_n.transpose() * c_n;
        }
        let expected = &m * total * &m / 4.0;
        assert!((gram_matrix(panel).matrix() - expected).amax() < 1e-10);
    }

    #[test]
    fn gram_duality_small_instance() {
        let sim = simulate_panel(&small_cfg(3, 5, 2, 2)).unwrap();
        let g = gram_matrix(&sim.panel);
        let cov = sample_covariance(&sim.panel);
        let a = nonzero_sorted(g.matrix().symmetric_eigenvalues().as_slice().to_vec(), 1e-9);
        let b = nonzero_sorted(cov.symmetric_eigenvalues().as_slice().to_vec(), 1e-9);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn gram_invariants() {
        let sim = simulate_panel(&small_cfg(5, 12, 3, 3)).unwrap();
        let s = gram_matrix(&sim.panel);
        let ones = DVector::from_element(12, 1.0);
        assert!((s.matrix() * ones).amax() < 1e-8);
        let eig = s.matrix().symmetric_eigenvalues();
        let norm = s.matrix().norm();
        assert!(eig.min() >= -1e-8 * norm);
        let rank = eig.iter().filter(|v| **v > 1e-9 * norm).count();
        assert!(rank <= 11);
    }

    #[test]
    fn centering_cases() {
        assert_eq!(centering_matrix(1), DMatrix::from_element(1, 1, 0.0));
        assert_eq!(
            centering_matrix(2),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5])
        );
        let m = centering_matrix(200);
        assert!((&m * &m - &m).amax() < 1e-13);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn cumulation_cases() {
        assert_eq!(
            cumulation_matrix(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])
        );
        let theta = cumulation_matrix(6);
        let e1 = DVector::from_fn(6, |i, _| if i == 0 { 1.0 } else { 0.0 });
        assert_eq!(&theta * &e1, e1);
        let sums: Vec<f64> = theta.row_iter().map(|r| r.sum()).collect();
        assert_eq!(sums, vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn mtheta_closed_form() {
        let svd = mtheta_svd(200).unwrap();
        let expected = 1.0 / (2.0 * Float::sin(PI / 400.0));
        assert!((svd.sigma[0] - expected).abs() < 1e-12);
        assert!((svd.sigma[0] - 63.66263).abs() < 1e-5);

        for t_len in [2, 5, 8] {
            let svd = mtheta_svd(t_len).unwrap();
            assert_eq!(svd.sigma[t_len - 1], 0.0);
            let w_last = svd.left.column(t_len - 1);
            assert!(w_last.iter().all(|v| (*v - w_last[0]).abs() < 1e-15));
        }

        let svd = mtheta_svd(8).unwrap();
        let target = centering_matrix(8) * cumulation_matrix(8).transpose();
        assert!((svd.reconstruct() - target).norm() < 1e-10);
        assert!(mtheta_svd(1).is_err());
    }

    #[test]
    fn mtheta_sigma_structure() {
        let svd = mtheta_svd(60).unwrap();
        assert!(svd.sigma[..59].windows(2).all(|w| w[0] > w[1]));
        let big = mtheta_svd(2000).unwrap();
        assert!((big.sigma[0] / 2000.0 - 1.0 / PI).abs() < 1e-3);
    }

    #[test]
    fn w_matrix_with_identity_omega() {
        let sim = simulate_panel(&ModelConfig {
            k: 1,
            ..small_cfg(3, 6, 3, 4)
        })
        .unwrap();
        let om = OperatorMatrix::identity(1, 3);
        let w = w_matrix(&sim.innovations, &om).unwrap();
        let gram = sim.innovations.transpose() * &sim.innovations;
        assert!((w - gram).amax() < 1e-14);
        assert!(w_matrix(&sim.innovations, &OperatorMatrix::identity(2, 3)).is_err());
    }

    #[test]
    fn noiseless_gram_identity() {
        let cfg = ModelConfig {
            noise: NoiseSetting::Zero,
            ..small_cfg(6, 15, 4, 5)
        };
        let sim = simulate_panel(&cfg).unwrap();
        let om = build_omega(&sim.loadings);
        let w = w_matrix(&sim.innovations, &om).unwrap();
        let tilde = cumulated_gram(&w, cfg.p);
        let direct = gram_matrix(&sim.panel);
        let scale = direct.matrix().amax();
        assert!((tilde - direct.matrix()).amax() < 1e-8 * scale.max(1.0));
    }

    #[test]
    fn eigendecompose_diagonal_and_residual() {
        let d = GramMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 3.0, 2.0,
        ])))
        .unwrap();
        let e = eigendecompose(&d, 3).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert!(eigendecompose(&d, 4).is_err());

        let sim = simulate_panel(&small_cfg(5, 20, 3, 6)).unwrap();
        let s = gram_matrix(&sim.panel);
        let e = eigendecompose(&s, 20).unwrap();
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&e.values));
        let rebuilt = &e.vectors * lambda * e.vectors.transpose();
        assert!((rebuilt - s.matrix()).norm() / s.matrix().norm() < 1e-10);
        for k in 0..19 {
            let d = spurious_vector(k + 1, 20).unwrap();
            assert!(e.vectors.column(k).dot(&d) >= 0.0);
            assert!((e.vectors.column(k).norm() - 1.0).abs() < 1e-12);
        }
        let norm = s.matrix().norm();
        assert!(e.values.iter().all(|v| *v >= -1e-8 * norm));
    }
}
