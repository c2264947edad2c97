//! Simulation and spectral diagnostics for high-dimensional integrated
//! functional time series.
//!
//! Curves live in a Fourier basis on `[0, 1]`; a panel of `p` curve-valued
//! series over `T` periods is stored as coefficient vectors. The crate draws
//! panels from a functional factor model with random-walk factors, computes
//! the `T x T` Gram matrix, and compares its eigenstructure with the
//! spurious cosine limits that integrated data produce regardless of the
//! true factor number.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod basis;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod operator;
pub mod rank;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use basis::{build_fourier_basis, BasisContext, Curve, FunctionalPanel};
pub use dgp::{
    simulate_panel, CovarianceSetting, LoadingScheme, LoadingSpec, ModelConfig, NoiseSetting,
    SimulatedPanel,
};
pub use diagnostics::{build_report, SpectralReport};
pub use error::{CoreError, Result};
pub use operator::{CovarianceSpec, KernelOperator, OperatorMatrix};
pub use spectral::{eigendecompose, gram_matrix, Eigen, GramMatrix};
