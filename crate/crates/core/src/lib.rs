//! Inverse maps for nonlinear dimensionality reduction.
//!
//! Given samples `x⁽ⁱ⁾ ∈ R^D` and their low-dimensional coordinates
//! `y⁽ⁱ⁾ ∈ R^d` (for example from Laplacian eigenmaps), this crate builds an
//! approximate inverse `y ↦ x` by interpolating every ambient coordinate with
//! radial basis functions. The scale-free cubic kernel `r³` with a linear
//! polynomial tail is the default; Gaussian RBFs and Shepard's method are
//! available as baselines.
//!
//! Modules:
//!
//! * [`dataset`]: synthetic sphere samples, random isometric lifts, node
//!   spacing statistics and point-cloud files.
//! * [`kernels`]: kernel families, kernel matrices, sparsification, degrees
//!   and condition numbers.
//! * [`embedding`]: Laplacian eigenmaps on the symmetric normalized kernel.
//! * [`preimage`]: RBF fitting/evaluation (global and neighbourhood-local)
//!   and the Shepard baseline.
//! * [`nystrom`]: Nyström extension of normalized-kernel eigenvectors, its
//!   rescaled-RBF form, and discontinuity scans under sparsification.
//! * [`evaluation`]: leave-one-out harness and the experiment sweeps.
//!
//! All numerical code is generic over a [`Real`] scalar (`f64` or `f32`);
//! the `*F64` aliases below are what most callers want.
//!
//! ```
//! use rbf_preimage::{fit_rbf, KernelSpec, PointCloud, Tail};
//!
//! // x = 2y + 1 on four nodes of the line.
//! let nodes = PointCloud::<f64>::from_rows(&[vec![0.0], vec![0.5], vec![1.5], vec![3.0]]).unwrap();
//! let values = PointCloud::from_rows(&[vec![1.0], vec![2.0], vec![4.0], vec![7.0]]).unwrap();
//! let model = fit_rbf(&nodes, &values, KernelSpec::cubic(), Tail::Linear).unwrap();
//! let x = model.eval(&[2.0]).unwrap();
//! assert!((x[0] - 5.0).abs() < 1e-10);
//! ```

pub mod dataset;
pub mod embedding;
mod error;
pub mod evaluation;
pub mod io;
pub mod kernels;
mod linalg;
pub mod nystrom;
pub mod preimage;

pub use dataset::{
    fill_distance, local_fill_distance, random_unitary_embed, sample_sphere, PointCloud,
    SpacingStats,
};
pub use embedding::{embed_matrix_rank_check, laplacian_eigenmaps, unisolvency_rank, Embedding};
pub use error::{Error, Result};
pub use evaluation::{
    conditioning_sweep, convergence_sweep, loo_error, scale_table, LooMethod, LooReport,
    SweepResult,
};
pub use kernels::{
    condition_number, degree_vector, eval_kernel, kernel_matrix, sparsify, KernelFamily,
    KernelMatrix, KernelSpec, Sparsify,
};
pub use nystrom::{discontinuity_scan, nystrom_extend, nystrom_via_rbf, ExtensionResult};
pub use preimage::{
    fit_local_rbf, fit_rbf, shepard_eval, NeighborhoodPolicy, RbfModel, Tail,
};

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Scalar type the numerical code is generic over.
///
/// Anything nalgebra can factorize (`f32`, `f64`) qualifies. Conversions to
/// and from `f64` are used for I/O and for literal constants.
pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Unit roundoff of the type.
    fn machine_eps() -> Self {
        Self::default_epsilon()
    }

    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }
}

impl<T: RealField + Copy + ToPrimitive> Real for T {}

pub type PointCloudF64 = PointCloud<f64>;
pub type PointCloudF32 = PointCloud<f32>;
pub type KernelSpecF64 = KernelSpec<f64>;
pub type KernelSpecF32 = KernelSpec<f32>;
pub type KernelMatrixF64 = KernelMatrix<f64>;
pub type EmbeddingF64 = Embedding<f64>;
pub type EmbeddingF32 = Embedding<f32>;
pub type RbfModelF64 = RbfModel<f64>;
pub type RbfModelF32 = RbfModel<f32>;
pub type LooReportF64 = LooReport<f64>;
