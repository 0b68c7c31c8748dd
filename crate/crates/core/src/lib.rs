//! Beamforming for point-to-point continuous-aperture (CAPA) MIMO links.
//!
//! The crate is organised bottom-up:
//!
//! - [`quadrature`]: Gauss-Legendre rules and tensor-product integration.
//! - [`geometry`]: aperture poses and quadrature grids lifted onto them.
//! - [`channel`]: the polarized line-of-sight Green's-function channel and
//!   its sampled, wavenumber-domain and discrete-array forms.
//! - [`wmmse`]: the matrix-form WMMSE iteration, power scaling, continuous
//!   reconstruction and the correlated-power variant.
//! - [`baselines`]: water-filling plus Fourier-SVD, discrete-array SVD and
//!   dense-sampling reference solvers.
//! - [`analysis`]: rate, MSE, MMSE-SIC, stream correlation and DoF metrics.
//!
//! Every matrix that represents a function on an aperture uses the raster
//! ordering of [`geometry::QuadratureGrid`]: x-index outer, y-index inner.

pub mod analysis;
pub mod baselines;
pub mod channel;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod report;
pub mod wmmse;

pub use faer::c64;
pub use faer::Mat;

pub use analysis::{
    achievable_rate, dof_estimate, dof_far_field, dof_scattering, dof_uniform_sampling, metasurface_rate,
    mmse_receiver, mse_matrix, sic_rate_oracle, stream_correlation, CorrelationMap, DofOptions,
    DofWeighting, ReceiverMatrix, SicRates,
};
pub use baselines::{
    dense_optimal_solve, fourier_svd_solve, layout_svd_solve, spda_svd_solve, water_fill,
    DenseOptions, SvdBeamformingResult,
};
pub use channel::{
    apply_discrete_channel, build_sampled_channel, build_spda_channel, build_wavenumber_channel,
    green_scalar, sample_metasurface_channel, DiscreteArrayChannel, ElementArray, ModeOrders,
    PhysicalConstants, SampledChannel, WavenumberChannel,
};
pub use geometry::{build_grid, rotation_matrix, ApertureGeometry, QuadratureGrid, Vec3};
pub use quadrature::{gauss_legendre, integrate_1d, tensor_integrate_2d, GaussLegendreRule, Rect};
pub use report::{Method, SolveReport};
pub use wmmse::{
    delta_kernel, init_beamformer, reconstruct_continuous, solve, solve_correlated, wmmse_step,
    BeamformerMatrix, InitMode, Solution, SolverConfig, WmmseState,
};

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("quadrature order must be at least 1")]
    InvalidOrder,

    #[error("invalid integration interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },

    #[error("integrand is not finite at {location}")]
    NonFinite { location: String },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid physical constant `{name}` = {value}")]
    InvalidConstant { name: &'static str, value: f64 },

    #[error("source and observation points coincide (rx #{rx}, tx #{tx})")]
    Singular { rx: usize, tx: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("ill-conditioned iterate at t = {iteration}: {what} has condition number {condition:.3e}")]
    IllConditioned {
        iteration: usize,
        what: &'static str,
        condition: f64,
    },

    #[error("kernel is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("point {point:?} is not on the transmit aperture")]
    OffAperture { point: Vec3 },

    #[error("element spacing {spacing} m leaves no element on a {length} m edge")]
    EmptyArray { spacing: f64, length: f64 },

    #[error("dense sampling needs {requested} samples per aperture, budget is {budget}")]
    SampleBudget { requested: usize, budget: usize },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
