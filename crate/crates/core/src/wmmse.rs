//! Matrix-form WMMSE iteration for continuous-aperture beamforming.
//!
//! The beamformer is represented by its samples at the transmit quadrature
//! nodes. Each step turns the current samples into a new set via the
//! closed-form receiver, weight and transmit updates. Because every update
//! is a linear map of `Hᴴ`, the same coefficients also evaluate the
//! beamformer anywhere on the transmit aperture.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::SampledChannel;
use crate::geometry::Vec3;
use crate::linalg;
use crate::report::{Method, SolveReport};
use crate::{Error, Result};

/// Iterates are rejected once `Θ` or `Ω` is this badly conditioned.
const MAX_CONDITION: f64 = 1e14;
/// Relative eigenvalue floor below which a stream counts as inactive.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitMode {
    /// I.i.d. complex Gaussian samples from a seeded generator.
    Random { seed: u64 },
    /// Dominant right singular vectors of `Φ_R^{1/2} H Φ_T`.
    MatchedFilter,
}

impl Default for InitMode {
    fn default() -> Self {
        InitMode::Random { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Stop once the relative rate increase falls below this.
    pub threshold: f64,
    pub init: InitMode,
    pub streams: usize,
    /// Run exactly `max_iter` steps regardless of the threshold.
    #[serde(default)]
    pub fixed_iterations: bool,
}

impl SolverConfig {
    pub fn new(streams: usize) -> Self {
        Self {
            max_iter: 100,
            threshold: 1e-6,
            init: InitMode::default(),
            streams,
            fixed_iterations: false,
        }
    }

    pub fn with_init(mut self, init: InitMode) -> Self {
        self.init = init;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Degenerate("max_iter must be at least 1".into()));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::Degenerate(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.streams == 0 {
            return Err(Error::Dimension("stream count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Beamformer samples at the transmit nodes, one column per stream.
#[derive(Debug, Clone)]
pub struct BeamformerMatrix {
    pub w: Mat<c64>,
    /// Coefficients `C` with `w(s) = h̃(s) · C`, where `h̃(s)_i` is the
    /// conjugated channel from `s` to receive node `i`.
    pub reconstruction: Option<Mat<c64>>,
}

impl BeamformerMatrix {
    pub fn new(w: Mat<c64>) -> Self {
        Self {
            w,
            reconstruction: None,
        }
    }

    pub fn streams(&self) -> usize {
        self.w.ncols()
    }

    /// `Tr(Wᴴ Φ W)` for node weights `Φ`.
    pub fn power(&self, weights: &[f64]) -> f64 {
        linalg::weighted_power(self.w.as_ref(), weights)
    }

    fn scale(&mut self, factor: f64) {
        self.w = &self.w * linalg::cscale(factor);
        if let Some(c) = &self.reconstruction {
            self.reconstruction = Some(c * linalg::cscale(factor));
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub beamformer: BeamformerMatrix,
    pub report: SolveReport,
}

/// Iterate state after `iteration` steps.
#[derive(Debug, Clone)]
pub struct WmmseState {
    pub w: Mat<c64>,
    /// Effective noise `(σ² / P) · Tr(Wᴴ Φ_T W)` of the previous iterate.
    pub effective_noise: f64,
    pub gram: Mat<c64>,
    pub theta: Mat<c64>,
    pub weight: Mat<c64>,
    pub omega: Mat<c64>,
    /// Reconstruction coefficients of `w`.
    pub coefficients: Option<Mat<c64>>,
    pub rate_trace: Vec<f64>,
    pub iteration: usize,
}

impl WmmseState {
    pub fn new(w: Mat<c64>) -> Self {
        let n = w.ncols();
        Self {
            w,
            effective_noise: f64::NAN,
            gram: Mat::zeros(n, n),
            theta: Mat::zeros(n, n),
            weight: Mat::zeros(n, n),
            omega: Mat::zeros(n, n),
            coefficients: None,
            rate_trace: Vec::new(),
            iteration: 0,
        }
    }
}

/// Quantities that stay fixed across iterations.
struct Operator<'a> {
    chan: &'a SampledChannel,
    /// `Hᴴ Φ_R H`.
    coupling: Mat<c64>,
    power: f64,
    noise: f64,
    kernel: Option<KernelInverse>,
}

impl<'a> Operator<'a> {
    fn new(chan: &'a SampledChannel) -> Result<Self> {
        chan.constants.validate()?;
        Ok(Self {
            chan,
            coupling: chan.tx_gram(),
            power: chan.constants.power(),
            noise: chan.constants.noise_power,
            kernel: None,
        })
    }

    fn tx_weights(&self) -> &[f64] {
        &self.chan.tx.weights
    }

    /// Transmit power of `w` under the active constraint.
    fn power_of(&self, w: MatRef<'_, c64>) -> f64 {
        match &self.kernel {
            None => linalg::weighted_power(w, self.tx_weights()),
            Some(k) => k.quadratic_power(w),
        }
    }
}

/// Correlated-power kernel at the transmit nodes.
struct KernelInverse {
    /// `Φ_T C Φ_T`.
    weighted: Mat<c64>,
    llt: faer::linalg::solvers::Llt<c64>,
    tx_weights: Vec<f64>,
}

impl KernelInverse {
    fn new(kernel: MatRef<'_, c64>, tx_weights: &[f64]) -> Result<Self> {
        let ms = tx_weights.len();
        if kernel.nrows() != ms || kernel.ncols() != ms {
            return Err(Error::Dimension(format!(
                "kernel is {}×{}, expected {ms}×{ms}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        let c = linalg::hermitian_part(kernel);
        let eig = linalg::hermitian_eigenvalues(c.as_ref())?;
        let tr = linalg::trace(c.as_ref()).re;
        let shift = 1e-12 * tr.abs() / ms as f64;
        let min = eig.first().copied().unwrap_or(0.0);
        if !(min > -shift) || !(tr > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let c = if min <= shift { linalg::add_diag(c.as_ref(), shift) } else { c };
        let llt = c
            .llt(Side::Lower)
            .map_err(|_| Error::NotPositiveDefinite { min_eigenvalue: min })?;
        let weighted = linalg::scale_cols(
            linalg::scale_rows(c.as_ref(), tx_weights).as_ref(),
            tx_weights,
        );
        Ok(Self {
            weighted,
            llt,
            tx_weights: tx_weights.to_vec(),
        })
    }

    fn quadratic_power(&self, w: MatRef<'_, c64>) -> f64 {
        linalg::trace((w.adjoint() * (&self.weighted * w)).as_ref()).re
    }

    /// `C⁻¹ · x`.
    fn apply_inverse(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        self.llt.solve(x)
    }
}

fn check_streams(chan: &SampledChannel, streams: usize) -> Result<()> {
    let ms = chan.tx_len();
    if streams == 0 || streams > ms {
        return Err(Error::Dimension(format!(
            "stream count {streams} must lie in 1..={ms} (transmit nodes)"
        )));
    }
    Ok(())
}

/// Initial beamformer scaled to the transmit power budget.
pub fn init_beamformer(chan: &SampledChannel, streams: usize, mode: InitMode) -> Result<BeamformerMatrix> {
    check_streams(chan, streams)?;
    let op = Operator::new(chan)?;
    let w = raw_init(chan, streams, mode)?;
    let mut bf = BeamformerMatrix::new(w);
    let p = op.power_of(bf.w.as_ref());
    bf.scale((op.power / p).sqrt());
    Ok(bf)
}

fn raw_init(chan: &SampledChannel, streams: usize, mode: InitMode) -> Result<Mat<c64>> {
    match mode {
        InitMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(linalg::complex_gaussian(chan.tx_len(), streams, &mut rng))
        }
        InitMode::MatchedFilter => {
            let sqrt_r: Vec<f64> = chan.rx.weights.iter().map(|w| w.sqrt()).collect();
            let b = linalg::scale_cols(
                linalg::scale_rows(chan.h.as_ref(), &sqrt_r).as_ref(),
                &chan.tx.weights,
            );
            let svd = b
                .thin_svd()
                .map_err(|e| Error::LinearAlgebra(format!("SVD failed: {e:?}")))?;
            Ok(svd.V().subcols(0, streams).to_owned())
        }
    }
}

/// One WMMSE update of `state` on `chan`.
pub fn wmmse_step(state: &WmmseState, chan: &SampledChannel) -> Result<WmmseState> {
    let op = Operator::new(chan)?;
    step(state, &op)
}

fn step(state: &WmmseState, op: &Operator<'_>) -> Result<WmmseState> {
    let w = state.w.as_ref();
    let phi = op.tx_weights();
    let t = state.iteration;
    if w.nrows() != phi.len() {
        return Err(Error::Dimension(format!(
            "beamformer has {} rows, transmit grid has {} nodes",
            w.nrows(),
            phi.len()
        )));
    }
    if !linalg::is_finite(w) {
        return Err(Error::NonFinite {
            location: format!("beamformer at iteration {t}"),
        });
    }

    let power = op.power_of(w);
    if !(power > 0.0) {
        return Err(Error::Degenerate("beamformer has zero transmit power".into()));
    }
    let noise_eff = op.noise / op.power * power;

    let phi_w = linalg::scale_rows(w, phi);
    // A = Hᴴ Φ_R H Φ_T W
    let a = &op.coupling * &phi_w;
    let gram = linalg::hermitian_part((phi_w.adjoint() * &a).as_ref());
    let theta = linalg::add_diag(gram.as_ref(), noise_eff);
    let weight = linalg::add_diag((&gram * linalg::cscale(1.0 / noise_eff)).as_ref(), 1.0);
    let weight = linalg::hermitian_part(weight.as_ref());

    let cond = linalg::condition_number(theta.as_ref())?;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            iteration: t,
            what: "theta",
            condition: cond,
        });
    }
    let rate = linalg::log2_det_hpd(weight.as_ref())?;

    // g = A Θ⁻¹
    let g = linalg::solve_right(a.as_ref(), theta.as_ref());
    let theta_inv_q = linalg::solve_left(theta.as_ref(), gram.as_ref());
    // V = Θ⁻¹ Q Θ⁻¹
    let v = linalg::solve_right(theta_inv_q.as_ref(), theta.as_ref());
    let uv = linalg::trace((&weight * &v).as_ref()).re;
    let eps_inv = op.noise * uv / op.power;

    let (g_tilde, big_g) = match &op.kernel {
        None => {
            let big_g = g.adjoint() * linalg::scale_rows(g.as_ref(), phi);
            (None, big_g)
        }
        Some(k) => {
            let cinv_g = k.apply_inverse(g.as_ref());
            let big_g = g.adjoint() * &cinv_g;
            let inv_phi: Vec<f64> = k.tx_weights.iter().map(|x| 1.0 / x).collect();
            (Some(linalg::scale_rows(cinv_g.as_ref(), &inv_phi)), big_g)
        }
    };
    let big_g = linalg::hermitian_part(big_g.as_ref());
    let omega = linalg::add_diag((&big_g * &weight).as_ref(), eps_inv);
    let cond = linalg::condition_number(omega.as_ref())?;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            iteration: t,
            what: "omega",
            condition: cond,
        });
    }

    // X = Θ⁻¹ U Ω⁻¹, so that W_new = A X in the uncorrelated case.
    let u_omega_inv = linalg::solve_right(weight.as_ref(), omega.as_ref());
    let x = linalg::solve_left(theta.as_ref(), u_omega_inv.as_ref());
    let (w_new, coefficients) = match g_tilde {
        None => {
            let w_new = &a * &x;
            // Φ_R H Φ_T W X
            let c = linalg::scale_rows((&op.chan.h * (&phi_w * &x)).as_ref(), &op.chan.rx.weights);
            (w_new, Some(c))
        }
        Some(gt) => (gt * linalg::solve_right(weight.as_ref(), omega.as_ref()), None),
    };
    let mut rate_trace = state.rate_trace.clone();
    rate_trace.push(rate);
    Ok(WmmseState {
        w: w_new,
        effective_noise: noise_eff,
        gram,
        theta,
        weight,
        omega,
        coefficients,
        rate_trace,
        iteration: t + 1,
    })
}

fn effective_rank(gram: MatRef<'_, c64>) -> Result<usize> {
    let eig = linalg::hermitian_eigenvalues(gram)?;
    let top = eig.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    Ok(eig.iter().filter(|&&x| x > RANK_TOL * top).count())
}

fn run(op: &Operator<'_>, cfg: &SolverConfig, method: Method) -> Result<Solution> {
    cfg.validate()?;
    check_streams(op.chan, cfg.streams)?;
    let started = Instant::now();
    let mut w0 = raw_init(op.chan, cfg.streams, cfg.init)?;
    let p0 = op.power_of(w0.as_ref());
    if !(p0 > 0.0) {
        return Err(Error::Degenerate("initial beamformer has zero power".into()));
    }
    w0 = &w0 * linalg::cscale((op.power / p0).sqrt());

    let mut state = WmmseState::new(w0);
    let mut converged = false;
    while state.iteration < cfg.max_iter {
        state = step(&state, op)?;
        let trace = &state.rate_trace;
        if !cfg.fixed_iterations && trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            let cur = trace[trace.len() - 1];
            if (cur - prev) <= cfg.threshold * prev.abs() {
                converged = true;
                break;
            }
        }
    }

    let mut beamformer = BeamformerMatrix {
        w: state.w,
        reconstruction: state.coefficients,
    };
    let p = op.power_of(beamformer.w.as_ref());
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Degenerate("final beamformer has no usable power".into()));
    }
    beamformer.scale((op.power / p).sqrt());

    let phi_w = linalg::scale_rows(beamformer.w.as_ref(), op.tx_weights());
    let gram = linalg::hermitian_part((phi_w.adjoint() * (&op.coupling * &phi_w)).as_ref());
    let rate = linalg::log2_det_hpd(linalg::add_diag((&gram * linalg::cscale(1.0 / op.noise)).as_ref(), 1.0).as_ref())?;

    let mut report = SolveReport::new(method, rate, cfg.streams);
    report.iterations = state.iteration;
    report.rate_trace = state.rate_trace;
    report.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    report.effective_rank = effective_rank(gram.as_ref())?;
    report.max_iter_reached = !converged && !cfg.fixed_iterations;
    report.config = serde_json::to_value(cfg).unwrap_or_default();
    Ok(Solution { beamformer, report })
}

/// Runs WMMSE to convergence and scales the result onto the power budget.
pub fn solve(chan: &SampledChannel, cfg: &SolverConfig) -> Result<Solution> {
    let op = Operator::new(chan)?;
    run(&op, cfg, Method::Wmmse)
}

/// WMMSE under the correlated constraint `Tr(Wᴴ Φ_T C Φ_T W) ≤ P`, where
/// `kernel` holds `C` at the transmit nodes.
pub fn solve_correlated(chan: &SampledChannel, cfg: &SolverConfig, kernel: MatRef<'_, c64>) -> Result<Solution> {
    let mut op = Operator::new(chan)?;
    op.kernel = Some(KernelInverse::new(kernel, &chan.tx.weights)?);
    run(&op, cfg, Method::WmmseCorrelated)
}

/// The discrete delta kernel `Φ_T⁻¹`, under which the correlated constraint
/// is the ordinary power constraint.
pub fn delta_kernel(chan: &SampledChannel) -> Mat<c64> {
    let w = &chan.tx.weights;
    Mat::from_fn(w.len(), w.len(), |i, j| if i == j { linalg::real(1.0 / w[i]) } else { linalg::zero() })
}

/// Evaluates the continuous beamformer at a transmit point `s`.
pub fn reconstruct_continuous(beamformer: &BeamformerMatrix, chan: &SampledChannel, s: &Vec3) -> Result<Vec<c64>> {
    if !chan.tx.geometry.contains(s) {
        return Err(Error::OffAperture { point: *s });
    }
    let coeffs = beamformer.reconstruction.as_ref().ok_or_else(|| {
        Error::Degenerate("beamformer carries no reconstruction coefficients".into())
    })?;
    let row = chan.conjugate_row(s)?;
    Ok((0..coeffs.ncols())
        .map(|n| row.iter().enumerate().map(|(i, h)| h * coeffs[(i, n)]).sum())
        .collect())
}
