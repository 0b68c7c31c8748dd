//! Reference solvers: SVD beamforming with water-filling over the
//! wavenumber-domain channel, a half-wavelength discrete array, or a dense
//! uniform sampling of both apertures.

use std::time::Instant;

use faer::{c64, Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_matrix, DiscreteArrayChannel, PhysicalConstants, WavenumberChannel};
use crate::geometry::{ApertureGeometry, Vec3};
use crate::linalg;
use crate::report::{Method, SolveReport};
use crate::{Error, Result};

const BISECTION_TOL: f64 = 1e-12;

/// Powers `P_k = max(0, μ − noise / g_k)` with `Σ P_k = power`.
pub fn water_fill(gains: &[f64], power: f64, noise: f64) -> Result<Vec<f64>> {
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::InvalidConstant { name: "power", value: power });
    }
    if !(noise.is_finite() && noise > 0.0) {
        return Err(Error::InvalidConstant { name: "noise_power", value: noise });
    }
    if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::Degenerate("gains must be finite and non-negative".into()));
    }
    if !gains.iter().any(|&g| g > 0.0) {
        return Err(Error::Degenerate("all channel gains are zero".into()));
    }
    let floor = |g: f64| if g > 0.0 { noise / g } else { f64::INFINITY };
    let total = |mu: f64| gains.iter().map(|&g| (mu - floor(g)).max(0.0)).sum::<f64>();

    let best_floor = gains.iter().map(|&g| floor(g)).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (best_floor, best_floor + power);
    while hi - lo > BISECTION_TOL * hi.abs().max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if total(mid) > power {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Re-solve μ in closed form on the active set so the budget is met exactly.
    let mu0 = 0.5 * (lo + hi);
    let mut active: Vec<usize> = (0..gains.len()).filter(|&k| floor(gains[k]) < mu0).collect();
    if active.is_empty() {
        active.push(
            (0..gains.len())
                .max_by(|&a, &b| gains[a].total_cmp(&gains[b]))
                .unwrap_or(0),
        );
    }
    loop {
        let mu = (power + active.iter().map(|&k| floor(gains[k])).sum::<f64>()) / active.len() as f64;
        let before = active.len();
        active.retain(|&k| mu - floor(gains[k]) > 0.0);
        if active.len() == before {
            let mut p = vec![0.0; gains.len()];
            for &k in &active {
                p[k] = mu - floor(gains[k]);
            }
            return Ok(p);
        }
    }
}

/// `Σ log₂(1 + g_k P_k / noise)`.
pub fn parallel_rate(gains: &[f64], powers: &[f64], noise: f64) -> f64 {
    gains.iter().zip(powers).map(|(g, p)| (1.0 + g * p / noise).log2()).sum()
}

#[derive(Debug, Clone)]
pub struct SvdBeamformingResult {
    pub method: Method,
    /// Orthonormal right singular vectors, one column per stream.
    pub beams: Mat<c64>,
    /// Singular values of the streams, descending.
    pub singular_values: Vec<f64>,
    /// Water-filled power per stream.
    pub powers: Vec<f64>,
    pub rate_bits: f64,
    pub wall_ms: f64,
}

impl SvdBeamformingResult {
    /// `beams · diag(√P)`.
    pub fn beamformer(&self) -> Mat<c64> {
        let amp: Vec<f64> = self.powers.iter().map(|p| p.sqrt()).collect();
        linalg::scale_cols(self.beams.as_ref(), &amp)
    }

    pub fn active_streams(&self) -> usize {
        self.powers.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn to_report(&self) -> SolveReport {
        let mut r = SolveReport::new(self.method, self.rate_bits, self.powers.len());
        r.wall_ms = self.wall_ms;
        r.effective_rank = self.active_streams();
        r.stream_powers = Some(self.powers.clone());
        r
    }
}

fn svd_beamforming(
    method: Method,
    h: MatRef<'_, c64>,
    streams: usize,
    constants: &PhysicalConstants,
    started: Instant,
) -> Result<SvdBeamformingResult> {
    constants.validate()?;
    let max = h.nrows().min(h.ncols());
    if streams == 0 || streams > max {
        return Err(Error::Dimension(format!(
            "stream count {streams} must lie in 1..={max}"
        )));
    }
    let svd = h
        .thin_svd()
        .map_err(|e| Error::LinearAlgebra(format!("SVD failed: {e:?}")))?;
    let sv = svd.S().column_vector();
    let singular_values: Vec<f64> = (0..streams).map(|k| sv[k].re).collect();
    let beams = svd.V().subcols(0, streams).to_owned();
    finish(method, beams, singular_values, constants, started)
}

fn finish(
    method: Method,
    beams: Mat<c64>,
    singular_values: Vec<f64>,
    constants: &PhysicalConstants,
    started: Instant,
) -> Result<SvdBeamformingResult> {
    let gains: Vec<f64> = singular_values.iter().map(|s| s * s).collect();
    let powers = water_fill(&gains, constants.power(), constants.noise_power)?;
    let rate_bits = parallel_rate(&gains, &powers, constants.noise_power);
    Ok(SvdBeamformingResult {
        method,
        beams,
        singular_values,
        powers,
        rate_bits,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// SVD beamforming over the truncated Fourier bases.
pub fn fourier_svd_solve(
    wchan: &WavenumberChannel,
    streams: usize,
    constants: &PhysicalConstants,
) -> Result<SvdBeamformingResult> {
    svd_beamforming(Method::FourierSvd, wchan.hw.as_ref(), streams, constants, Instant::now())
}

/// SVD beamforming over a discrete array.
pub fn spda_svd_solve(
    dchan: &DiscreteArrayChannel,
    streams: usize,
    constants: &PhysicalConstants,
) -> Result<SvdBeamformingResult> {
    svd_beamforming(Method::Spda, dchan.h.as_ref(), streams, constants, Instant::now())
}

/// SVD beamforming for arbitrary point layouts with per-point cell areas:
/// the channel matrix is `√(a_R a_T) · h(r_i, s_j)`.
pub fn layout_svd_solve(
    rx_points: &[Vec3],
    tx_points: &[Vec3],
    rx_geometry: &ApertureGeometry,
    tx_geometry: &ApertureGeometry,
    rx_cell: f64,
    tx_cell: f64,
    streams: usize,
    constants: &PhysicalConstants,
) -> Result<SvdBeamformingResult> {
    let started = Instant::now();
    let b = channel_matrix(
        rx_points,
        tx_points,
        &rx_geometry.global_polarization(),
        &tx_geometry.global_polarization(),
        constants,
        (rx_cell * tx_cell).sqrt(),
    )?;
    svd_beamforming(Method::DenseOptimal, b.as_ref(), streams, constants, started)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseOptions {
    /// Uniform samples per axis; defaults to `max(60, ceil(4 L / λ))`.
    pub samples_per_axis: Option<usize>,
    /// Cap on the number of streams; unlimited when `None`.
    pub streams: Option<usize>,
    /// Largest number of samples allowed on one aperture.
    pub sample_budget: usize,
    /// Also solve at twice the density and fail if the rate moves by more
    /// than `verify_tolerance`.
    pub verify: bool,
    pub verify_tolerance: f64,
    pub seed: u64,
}

impl Default for DenseOptions {
    fn default() -> Self {
        Self {
            samples_per_axis: None,
            streams: None,
            sample_budget: 4096,
            verify: false,
            verify_tolerance: 1e-3,
            seed: 0,
        }
    }
}

impl DenseOptions {
    pub fn default_samples(geometry: &ApertureGeometry, wavelength: f64) -> usize {
        let longest = geometry.lx.max(geometry.ly);
        60.max(crate::channel::robust_ceil(4.0 * longest / wavelength))
    }
}

fn midpoint_samples(geometry: &ApertureGeometry, per_axis: usize) -> (Vec<Vec3>, f64) {
    let hx = geometry.lx / per_axis as f64;
    let hy = geometry.ly / per_axis as f64;
    let mut pts = Vec::with_capacity(per_axis * per_axis);
    for n in 0..per_axis {
        let x = (n as f64 + 0.5) * hx - geometry.lx / 2.0;
        for m in 0..per_axis {
            let y = (m as f64 + 0.5) * hy - geometry.ly / 2.0;
            pts.push(geometry.to_global(x, y));
        }
    }
    (pts, hx * hy)
}

/// Near-optimal reference obtained by dense uniform sampling of both
/// apertures, a truncated SVD and water-filling over all useful modes.
pub fn dense_optimal_solve(
    tx: &ApertureGeometry,
    rx: &ApertureGeometry,
    constants: &PhysicalConstants,
    options: &DenseOptions,
) -> Result<SvdBeamformingResult> {
    constants.validate()?;
    tx.validate()?;
    rx.validate()?;
    let lambda = constants.wavelength();
    let per_axis = options
        .samples_per_axis
        .unwrap_or_else(|| DenseOptions::default_samples(tx, lambda).max(DenseOptions::default_samples(rx, lambda)));
    let result = dense_at(tx, rx, constants, options, per_axis)?;
    if options.verify {
        let finer = dense_at(tx, rx, constants, options, 2 * per_axis)?;
        let change = (finer.rate_bits - result.rate_bits).abs();
        if change >= options.verify_tolerance {
            return Err(Error::Degenerate(format!(
                "dense sampling not converged: {per_axis} → {} samples per axis moves the rate by {change:.3e}",
                2 * per_axis
            )));
        }
    }
    Ok(result)
}

fn dense_at(
    tx: &ApertureGeometry,
    rx: &ApertureGeometry,
    constants: &PhysicalConstants,
    options: &DenseOptions,
    per_axis: usize,
) -> Result<SvdBeamformingResult> {
    let requested = per_axis * per_axis;
    if per_axis == 0 || requested > options.sample_budget {
        return Err(Error::SampleBudget {
            requested,
            budget: options.sample_budget,
        });
    }
    let started = Instant::now();
    let (tx_pts, a_t) = midpoint_samples(tx, per_axis);
    let (rx_pts, a_r) = midpoint_samples(rx, per_axis);
    let b = channel_matrix(
        &rx_pts,
        &tx_pts,
        &rx.global_polarization(),
        &tx.global_polarization(),
        constants,
        (a_r * a_t).sqrt(),
    )?;
    let full = requested;
    let cap = options.streams.unwrap_or(full).min(full);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut rank = cap.min(32);
    loop {
        let t = linalg::randomized_svd(b.as_ref(), rank, 10, 3, &mut rng)?;
        let gains: Vec<f64> = t.s.iter().map(|s| s * s).collect();
        let powers = water_fill(&gains, constants.power(), constants.noise_power)?;
        let saturated = powers.last().is_some_and(|&p| p > 0.0);
        if !saturated || rank >= cap {
            return finish(Method::DenseOptimal, t.v, t.s, constants, started);
        }
        rank = (2 * rank).min(cap);
    }
}
