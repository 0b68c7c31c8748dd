//! Rate, MSE, MMSE-SIC, stream-correlation and degrees-of-freedom metrics.

use std::fmt::Write as _;

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_discrete_channel, build_sampled_channel, channel_matrix, check_element_area, ElementArray,
    PhysicalConstants, SampledChannel,
};
use crate::geometry::{build_grid, ApertureGeometry, Vec3};
use crate::linalg;
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};

fn check_beamformer(w: MatRef<'_, c64>, chan: &SampledChannel) -> Result<()> {
    if w.nrows() != chan.tx_len() || w.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "beamformer is {}×{}, transmit grid has {} nodes",
            w.nrows(),
            w.ncols(),
            chan.tx_len()
        )));
    }
    Ok(())
}

/// Received field samples `H Φ_T W`, one column per stream.
fn received(w: MatRef<'_, c64>, chan: &SampledChannel) -> Mat<c64> {
    &chan.h * linalg::scale_rows(w, &chan.tx.weights)
}

/// `Aᴴ Φ_R B`.
fn rx_inner(a: MatRef<'_, c64>, b: MatRef<'_, c64>, chan: &SampledChannel) -> Mat<c64> {
    a.adjoint() * linalg::scale_rows(b, &chan.rx.weights)
}

/// Stream Gram matrix `Wᴴ Φ_T Hᴴ Φ_R H Φ_T W`.
pub fn stream_gram(w: MatRef<'_, c64>, chan: &SampledChannel) -> Mat<c64> {
    let f = received(w, chan);
    linalg::hermitian_part(rx_inner(f.as_ref(), f.as_ref(), chan).as_ref())
}

/// `log₂ det(I + Q / noise)` in bits/s/Hz.
pub fn achievable_rate(w: MatRef<'_, c64>, chan: &SampledChannel, noise: f64) -> Result<f64> {
    check_beamformer(w, chan)?;
    let q = stream_gram(w, chan);
    linalg::log2_det_hpd(linalg::add_diag((&q * linalg::cscale(1.0 / noise)).as_ref(), 1.0).as_ref())
}

/// Receiver samples at the receive nodes, one column per stream.
#[derive(Debug, Clone)]
pub struct ReceiverMatrix {
    pub v: Mat<c64>,
}

/// Linear MMSE receiver `H Φ_T W (noise·I + Q)⁻¹`.
pub fn mmse_receiver(w: MatRef<'_, c64>, chan: &SampledChannel, noise: f64) -> Result<ReceiverMatrix> {
    check_beamformer(w, chan)?;
    let f = received(w, chan);
    let q = linalg::hermitian_part(rx_inner(f.as_ref(), f.as_ref(), chan).as_ref());
    let theta = linalg::add_diag(q.as_ref(), noise);
    let cond = linalg::condition_number(theta.as_ref())?;
    if !(cond <= 1e14) {
        return Err(Error::IllConditioned {
            iteration: 0,
            what: "theta",
            condition: cond,
        });
    }
    Ok(ReceiverMatrix {
        v: linalg::solve_right(f.as_ref(), theta.as_ref()),
    })
}

/// Error covariance `E[(ĉ − c)(ĉ − c)ᴴ]` for beamformer `w` and receiver `v`.
pub fn mse_matrix(w: MatRef<'_, c64>, v: MatRef<'_, c64>, chan: &SampledChannel, noise: f64) -> Result<Mat<c64>> {
    check_beamformer(w, chan)?;
    if v.nrows() != chan.rx_len() || v.ncols() != w.ncols() {
        return Err(Error::Dimension(format!(
            "receiver is {}×{}, expected {}×{}",
            v.nrows(),
            v.ncols(),
            chan.rx_len(),
            w.ncols()
        )));
    }
    let f = received(w, chan);
    let n = w.ncols();
    let bias = linalg::identity(n) - rx_inner(v, f.as_ref(), chan);
    let noise_term = rx_inner(v, v, chan);
    let e = &bias * bias.adjoint() + noise_term * linalg::cscale(noise);
    Ok(linalg::hermitian_part(e.as_ref()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SicRates {
    pub per_stream: Vec<f64>,
    pub total: f64,
}

/// Per-stream rates of successive MMSE decoding in column order.
///
/// Stream `n` sees streams `n+1..` as interference. Its receiver is formed
/// explicitly and the SINR evaluated from inner products, so the sum is an
/// independent check on the log-det rate.
pub fn sic_rate_oracle(w: MatRef<'_, c64>, chan: &SampledChannel, noise: f64) -> Result<SicRates> {
    check_beamformer(w, chan)?;
    let f = received(w, chan);
    let n_streams = w.ncols();
    let mut per_stream = Vec::with_capacity(n_streams);
    for n in 0..n_streams {
        let own = f.subcols(n, 1);
        let rest = f.subcols(n + 1, n_streams - n - 1);
        let v = if rest.ncols() == 0 {
            own.to_owned()
        } else {
            // v_n = f_n − E (noise·I + Q_n)⁻¹ q_n, the Woodbury form of
            // (noise·I + E Eᴴ Φ_R)⁻¹ f_n up to a scalar.
            let qn = linalg::hermitian_part(rx_inner(rest, rest, chan).as_ref());
            let q = rx_inner(rest, own, chan);
            let coeff = linalg::solve_left(linalg::add_diag(qn.as_ref(), noise).as_ref(), q.as_ref());
            own.to_owned() - rest * coeff
        };
        let vf = rx_inner(v.as_ref(), f.as_ref(), chan);
        let signal = vf[(0, n)].norm_sqr();
        let interference: f64 = (n + 1..n_streams).map(|j| vf[(0, j)].norm_sqr()).sum();
        let vv = rx_inner(v.as_ref(), v.as_ref(), chan)[(0, 0)].re;
        let denom = interference + noise * vv;
        let sinr = if signal == 0.0 { 0.0 } else { signal / denom };
        per_stream.push((1.0 + sinr).log2());
    }
    let total = per_stream.iter().sum();
    Ok(SicRates { per_stream, total })
}

/// `ξ[n][m] = |(Vᴴ Φ_R H Φ_T W)[n, m]|²` under the MMSE receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMap {
    pub xi: Vec<Vec<f64>>,
    /// `‖v_n‖²` under the receive quadrature.
    pub receiver_power: Vec<f64>,
    pub rate_bits: f64,
    pub noise: f64,
}

impl CorrelationMap {
    pub fn streams(&self) -> usize {
        self.xi.len()
    }

    /// Largest off-diagonal entry divided by the smallest diagonal entry
    /// among streams whose diagonal exceeds `active_floor` times the largest.
    pub fn leakage_ratio(&self, active_floor: f64) -> f64 {
        let diag: Vec<f64> = (0..self.streams()).map(|n| self.xi[n][n]).collect();
        let top = diag.iter().cloned().fold(0.0, f64::max);
        let active: Vec<usize> = (0..diag.len()).filter(|&n| diag[n] > active_floor * top).collect();
        let min_diag = active.iter().map(|&n| diag[n]).fold(f64::INFINITY, f64::min);
        let mut max_off: f64 = 0.0;
        for &n in &active {
            for &m in &active {
                if n != m {
                    max_off = max_off.max(self.xi[n][m]);
                }
            }
        }
        max_off / min_diag
    }

    /// Rate predicted by treating streams as parallel channels.
    pub fn parallel_rate(&self) -> f64 {
        (0..self.streams())
            .map(|n| (1.0 + self.xi[n][n] / (self.noise * self.receiver_power[n])).log2())
            .sum()
    }

    /// The `N × N` grid as comma-separated rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.xi {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

pub fn stream_correlation(w: MatRef<'_, c64>, chan: &SampledChannel, noise: f64) -> Result<CorrelationMap> {
    let v = mmse_receiver(w, chan, noise)?.v;
    let f = received(w, chan);
    let g = rx_inner(v.as_ref(), f.as_ref(), chan);
    let n = w.ncols();
    let xi = (0..n).map(|i| (0..n).map(|j| g[(i, j)].norm_sqr()).collect()).collect();
    let receiver_power = (0..n)
        .map(|i| linalg::weighted_power(v.subcols(i, 1), &chan.rx.weights))
        .collect();
    Ok(CorrelationMap {
        xi,
        receiver_power,
        rate_bits: achievable_rate(w, chan, noise)?,
        noise,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofWeighting {
    /// Singular values of `Φ_R^{1/2} H Φ_T^{1/2}`.
    SquareRoot,
    /// Singular values of the raw sample matrix `H`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofOptions {
    pub order: usize,
    pub threshold_db: f64,
    pub weighting: DofWeighting,
}

impl Default for DofOptions {
    fn default() -> Self {
        Self {
            order: 8,
            threshold_db: 10.0,
            weighting: DofWeighting::SquareRoot,
        }
    }
}

/// Number of singular values within `threshold_db` of the largest.
pub fn count_within_db(singular_values: &[f64], threshold_db: f64) -> usize {
    let Some(&top) = singular_values.first() else {
        return 0;
    };
    if top <= 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s > 0.0 && 20.0 * (top / s).log10() <= threshold_db)
        .count()
}

/// Spatial degrees of freedom from a Gauss-Legendre sampled channel.
pub fn dof_estimate(
    tx: &ApertureGeometry,
    rx: &ApertureGeometry,
    constants: &PhysicalConstants,
    options: &DofOptions,
) -> Result<usize> {
    if options.order < 2 {
        return Err(Error::InvalidOrder);
    }
    if !(options.threshold_db > 0.0) {
        return Err(Error::InvalidConstant {
            name: "threshold_db",
            value: options.threshold_db,
        });
    }
    let rule = gauss_legendre(options.order)?;
    let chan = build_sampled_channel(&build_grid(tx, &rule)?, &build_grid(rx, &rule)?, constants)?;
    let b = match options.weighting {
        DofWeighting::Raw => chan.h.clone(),
        DofWeighting::SquareRoot => {
            let sr: Vec<f64> = chan.rx.weights.iter().map(|w| w.sqrt()).collect();
            let st: Vec<f64> = chan.tx.weights.iter().map(|w| w.sqrt()).collect();
            linalg::scale_cols(linalg::scale_rows(chan.h.as_ref(), &sr).as_ref(), &st)
        }
    };
    Ok(count_within_db(&linalg::singular_values(b.as_ref())?, options.threshold_db))
}

/// Degrees of freedom from a uniform midpoint sampling of both apertures.
pub fn dof_uniform_sampling(
    tx: &ApertureGeometry,
    rx: &ApertureGeometry,
    constants: &PhysicalConstants,
    samples_per_axis: usize,
    threshold_db: f64,
) -> Result<usize> {
    tx.validate()?;
    rx.validate()?;
    constants.validate()?;
    let grid = |g: &ApertureGeometry| {
        let (hx, hy) = (g.lx / samples_per_axis as f64, g.ly / samples_per_axis as f64);
        let mut pts = Vec::with_capacity(samples_per_axis * samples_per_axis);
        for n in 0..samples_per_axis {
            for m in 0..samples_per_axis {
                pts.push(g.to_global((n as f64 + 0.5) * hx - g.lx / 2.0, (m as f64 + 0.5) * hy - g.ly / 2.0));
            }
        }
        pts
    };
    let h = channel_matrix(
        &grid(rx),
        &grid(tx),
        &rx.global_polarization(),
        &tx.global_polarization(),
        constants,
        1.0,
    )?;
    Ok(count_within_db(&linalg::singular_values(h.as_ref())?, threshold_db))
}

/// Far-field line-of-sight estimate `A_T A_R / (λ D)²`.
pub fn dof_far_field(tx_area: f64, rx_area: f64, wavelength: f64, distance: f64) -> f64 {
    tx_area * rx_area / (wavelength * distance).powi(2)
}

/// Rich-scattering bound `4 min(A_T, A_R) / λ²`.
pub fn dof_scattering(tx_area: f64, rx_area: f64, wavelength: f64) -> f64 {
    4.0 * tx_area.min(rx_area) / (wavelength * wavelength)
}

/// Rate of a continuous beamformer realised on a metasurface with element
/// pitch `spacing` and element area `element_area`.
///
/// `current(s, [x, y])` returns the per-stream current density at global
/// point `s` (local coordinates `x, y`). Element `k` carries
/// `√a_e · w(s̄_k)`; the weights are then rescaled onto the power budget and
/// the rate is taken over the element-to-element channel `a_e · h`.
pub fn metasurface_rate<F>(
    tx: &ApertureGeometry,
    rx: &ApertureGeometry,
    constants: &PhysicalConstants,
    spacing: f64,
    element_area: f64,
    mut current: F,
) -> Result<f64>
where
    F: FnMut(&Vec3, [f64; 2]) -> Result<Vec<c64>>,
{
    constants.validate()?;
    check_element_area(spacing, element_area)?;
    let tx_arr = ElementArray::new(tx, spacing)?;
    let rx_arr = ElementArray::new(rx, spacing)?;
    let amp = element_area.sqrt();
    let mut rows = Vec::with_capacity(tx_arr.len());
    for (s, local) in tx_arr.points.iter().zip(&tx_arr.local) {
        rows.push(current(s, *local)?);
    }
    let streams = rows.first().map_or(0, Vec::len);
    if streams == 0 || rows.iter().any(|r| r.len() != streams) {
        return Err(Error::Dimension("current density must return the same non-zero stream count everywhere".into()));
    }
    let mut x = Mat::from_fn(rows.len(), streams, |k, n| rows[k][n] * amp);
    let total: f64 = rows.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() * element_area;
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Degenerate("sampled beamformer carries no power".into()));
    }
    x = &x * linalg::cscale((constants.power() / total).sqrt());
    let y = apply_discrete_channel(&rx_arr, &tx_arr, element_area, constants, x.as_ref())?;
    let q = y.adjoint() * &y;
    linalg::log2_det_hpd(linalg::add_diag((&q * linalg::cscale(1.0 / constants.noise_power)).as_ref(), 1.0).as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::green_scalar;
    use crate::wmmse::{init_beamformer, InitMode};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel(area: f64, m: usize, distance: f64) -> SampledChannel {
        let rule = gauss_legendre(m).unwrap();
        let tx = build_grid(&ApertureGeometry::with_area(area, [0.0; 3]), &rule).unwrap();
        let rx = build_grid(&ApertureGeometry::with_area(area, [0.0, 0.0, distance]), &rule).unwrap();
        build_sampled_channel(&tx, &rx, &PhysicalConstants::default()).unwrap()
    }

    fn random_w(chan: &SampledChannel, n: usize, seed: u64) -> Mat<c64> {
        init_beamformer(chan, n, InitMode::Random { seed }).unwrap().w
    }

    #[test]
    fn zero_beamformer_has_zero_rate() {
        let chan = channel(0.25, 4, 10.0);
        let w = Mat::<c64>::zeros(chan.tx_len(), 3);
        assert_eq!(achievable_rate(w.as_ref(), &chan, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn unitary_rotation_preserves_rate() {
        let chan = channel(0.25, 5, 10.0);
        let w = random_w(&chan, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = linalg::complex_gaussian(4, 4, &mut rng).qr().compute_Q();
        let noise = chan.constants.noise_power;
        let a = achievable_rate(w.as_ref(), &chan, noise).unwrap();
        let b = achievable_rate((&w * &u).as_ref(), &chan, noise).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn rate_matches_kernel_form() {
        // K(s, z) = ∫ h(r, s)* h(r, z) dr, integrated on a finer receive rule
        // than the channel itself uses.
        let chan = channel(0.25, 6, 10.0);
        let w = random_w(&chan, 3, 4);
        let c = &chan.constants;
        let fine = build_grid(&chan.rx.geometry, &gauss_legendre(16).unwrap()).unwrap();
        let y = [0.0, 1.0, 0.0];
        let ms = chan.tx_len();
        let mut k = Mat::<c64>::zeros(ms, ms);
        let cols: Vec<Vec<c64>> = chan
            .tx
            .points
            .iter()
            .map(|s| fine.points.iter().map(|r| green_scalar(r, s, &y, &y, c).unwrap()).collect())
            .collect();
        for a in 0..ms {
            for b in 0..ms {
                k[(a, b)] = (0..fine.len()).map(|i| cols[a][i].conj() * cols[b][i] * fine.weights[i]).sum();
            }
        }
        let phi_w = linalg::scale_rows(w.as_ref(), &chan.tx.weights);
        let q = phi_w.adjoint() * &k * &phi_w;
        let kernel_rate =
            linalg::log2_det_hpd(linalg::add_diag((&q * linalg::cscale(1.0 / c.noise_power)).as_ref(), 1.0).as_ref()).unwrap();
        let rate = achievable_rate(w.as_ref(), &chan, c.noise_power).unwrap();
        assert!((rate - kernel_rate).abs() < 1e-6, "{rate} vs {kernel_rate}");
    }

    #[test]
    fn mmse_receiver_properties() {
        let chan = channel(0.25, 5, 10.0);
        let w = random_w(&chan, 4, 6);
        let noise = chan.constants.noise_power;
        let v = mmse_receiver(w.as_ref(), &chan, noise).unwrap().v;
        let e = mse_matrix(w.as_ref(), v.as_ref(), &chan, noise).unwrap();
        let q = stream_gram(w.as_ref(), &chan);
        let closed = linalg::solve_left(
            linalg::add_diag((&q * linalg::cscale(1.0 / noise)).as_ref(), 1.0).as_ref(),
            linalg::identity(4).as_ref(),
        );
        assert!(linalg::max_abs((&e - &closed).as_ref()) < 1e-9);
        let rate = achievable_rate(w.as_ref(), &chan, noise).unwrap();
        assert!((rate + linalg::log2_det_hpd(e.as_ref()).unwrap()).abs() < 1e-9);

        let base = linalg::trace(e.as_ref()).re;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scale = linalg::max_abs(v.as_ref());
        for _ in 0..100 {
            let dv = &linalg::complex_gaussian(v.nrows(), 4, &mut rng) * linalg::cscale(1e-3 * scale);
            let ep = mse_matrix(w.as_ref(), (&v + &dv).as_ref(), &chan, noise).unwrap();
            assert!(linalg::trace(ep.as_ref()).re >= base - 1e-12);
        }
    }

    #[test]
    fn mmse_receiver_large_noise_limit() {
        let chan = channel(0.25, 4, 10.0);
        let w = random_w(&chan, 2, 1);
        let noise = 1e12;
        let v = mmse_receiver(w.as_ref(), &chan, noise).unwrap().v;
        let mf = &received(w.as_ref(), &chan) * linalg::cscale(1.0 / noise);
        assert!(linalg::max_abs((&v - &mf).as_ref()) <= 1e-6 * linalg::max_abs(mf.as_ref()));
    }

    #[test]
    fn mse_trivial_cases() {
        let chan = channel(0.25, 4, 10.0);
        let w = random_w(&chan, 3, 2);
        let zero_v = Mat::<c64>::zeros(chan.rx_len(), 3);
        let e = mse_matrix(w.as_ref(), zero_v.as_ref(), &chan, 0.1).unwrap();
        assert!(linalg::max_abs((&e - linalg::identity(3)).as_ref()) < 1e-15);
        let zero_w = Mat::<c64>::zeros(chan.tx_len(), 3);
        let v = linalg::complex_gaussian(chan.rx_len(), 3, &mut ChaCha8Rng::seed_from_u64(0));
        let e = mse_matrix(zero_w.as_ref(), v.as_ref(), &chan, 0.1).unwrap();
        let expect = linalg::identity(3) + rx_inner(v.as_ref(), v.as_ref(), &chan) * linalg::cscale(0.1);
        assert!(linalg::max_abs((&e - &expect).as_ref()) < 1e-14);
    }

    #[test]
    fn mse_matches_monte_carlo() {
        let chan = channel(0.25, 3, 10.0);
        let w = random_w(&chan, 2, 3);
        let noise = chan.constants.noise_power;
        let v = mmse_receiver(w.as_ref(), &chan, noise).unwrap().v;
        let e = mse_matrix(w.as_ref(), v.as_ref(), &chan, noise).unwrap();
        let f = received(w.as_ref(), &chan);
        let phi = &chan.rx.weights;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = 100_000;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut acc = Mat::<c64>::zeros(2, 2);
        let vh_phi = linalg::scale_cols(v.adjoint().to_owned().as_ref(), phi);
        for _ in 0..draws {
            let sym = linalg::complex_gaussian(2, 1, &mut rng);
            // Node noise CN(0, σ²/Φ_i) makes the weighted sum carry variance σ²‖v‖².
            let nz = Mat::from_fn(chan.rx_len(), 1, |i, _| {
                let sd = (noise / phi[i]).sqrt();
                c64::new(rng.sample::<f64, _>(rand_distr::StandardNormal) * s * sd, rng.sample::<f64, _>(rand_distr::StandardNormal) * s * sd)
            });
            let y = &f * &sym + nz;
            let err = &vh_phi * &y - &sym;
            acc += &err * err.adjoint();
        }
        let mc = &acc * linalg::cscale(1.0 / draws as f64);
        for i in 0..2 {
            for j in 0..2 {
                let scale = e[(i, i)].norm().max(e[(j, j)].norm());
                assert!((mc[(i, j)] - e[(i, j)]).norm() <= 1.5e-2 * scale, "({i},{j}) {} vs {}", mc[(i, j)], e[(i, j)]);
            }
        }
    }

    #[test]
    fn single_stream_sic() {
        let chan = channel(0.25, 4, 10.0);
        let w = random_w(&chan, 1, 0);
        let noise = chan.constants.noise_power;
        let s = sic_rate_oracle(w.as_ref(), &chan, noise).unwrap();
        let q = stream_gram(w.as_ref(), &chan)[(0, 0)].re;
        assert!((s.per_stream[0] - (1.0 + q / noise).log2()).abs() < 1e-12);
    }

    #[test]
    fn decode_order_changes_streams_not_total() {
        let chan = channel(0.25, 5, 10.0);
        let w = random_w(&chan, 4, 17);
        let noise = chan.constants.noise_power;
        let reference = achievable_rate(w.as_ref(), &chan, noise).unwrap();
        let mut perm = [0usize, 1, 2, 3];
        let mut seen = std::collections::HashSet::new();
        let mut stream_values = std::collections::HashSet::new();
        // Heap's algorithm over all 24 orders.
        fn heap(k: usize, a: &mut [usize; 4], out: &mut Vec<[usize; 4]>) {
            if k == 1 {
                out.push(*a);
                return;
            }
            for i in 0..k {
                heap(k - 1, a, out);
                if k % 2 == 0 { a.swap(i, k - 1) } else { a.swap(0, k - 1) }
            }
        }
        let mut orders = Vec::new();
        heap(4, &mut perm, &mut orders);
        for o in orders {
            seen.insert(o);
            let wp = Mat::from_fn(w.nrows(), 4, |i, j| w[(i, o[j])]);
            let s = sic_rate_oracle(wp.as_ref(), &chan, noise).unwrap();
            assert!((s.total - reference).abs() < 1e-8);
            stream_values.insert((s.per_stream[0] * 1e6) as i64);
        }
        assert_eq!(seen.len(), 24);
        assert!(stream_values.len() > 1);
    }

    #[test]
    fn diagonal_surrogate_gives_diagonal_correlation() {
        // With one transmit and one receive node per stream and no crosstalk,
        // H is diagonal and so is ξ.
        let mut chan = channel(0.25, 2, 10.0);
        chan.h = Mat::from_fn(4, 4, |i, j| if i == j { c64::new(1.0 + i as f64, 0.5) } else { linalg::zero() });
        let w = Mat::from_fn(4, 4, |i, j| if i == j { c64::new(2.0, 0.0) } else { linalg::zero() });
        let map = stream_correlation(w.as_ref(), &chan, 0.1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert!(map.xi[i][j] > 0.0);
                } else {
                    assert_eq!(map.xi[i][j], 0.0);
                }
            }
        }
        assert!((map.parallel_rate() - map.rate_bits).abs() < 1e-9);
        assert_eq!(map.to_csv().lines().count(), 4);
    }

    #[test]
    fn dof_limits_and_closed_forms() {
        let c = PhysicalConstants::default();
        let tx = ApertureGeometry::square(0.5, [0.0; 3]);
        let far = ApertureGeometry::square(0.5, [0.0, 0.0, 1e4]);
        assert_eq!(dof_estimate(&tx, &far, &c, &DofOptions::default()).unwrap(), 1);
        assert!((dof_far_field(0.25, 0.25, 0.125, 10.0) - 0.04).abs() < 1e-15);
        assert!((dof_scattering(0.25, 0.5, 0.125) - 64.0).abs() < 1e-12);
        let raw = DofOptions {
            weighting: DofWeighting::Raw,
            ..DofOptions::default()
        };
        assert!(dof_estimate(&tx, &ApertureGeometry::square(0.5, [0.0, 0.0, 2.0]), &c, &raw).unwrap() >= 1);
    }

    #[test]
    fn count_within_threshold() {
        assert_eq!(count_within_db(&[10.0, 5.0, 3.17, 3.16, 1.0], 10.0), 3);
        assert_eq!(count_within_db(&[], 10.0), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn sic_sum_equals_log_det(seed in 0u64..10_000, n in 1usize..7, d in 2.0f64..20.0) {
            let chan = channel(0.25, 4, d);
            let w = random_w(&chan, n, seed);
            let noise = chan.constants.noise_power;
            let s = sic_rate_oracle(w.as_ref(), &chan, noise).unwrap();
            let r = achievable_rate(w.as_ref(), &chan, noise).unwrap();
            prop_assert!((s.total - r).abs() <= 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn dof_does_not_grow_with_distance(near in 0.5f64..5.0, factor in 1.1f64..4.0, f in 2.0e9f64..6.0e9) {
            // An order-12 grid resolves the near-field modes at these sizes;
            // coarser grids saturate below the true count at short range.
            let c = PhysicalConstants::default().with_frequency(f);
            let opts = DofOptions { order: 12, ..DofOptions::default() };
            let tx = ApertureGeometry::square(0.5, [0.0; 3]);
            let at = |d: f64| dof_estimate(&tx, &ApertureGeometry::square(0.5, [0.0, 0.0, d]), &c, &opts).unwrap();
            prop_assert!(at(near * factor) <= at(near));
        }
    }

    #[test]
    fn near_parallel_streams_match_diagonal_rate() {
        use crate::wmmse::{solve, SolverConfig};
        let chan = channel(0.5, 8, 10.0);
        let cfg = SolverConfig::new(4).with_init(InitMode::MatchedFilter).with_threshold(1e-12).with_max_iter(3000);
        let sol = solve(&chan, &cfg).unwrap();
        let map = stream_correlation(sol.beamformer.w.as_ref(), &chan, chan.constants.noise_power).unwrap();
        let leak = map.leakage_ratio(1e-6);
        assert!(leak <= 1e-4, "leakage {leak:.3e} outside the near-parallel regime");
        let rel = (map.parallel_rate() - map.rate_bits).abs() / map.rate_bits;
        assert!(rel <= 0.02, "parallel {} vs joint {}", map.parallel_rate(), map.rate_bits);
    }

    #[test]
    fn metasurface_rate_matches_explicit_channel() {
        let c = PhysicalConstants::default();
        let lambda = c.wavelength();
        let tx = ApertureGeometry::square(0.1, [0.0; 3]);
        let rx = ApertureGeometry::square(0.1, [0.0, 0.0, 2.0]);
        let (d, a) = (lambda / 8.0, (lambda / 10.0).powi(2));
        let current = |_: &Vec3, p: [f64; 2]| -> Result<Vec<c64>> {
            Ok(vec![c64::new(1.0 + p[0], p[1]), c64::new(p[1] * 3.0, -0.5)])
        };
        let got = metasurface_rate(&tx, &rx, &c, d, a, current).unwrap();

        let dchan = crate::channel::sample_metasurface_channel(&tx, &rx, &c, d, a).unwrap();
        let x = Mat::from_fn(dchan.tx.len(), 2, |k, n| {
            let p = dchan.tx.local[k];
            [c64::new(1.0 + p[0], p[1]), c64::new(p[1] * 3.0, -0.5)][n]
        });
        let scale = (c.power() / x.norm_l2().powi(2)).sqrt();
        let hx = &dchan.h * (&x * linalg::cscale(scale));
        let q = hx.adjoint() * &hx;
        let eig = linalg::hermitian_eigenvalues(q.as_ref()).unwrap();
        let expect: f64 = eig.iter().map(|l| (1.0 + l / c.noise_power).log2()).sum();
        assert!((got - expect).abs() < 1e-9 * expect.max(1.0), "{got} vs {expect}");
    }

    #[test]
    fn metasurface_rejects_oversized_elements() {
        let c = PhysicalConstants::default();
        let tx = ApertureGeometry::square(0.5, [0.0; 3]);
        let rx = ApertureGeometry::square(0.5, [0.0, 0.0, 10.0]);
        let r = metasurface_rate(&tx, &rx, &c, 0.01, 2e-4, |_, _| Ok(vec![c64::new(1.0, 0.0)]));
        assert!(matches!(r, Err(Error::InvalidGeometry(_))));
    }
}
