//! Line-of-sight channel between two apertures.
//!
//! The scalar channel `h(r, s)` is the free-space dyadic Green's function
//! projected onto the receive and transmit polarizations. It is sampled on
//! quadrature grids ([`SampledChannel`]), projected onto Fourier modes
//! ([`WavenumberChannel`]), or evaluated at discrete element centres
//! ([`DiscreteArrayChannel`]).

use std::f64::consts::PI;

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::geometry::{dot, norm, sub, ApertureGeometry, QuadratureGrid, Vec3};
use crate::linalg;
use crate::{Error, Result};

/// Distances below this are treated as coincident points.
const COINCIDENT: f64 = 1e-12;

/// Ceiling that ignores round-off just above an integer, so that `0.5 m`
/// over a `λ` of `3e8 / 7.8e9` counts as 13, not 14.
pub(crate) fn robust_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Carrier frequency in Hz.
    pub frequency: f64,
    pub speed_of_light: f64,
    /// Free-space impedance in ohms.
    pub impedance: f64,
    pub noise_power: f64,
    /// Transmit power budget in configuration units.
    pub transmit_power: f64,
    /// Factor converting `transmit_power` into solver units.
    pub power_scale: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            frequency: 2.4e9,
            speed_of_light: 3e8,
            impedance: 120.0 * PI,
            noise_power: 5.6e-3,
            transmit_power: 100.0,
            power_scale: 1e-3,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("frequency", self.frequency),
            ("speed_of_light", self.speed_of_light),
            ("impedance", self.impedance),
            ("noise_power", self.noise_power),
            ("transmit_power", self.transmit_power),
            ("power_scale", self.power_scale),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConstant { name, value });
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        self.speed_of_light / self.frequency
    }

    /// Transmit power in the units the channel is expressed in.
    pub fn power(&self) -> f64 {
        self.transmit_power * self.power_scale
    }

    pub fn with_frequency(mut self, frequency: f64) -> Self {
        self.frequency = frequency;
        self
    }

    pub fn with_transmit_power(mut self, transmit_power: f64) -> Self {
        self.transmit_power = transmit_power;
        self
    }
}

/// Polarized Green's-function channel from a point source at `s` to an
/// observation point `r`.
pub fn green_scalar(
    r: &Vec3,
    s: &Vec3,
    rx_polarization: &Vec3,
    tx_polarization: &Vec3,
    constants: &PhysicalConstants,
) -> Result<c64> {
    let d = sub(r, s);
    let dist = norm(&d);
    if dist <= COINCIDENT {
        return Err(Error::Degenerate(format!(
            "source and observation points coincide at {s:?}"
        )));
    }
    Ok(green_unchecked(&d, dist, rx_polarization, tx_polarization, constants.wavelength(), constants.impedance))
}

#[inline]
fn green_unchecked(d: &Vec3, dist: f64, ur: &Vec3, ut: &Vec3, wavelength: f64, eta: f64) -> c64 {
    let projection = dot(ur, ut) - dot(d, ur) * dot(d, ut) / (dist * dist);
    let phase = -2.0 * PI * dist / wavelength;
    let amplitude = eta / (2.0 * wavelength * dist) * projection;
    // -j · e^{j·phase}
    let (sin, cos) = phase.sin_cos();
    c64::new(amplitude * sin, -amplitude * cos)
}

/// `scale · h(rx_i, tx_j)` for every pair of points.
pub(crate) fn channel_matrix(
    rx_points: &[Vec3],
    tx_points: &[Vec3],
    rx_polarization: &Vec3,
    tx_polarization: &Vec3,
    constants: &PhysicalConstants,
    scale: f64,
) -> Result<Mat<c64>> {
    let wavelength = constants.wavelength();
    let eta = constants.impedance;
    let mut h = Mat::<c64>::zeros(rx_points.len(), tx_points.len());
    for (j, s) in tx_points.iter().enumerate() {
        for (i, r) in rx_points.iter().enumerate() {
            let d = sub(r, s);
            let dist = norm(&d);
            if dist <= COINCIDENT {
                return Err(Error::Singular { rx: i, tx: j });
            }
            h[(i, j)] = green_unchecked(&d, dist, rx_polarization, tx_polarization, wavelength, eta) * scale;
        }
    }
    Ok(h)
}

/// Green's-function samples between two quadrature grids.
#[derive(Debug, Clone)]
pub struct SampledChannel {
    pub tx: QuadratureGrid,
    pub rx: QuadratureGrid,
    /// Rows index receive nodes, columns index transmit nodes.
    pub h: Mat<c64>,
    pub constants: PhysicalConstants,
}

impl SampledChannel {
    pub fn tx_len(&self) -> usize {
        self.tx.len()
    }

    pub fn rx_len(&self) -> usize {
        self.rx.len()
    }

    /// `Hᴴ · Φ_R · H`, the transmit-side coupling Gram matrix.
    pub fn tx_gram(&self) -> Mat<c64> {
        self.h.adjoint() * linalg::scale_rows(self.h.as_ref(), &self.rx.weights)
    }

    /// Conjugated channel row `h̃(s)_i = conj(h(r_i, s))` for an arbitrary
    /// transmit point.
    pub fn conjugate_row(&self, s: &Vec3) -> Result<Vec<c64>> {
        let up = self.rx.geometry.global_polarization();
        let ut = self.tx.geometry.global_polarization();
        self.rx
            .points
            .iter()
            .map(|r| green_scalar(r, s, &up, &ut, &self.constants).map(|h| h.conj()))
            .collect()
    }

    /// Smallest distance between any transmit and receive node.
    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for r in &self.rx.points {
            for s in &self.tx.points {
                best = best.min(norm(&sub(r, s)));
            }
        }
        best
    }
}

pub fn build_sampled_channel(
    tx: &QuadratureGrid,
    rx: &QuadratureGrid,
    constants: &PhysicalConstants,
) -> Result<SampledChannel> {
    constants.validate()?;
    let h = channel_matrix(
        &rx.points,
        &tx.points,
        &rx.geometry.global_polarization(),
        &tx.geometry.global_polarization(),
        constants,
        1.0,
    )?;
    Ok(SampledChannel {
        tx: tx.clone(),
        rx: rx.clone(),
        h,
        constants: constants.clone(),
    })
}

/// Truncated Fourier basis on one aperture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeOrders {
    pub x: usize,
    pub y: usize,
}

impl ModeOrders {
    /// `ceil(L / λ)` on each axis.
    pub fn for_aperture(geometry: &ApertureGeometry, wavelength: f64) -> Self {
        Self {
            x: robust_ceil(geometry.lx / wavelength),
            y: robust_ceil(geometry.ly / wavelength),
        }
    }

    pub fn count(&self) -> usize {
        (2 * self.x + 1) * (2 * self.y + 1)
    }

    /// Mode index pairs in raster order, `n` outer.
    pub fn modes(&self) -> Vec<(i64, i64)> {
        let (mx, my) = (self.x as i64, self.y as i64);
        (-mx..=mx).flat_map(|n| (-my..=my).map(move |m| (n, m))).collect()
    }
}

/// `ψ_{n,m}(x, y) = exp(j 2π (n x / Lx + m y / Ly)) / √A` at local coordinates.
pub fn fourier_mode(geometry: &ApertureGeometry, n: i64, m: i64, x: f64, y: f64) -> c64 {
    let arg = 2.0 * PI * (n as f64 * x / geometry.lx + m as f64 * y / geometry.ly);
    c64::from_polar(1.0 / geometry.area().sqrt(), arg)
}

/// Basis matrix with one row per grid node and one column per mode.
pub fn fourier_basis(grid: &QuadratureGrid, orders: ModeOrders) -> Mat<c64> {
    let modes = orders.modes();
    Mat::from_fn(grid.len(), modes.len(), |i, k| {
        let [x, y] = grid.local[i];
        fourier_mode(&grid.geometry, modes[k].0, modes[k].1, x, y)
    })
}

/// Channel between truncated Fourier bases of the two apertures.
#[derive(Debug, Clone)]
pub struct WavenumberChannel {
    pub tx_orders: ModeOrders,
    pub rx_orders: ModeOrders,
    /// Rows index receive modes, columns index transmit modes.
    pub hw: Mat<c64>,
    pub tx_geometry: ApertureGeometry,
    pub constants: PhysicalConstants,
}

impl WavenumberChannel {
    pub fn tx_modes(&self) -> usize {
        self.tx_orders.count()
    }

    pub fn rx_modes(&self) -> usize {
        self.rx_orders.count()
    }

    /// Current density `w(s) = Σ_k ψ_k(s) · coeffs[k, :]` at local
    /// transmit coordinates `(x, y)`.
    pub fn evaluate(&self, coeffs: MatRef<'_, c64>, x: f64, y: f64) -> Vec<c64> {
        let modes = self.tx_orders.modes();
        let mut out = vec![c64::new(0.0, 0.0); coeffs.ncols()];
        for (k, &(n, m)) in modes.iter().enumerate() {
            let psi = fourier_mode(&self.tx_geometry, n, m, x, y);
            for (col, o) in out.iter_mut().enumerate() {
                *o += psi * coeffs[(k, col)];
            }
        }
        out
    }
}

/// Projects the sampled channel onto Fourier modes with truncation orders
/// `ceil(L / λ)` on every axis.
pub fn build_wavenumber_channel(chan: &SampledChannel) -> WavenumberChannel {
    let lambda = chan.constants.wavelength();
    let tx_orders = ModeOrders::for_aperture(&chan.tx.geometry, lambda);
    let rx_orders = ModeOrders::for_aperture(&chan.rx.geometry, lambda);
    wavenumber_channel_with_orders(chan, tx_orders, rx_orders)
}

pub fn wavenumber_channel_with_orders(
    chan: &SampledChannel,
    tx_orders: ModeOrders,
    rx_orders: ModeOrders,
) -> WavenumberChannel {
    let psi_t = linalg::scale_rows(fourier_basis(&chan.tx, tx_orders).as_ref(), &chan.tx.weights);
    let psi_r = linalg::scale_rows(fourier_basis(&chan.rx, rx_orders).as_ref(), &chan.rx.weights);
    let hw = psi_r.adjoint() * (&chan.h * &psi_t);
    WavenumberChannel {
        tx_orders,
        rx_orders,
        hw,
        tx_geometry: chan.tx.geometry.clone(),
        constants: chan.constants.clone(),
    }
}

/// Regular grid of element centres on one aperture.
#[derive(Debug, Clone)]
pub struct ElementArray {
    pub geometry: ApertureGeometry,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    /// Global positions in raster order, x-index outer.
    pub points: Vec<Vec3>,
    /// Local `(x, y)` positions.
    pub local: Vec<[f64; 2]>,
}

impl ElementArray {
    /// Elements at `n·d − L/2`, `n = 0 .. ceil(L/d)`, on each axis.
    pub fn new(geometry: &ApertureGeometry, spacing: f64) -> Result<Self> {
        geometry.validate()?;
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "element spacing must be positive, got {spacing}"
            )));
        }
        for length in [geometry.lx, geometry.ly] {
            if spacing > length {
                return Err(Error::EmptyArray { spacing, length });
            }
        }
        let nx = robust_ceil(geometry.lx / spacing);
        let ny = robust_ceil(geometry.ly / spacing);
        let mut points = Vec::with_capacity(nx * ny);
        let mut local = Vec::with_capacity(nx * ny);
        for n in 0..nx {
            let x = n as f64 * spacing - geometry.lx / 2.0;
            for m in 0..ny {
                let y = m as f64 * spacing - geometry.ly / 2.0;
                points.push(geometry.to_global(x, y));
                local.push([x, y]);
            }
        }
        Ok(Self {
            geometry: geometry.clone(),
            spacing,
            nx,
            ny,
            points,
            local,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Channel between two discrete arrays whose elements are small current
/// sheets of area `element_area`: entry `A_e · h(r̄, s̄)`.
#[derive(Debug, Clone)]
pub struct DiscreteArrayChannel {
    pub tx: ElementArray,
    pub rx: ElementArray,
    pub element_area: f64,
    pub h: Mat<c64>,
    pub constants: PhysicalConstants,
}

impl DiscreteArrayChannel {
    pub fn spacing(&self) -> f64 {
        self.tx.spacing
    }
}

/// Half-wavelength array with effective element aperture `λ² / 4π`.
pub fn build_spda_channel(
    tx: &ApertureGeometry,
    rx: &ApertureGeometry,
    constants: &PhysicalConstants,
) -> Result<DiscreteArrayChannel> {
    let lambda = constants.wavelength();
    sample_metasurface_channel(tx, rx, constants, lambda / 2.0, lambda * lambda / (4.0 * PI))
}

pub fn sample_metasurface_channel(
    tx: &ApertureGeometry,
    rx: &ApertureGeometry,
    constants: &PhysicalConstants,
    spacing: f64,
    element_area: f64,
) -> Result<DiscreteArrayChannel> {
    constants.validate()?;
    check_element_area(spacing, element_area)?;
    let tx_array = ElementArray::new(tx, spacing)?;
    let rx_array = ElementArray::new(rx, spacing)?;
    let h = channel_matrix(
        &rx_array.points,
        &tx_array.points,
        &rx.global_polarization(),
        &tx.global_polarization(),
        constants,
        element_area,
    )?;
    Ok(DiscreteArrayChannel {
        tx: tx_array,
        rx: rx_array,
        element_area,
        h,
        constants: constants.clone(),
    })
}

pub(crate) fn check_element_area(spacing: f64, element_area: f64) -> Result<()> {
    if !(element_area.is_finite() && element_area > 0.0) || element_area > spacing * spacing * (1.0 + 1e-12) {
        return Err(Error::InvalidGeometry(format!(
            "element area {element_area} must be positive and at most spacing² = {}",
            spacing * spacing
        )));
    }
    Ok(())
}

/// `A_e · H̄ · X` for two element arrays without storing `H̄`.
pub fn apply_discrete_channel(
    rx: &ElementArray,
    tx: &ElementArray,
    element_area: f64,
    constants: &PhysicalConstants,
    x: MatRef<'_, c64>,
) -> Result<Mat<c64>> {
    if x.nrows() != tx.len() {
        return Err(Error::Dimension(format!(
            "beamformer has {} rows, array has {} elements",
            x.nrows(),
            tx.len()
        )));
    }
    let up = rx.geometry.global_polarization();
    let ut = tx.geometry.global_polarization();
    let lambda = constants.wavelength();
    let mut out = Mat::<c64>::zeros(rx.len(), x.ncols());
    for (i, r) in rx.points.iter().enumerate() {
        for (j, s) in tx.points.iter().enumerate() {
            let d = sub(r, s);
            let dist = norm(&d);
            if dist <= COINCIDENT {
                return Err(Error::Singular { rx: i, tx: j });
            }
            let h = green_unchecked(&d, dist, &up, &ut, lambda, constants.impedance) * element_area;
            for col in 0..x.ncols() {
                out[(i, col)] += h * x[(j, col)];
            }
        }
    }
    Ok(out)
}
