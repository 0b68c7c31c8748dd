//! Rectangular aperture poses and the quadrature grids placed on them.

use serde::{Deserialize, Serialize};

use crate::quadrature::GaussLegendreRule;
use crate::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Tolerance used when deciding whether a point lies on an aperture.
const ON_APERTURE_TOL: f64 = 1e-9;

/// `Rz(alpha) · Ry(beta) · Rx(phi)`.
pub fn rotation_matrix(alpha: f64, beta: f64, phi: f64) -> Mat3 {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    mat_mul(&mat_mul(&rz, &ry), &rx)
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub(crate) fn apply(r: &Mat3, v: &Vec3) -> Vec3 {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

fn apply_transpose(r: &Mat3, v: &Vec3) -> Vec3 {
    [
        r[0][0] * v[0] + r[1][0] * v[1] + r[2][0] * v[2],
        r[0][1] * v[0] + r[1][1] * v[1] + r[2][1] * v[2],
        r[0][2] * v[0] + r[1][2] * v[1] + r[2][2] * v[2],
    ]
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// One planar rectangular aperture.
///
/// In its local frame the aperture occupies `[-lx/2, lx/2] × [-ly/2, ly/2]`
/// in the `z = 0` plane. The global frame is reached by rotating with
/// [`rotation_matrix`] and then translating by `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApertureGeometry {
    pub lx: f64,
    pub ly: f64,
    pub center: Vec3,
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    /// Local polarization direction, rotated together with the aperture.
    pub polarization: Vec3,
}

impl ApertureGeometry {
    /// Axis-aligned square aperture centred at `center`, polarized along y.
    pub fn square(side: f64, center: Vec3) -> Self {
        Self::rect(side, side, center)
    }

    pub fn rect(lx: f64, ly: f64, center: Vec3) -> Self {
        Self {
            lx,
            ly,
            center,
            alpha: 0.0,
            beta: 0.0,
            phi: 0.0,
            polarization: [0.0, 1.0, 0.0],
        }
    }

    /// Square aperture of the given area.
    pub fn with_area(area: f64, center: Vec3) -> Self {
        Self::square(area.sqrt(), center)
    }

    pub fn with_rotation(mut self, alpha: f64, beta: f64, phi: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self.phi = phi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lx", self.lx), ("ly", self.ly)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeometry(format!(
                    "edge length {name} must be positive, got {v}"
                )));
            }
        }
        let finite = self.center.iter().all(|c| c.is_finite())
            && [self.alpha, self.beta, self.phi].iter().all(|a| a.is_finite());
        if !finite {
            return Err(Error::InvalidGeometry("pose must be finite".into()));
        }
        let n = norm(&self.polarization);
        if !(n.is_finite() && (n - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidGeometry(format!(
                "polarization must be a unit vector, got norm {n}"
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_matrix(self.alpha, self.beta, self.phi)
    }

    /// Polarization direction in the global frame.
    pub fn global_polarization(&self) -> Vec3 {
        apply(&self.rotation(), &self.polarization)
    }

    /// Unit normal of the aperture plane in the global frame.
    pub fn normal(&self) -> Vec3 {
        apply(&self.rotation(), &[0.0, 0.0, 1.0])
    }

    pub fn to_global(&self, x: f64, y: f64) -> Vec3 {
        let p = apply(&self.rotation(), &[x, y, 0.0]);
        [
            p[0] + self.center[0],
            p[1] + self.center[1],
            p[2] + self.center[2],
        ]
    }

    /// Local `(x, y, z)` coordinates of a global point; `z` is the distance
    /// from the aperture plane.
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        apply_transpose(&self.rotation(), &sub(p, &self.center))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let [x, y, z] = self.to_local(p);
        let tol = ON_APERTURE_TOL * (1.0 + self.lx.max(self.ly));
        z.abs() <= tol && x.abs() <= self.lx / 2.0 + tol && y.abs() <= self.ly / 2.0 + tol
    }
}

/// Gauss-Legendre nodes placed on an aperture.
///
/// Point `k = n * M + m` sits at local coordinates
/// `(theta_n * lx / 2, theta_m * ly / 2)` and carries weight
/// `area / 4 * w_n * w_m`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub geometry: ApertureGeometry,
    pub order: usize,
    pub points: Vec<Vec3>,
    /// Local `(x, y)` coordinates of each point.
    pub local: Vec<[f64; 2]>,
    /// Diagonal of the weight matrix.
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn build_grid(geometry: &ApertureGeometry, rule: &GaussLegendreRule) -> Result<QuadratureGrid> {
    geometry.validate()?;
    let m = rule.order();
    let quarter_area = geometry.area() / 4.0;
    let mut points = Vec::with_capacity(m * m);
    let mut local = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for (tx, wx) in rule.iter() {
        for (ty, wy) in rule.iter() {
            let x = tx * geometry.lx / 2.0;
            let y = ty * geometry.ly / 2.0;
            points.push(geometry.to_global(x, y));
            local.push([x, y]);
            weights.push(quarter_area * wx * wy);
        }
    }
    Ok(QuadratureGrid {
        geometry: geometry.clone(),
        order: m,
        points,
        local,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn det(r: &Mat3) -> f64 {
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    fn assert_orthonormal(r: &Mat3) {
        for i in 0..3 {
            for j in 0..3 {
                let g: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                assert_abs_diff_eq!(g, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(det(r), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let r = rotation_matrix(0.0, 0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let v = apply(&rotation_matrix(PI / 2.0, 0.0, 0.0), &[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn composition_order_is_z_then_y_then_x() {
        let (a, b, p) = (0.3, 0.2, 0.1);
        let r = rotation_matrix(a, b, p);
        assert_orthonormal(&r);
        // Applying the three elementary rotations one after another to a
        // vector must agree with the composed matrix.
        let v = [0.4, -1.3, 2.2];
        let step = apply(&rotation_matrix(0.0, 0.0, p), &v);
        let step = apply(&rotation_matrix(0.0, b, 0.0), &step);
        let step = apply(&rotation_matrix(a, 0.0, 0.0), &step);
        let direct = apply(&r, &v);
        for k in 0..3 {
            assert_abs_diff_eq!(step[k], direct[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn unit_square_single_point() {
        let g = build_grid(
            &ApertureGeometry::square(1.0, [0.0; 3]),
            &gauss_legendre(1).unwrap(),
        )
        .unwrap();
        assert_eq!(g.points, vec![[0.0, 0.0, 0.0]]);
        assert_abs_diff_eq!(g.weights[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn default_transmitter_grid() {
        let g = build_grid(
            &ApertureGeometry::square(0.5, [0.0; 3]),
            &gauss_legendre(10).unwrap(),
        )
        .unwrap();
        assert_eq!(g.len(), 100);
        assert!(g.points.iter().all(|p| p[2].abs() <= 1e-12));
        assert_abs_diff_eq!(g.weight_sum(), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn receiver_grid_sits_at_offset() {
        let g = build_grid(
            &ApertureGeometry::square(0.5, [0.0, 0.0, 10.0]),
            &gauss_legendre(10).unwrap(),
        )
        .unwrap();
        assert!(g.points.iter().all(|p| p[2] == 10.0));
    }

    #[test]
    fn raster_order_is_x_outer() {
        let rule = gauss_legendre(3).unwrap();
        let g = build_grid(&ApertureGeometry::rect(2.0, 4.0, [0.0; 3]), &rule).unwrap();
        for n in 0..3 {
            for m in 0..3 {
                let p = g.points[n * 3 + m];
                assert_abs_diff_eq!(p[0], rule.nodes()[n], epsilon = 1e-15);
                assert_abs_diff_eq!(p[1], 2.0 * rule.nodes()[m], epsilon = 1e-15);
                let w = 2.0 * rule.weights()[n] * rule.weights()[m];
                assert_abs_diff_eq!(g.weights[n * 3 + m], w, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn invalid_edges_are_named() {
        let mut geom = ApertureGeometry::square(1.0, [0.0; 3]);
        geom.lx = 0.0;
        let err = build_grid(&geom, &gauss_legendre(2).unwrap()).unwrap_err();
        assert!(err.to_string().contains("lx"), "{err}");
    }

    #[test]
    fn contains_rejects_off_plane_and_outside() {
        let geom = ApertureGeometry::square(1.0, [0.0, 0.0, 5.0]).with_rotation(0.4, 0.2, -0.3);
        assert!(geom.contains(&geom.to_global(0.5, -0.5)));
        assert!(!geom.contains(&geom.to_global(0.6, 0.0)));
        let n = geom.normal();
        let p = geom.to_global(0.1, 0.1);
        assert!(!geom.contains(&[p[0] + 1e-3 * n[0], p[1] + 1e-3 * n[1], p[2] + 1e-3 * n[2]]));
    }

    proptest! {
        #[test]
        fn rotations_are_proper(a in -7.0f64..7.0, b in -7.0f64..7.0, p in -7.0f64..7.0) {
            assert_orthonormal(&rotation_matrix(a, b, p));
            let geom = ApertureGeometry::square(1.0, [0.0; 3]).with_rotation(a, b, p);
            prop_assert!((norm(&geom.global_polarization()) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn grid_is_rigid_and_planar(
            lx in 0.05f64..2.0, ly in 0.05f64..2.0,
            cx in -5.0f64..5.0, cy in -5.0f64..5.0, cz in -5.0f64..5.0,
            a in -3.2f64..3.2, b in -3.2f64..3.2, p in -3.2f64..3.2,
            m in 1usize..8,
        ) {
            let rule = gauss_legendre(m).unwrap();
            let flat = build_grid(&ApertureGeometry::rect(lx, ly, [0.0; 3]), &rule).unwrap();
            let geom = ApertureGeometry::rect(lx, ly, [cx, cy, cz]).with_rotation(a, b, p);
            let posed = build_grid(&geom, &rule).unwrap();
            let rel = (posed.weight_sum() - geom.area()).abs() / geom.area();
            prop_assert!(rel <= 1e-12);
            let normal = geom.normal();
            for q in &posed.points {
                prop_assert!(dot(&sub(q, &geom.center), &normal).abs() <= 1e-10);
            }
            for i in 0..flat.len() {
                for j in 0..flat.len() {
                    let d0 = norm(&sub(&flat.points[i], &flat.points[j]));
                    let d1 = norm(&sub(&posed.points[i], &posed.points[j]));
                    prop_assert!((d0 - d1).abs() <= 1e-12);
                }
            }
        }
    }
}
