//! Gauss-Legendre quadrature on intervals and rectangles.
//!
//! Nodes are the roots of the degree-`M` Legendre polynomial, found by Newton
//! iteration from Tricomi's asymptotic guesses. Rules are cached per order
//! because every channel build and sweep point asks for the same few orders.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use faer::c64;

use crate::{Error, Result};

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// An `M`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendreRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendreRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes in strictly increasing order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    fn compute(order: usize) -> Self {
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order as f64;
        // Roots come in symmetric pairs, so only the positive half is iterated.
        for k in 0..order.div_ceil(2) {
            // Tricomi: k-th largest root.
            let kk = (k + 1) as f64;
            let theta = PI * (kk - 0.25) / (m + 0.5);
            let mut x = (1.0 - (m - 1.0) / (8.0 * m * m * m)) * theta.cos();
            let mut dp = legendre_with_derivative(order, x).1;
            for _ in 0..NEWTON_MAX_ITER {
                let (p, d) = legendre_with_derivative(order, x);
                let step = p / d;
                x -= step;
                dp = d;
                if step.abs() <= NEWTON_TOL {
                    dp = legendre_with_derivative(order, x).1;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[order - 1 - k] = x;
            nodes[k] = -x;
            weights[order - 1 - k] = w;
            weights[k] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    let nf = n as f64;
    let dp = nf * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Returns the cached `order`-point rule, computing it on first use.
pub fn gauss_legendre(order: usize) -> Result<Arc<GaussLegendreRule>> {
    if order == 0 {
        return Err(Error::InvalidOrder);
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendreRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    Ok(map
        .entry(order)
        .or_insert_with(|| Arc::new(GaussLegendreRule::compute(order)))
        .clone())
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    /// Rectangle centred on the origin with the given edge lengths.
    pub fn centered(lx: f64, ly: f64) -> Self {
        Self::new(-lx / 2.0, lx / 2.0, -ly / 2.0, ly / 2.0)
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::InvalidInterval { a, b })
    }
}

/// `∫_a^b f(x) dx` with the given rule.
pub fn integrate_1d<T, F>(rule: &GaussLegendreRule, f: F, a: f64, b: f64) -> Result<c64>
where
    T: Into<c64>,
    F: Fn(f64) -> T,
{
    check_interval(a, b)?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = c64::new(0.0, 0.0);
    for (theta, w) in rule.iter() {
        let x = half * theta + mid;
        let v: c64 = f(x).into();
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("x = {x}"),
            });
        }
        acc += v * w;
    }
    Ok(acc * half)
}

/// `∬_rect f(x, y) dx dy` with the rule applied independently on each axis.
pub fn tensor_integrate_2d<T, F>(rule: &GaussLegendreRule, f: F, rect: Rect) -> Result<c64>
where
    T: Into<c64>,
    F: Fn(f64, f64) -> T,
{
    check_interval(rect.x0, rect.x1)?;
    check_interval(rect.y0, rect.y1)?;
    let hx = 0.5 * (rect.x1 - rect.x0);
    let mx = 0.5 * (rect.x1 + rect.x0);
    let hy = 0.5 * (rect.y1 - rect.y0);
    let my = 0.5 * (rect.y1 + rect.y0);
    let mut acc = c64::new(0.0, 0.0);
    for (tx, wx) in rule.iter() {
        let x = hx * tx + mx;
        for (ty, wy) in rule.iter() {
            let y = hy * ty + my;
            let v: c64 = f(x, y).into();
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite {
                    location: format!("(x, y) = ({x}, {y})"),
                });
            }
            acc += v * (wx * wy);
        }
    }
    Ok(acc * (hx * hy))
}
