//! Small dense helpers on top of faer used by the solvers.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef, Side};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub fn zero() -> c64 {
    c64::new(0.0, 0.0)
}

pub fn real(x: f64) -> c64 {
    c64::new(x, 0.0)
}

/// Real scalar usable in `Mat<c64> * Scale` products.
pub fn cscale(x: f64) -> faer::Scale<c64> {
    faer::Scale(real(x))
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: MatRef<'_, c64>) -> Mat<c64> {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn trace(a: MatRef<'_, c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// `Tr(Aᴴ · diag(d) · A)` without forming the product.
pub fn weighted_power(a: MatRef<'_, c64>, d: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for (i, &w) in d.iter().enumerate() {
            acc += w * a[(i, j)].norm_sqr();
        }
    }
    acc
}

/// `diag(d) · A`.
pub fn scale_rows(a: MatRef<'_, c64>, d: &[f64]) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[i])
}

/// `A · diag(d)`.
pub fn scale_cols(a: MatRef<'_, c64>, d: &[f64]) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j])
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| if i == j { real(1.0) } else { zero() })
}

/// `A + s·I`.
pub fn add_diag(a: MatRef<'_, c64>, s: f64) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        if i == j {
            a[(i, j)] + s
        } else {
            a[(i, j)]
        }
    })
}

pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn is_finite(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// `log₂ det(A)` for Hermitian positive definite `A`, via Cholesky.
pub fn log2_det_hpd(a: MatRef<'_, c64>) -> Result<f64> {
    let h = hermitian_part(a);
    let llt = h
        .llt(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("Cholesky failed: {e:?}")))?;
    let l = llt.L();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.log2()).sum())
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    hermitian_part(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigenvalue solver failed: {e:?}")))
}

pub fn singular_values(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::LinearAlgebra(format!("SVD failed: {e:?}")))
}

/// 2-norm condition number. Infinite for singular input.
///
/// The SVD occasionally fails to converge on matrices with a very wide
/// spectrum; square inputs then fall back to the 1-norm condition number,
/// which is within a factor of the dimension of the 2-norm one.
pub fn condition_number(a: MatRef<'_, c64>) -> Result<f64> {
    let s = match singular_values(a) {
        Ok(s) => s,
        Err(e) if a.nrows() == a.ncols() => return condition_number_1(a).ok_or(e),
        Err(e) => return Err(e),
    };
    let hi = s.first().copied().unwrap_or(0.0);
    let lo = s.last().copied().unwrap_or(0.0);
    Ok(if lo > 0.0 { hi / lo } else { f64::INFINITY })
}

fn norm_1(a: MatRef<'_, c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn condition_number_1(a: MatRef<'_, c64>) -> Option<f64> {
    let n = a.nrows();
    let inv = a.partial_piv_lu().solve(Mat::<c64>::identity(n, n));
    let k = norm_1(a) * norm_1(inv.as_ref());
    if k.is_nan() {
        None
    } else {
        Some(k)
    }
}

/// `B⁻¹ · A` by LU with partial pivoting.
pub fn solve_left(b: MatRef<'_, c64>, a: MatRef<'_, c64>) -> Mat<c64> {
    b.partial_piv_lu().solve(a)
}

/// `A · B⁻¹`, computed as the transpose of `B⁻ᵀ Aᵀ`.
pub fn solve_right(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let xt = b.transpose().partial_piv_lu().solve(a.transpose());
    xt.transpose().to_owned()
}

/// Matrix with i.i.d. `CN(0, 1)` entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<c64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Mat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(re * s, im * s)
    })
}

/// Truncated SVD factors: `A ≈ U · diag(s) · Vᴴ`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

/// Leading `rank` singular triplets of `a` by randomized range finding
/// with `power_iters` subspace iterations and `oversample` extra columns.
pub fn randomized_svd<R: Rng + ?Sized>(
    a: MatRef<'_, c64>,
    rank: usize,
    oversample: usize,
    power_iters: usize,
    rng: &mut R,
) -> Result<TruncatedSvd> {
    let (m, n) = (a.nrows(), a.ncols());
    let full = m.min(n);
    let rank = rank.min(full);
    let width = (rank + oversample).min(full);
    if width == full || 2 * width >= full {
        return exact_truncated(a, rank);
    }
    let omega = complex_gaussian(n, width, rng);
    let mut q = orthonormal_basis(a * &omega);
    for _ in 0..power_iters {
        let z = orthonormal_basis(a.adjoint() * &q);
        q = orthonormal_basis(a * &z);
    }
    let small = q.adjoint() * a;
    let svd = small
        .thin_svd()
        .map_err(|e| Error::LinearAlgebra(format!("SVD failed: {e:?}")))?;
    let u = &q * svd.U();
    let sv = svd.S().column_vector();
    Ok(TruncatedSvd {
        u: u.subcols(0, rank).to_owned(),
        s: (0..rank).map(|k| sv[k].re).collect(),
        v: svd.V().subcols(0, rank).to_owned(),
    })
}

fn exact_truncated(a: MatRef<'_, c64>, rank: usize) -> Result<TruncatedSvd> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::LinearAlgebra(format!("SVD failed: {e:?}")))?;
    let sv = svd.S().column_vector();
    Ok(TruncatedSvd {
        u: svd.U().subcols(0, rank).to_owned(),
        s: (0..rank).map(|k| sv[k].re).collect(),
        v: svd.V().subcols(0, rank).to_owned(),
    })
}

fn orthonormal_basis(y: Mat<c64>) -> Mat<c64> {
    y.qr().compute_thin_Q()
}
