//! Dense complex matrix kernel: Hermitian eigendecomposition, matrix
//! exponential/logarithm, singular values, Cholesky, and the product-log
//! `Z^(p)(X_1, …, X_p) = log(e^{X_1} ⋯ e^{X_p})`.
//!
//! All operations are pure functions on immutable values.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::tol;

/// Dense complex matrix. Everything pointwise in the library is one of these.
pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("principal logarithm undefined: {0}")]
    LogDomain(String),
    #[error("Cholesky failed at pivot {pivot}: non-positive value {value:.3e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("singular constant term (condition estimate {cond:.3e})")]
    Singular { cond: f64 },
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

/// Largest absolute entry.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(a: &CMatrix, rel: f64) -> bool {
    let scale = max_abs(a).max(1.0);
    max_abs(&(a - a.adjoint())) <= rel * scale
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending,
/// eigenvector columns unitary.
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

/// Hermitian eigendecomposition. The caller asserts Hermitian-ness by
/// choosing this entry point; only the lower triangle drives the result
/// via symmetrization.
pub fn hermitian_eigen(a: &CMatrix) -> Result<Spectrum, NumericsError> {
    if !is_finite(a) {
        return Err(NumericsError::NonFinite);
    }
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    // Symmetrize to suppress roundoff asymmetry before factorizing.
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// Apply a real scalar function to a Hermitian matrix through its spectrum.
pub fn hermitian_map(a: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix, NumericsError> {
    let spec = hermitian_eigen(a)?;
    let n = a.nrows();
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        spec.eigenvalues.iter().map(|&l| Complex64::new(f(l), 0.0)),
    ));
    Ok(&spec.eigenvectors * d * spec.eigenvectors.adjoint())
}

/// Matrix exponential by scaling-and-squaring with a truncated Taylor
/// series; the term loop stops on relative term norm below
/// [`tol::SERIES_TERM_REL`].
pub fn expm(a: &CMatrix) -> Result<CMatrix, NumericsError> {
    if !is_finite(a) {
        return Err(NumericsError::NonFinite);
    }
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let norm = op_norm(a)?;
    let mut s = 0u32;
    while norm / f64::powi(2.0, s as i32) > 0.5 {
        s += 1;
    }
    let b = a.scale(1.0 / f64::powi(2.0, s as i32));
    let n = a.nrows();
    let mut sum = identity(n);
    let mut term = identity(n);
    for j in 1..200 {
        term = (&term * &b).scale(1.0 / j as f64);
        sum += &term;
        if max_abs(&term) < tol::SERIES_TERM_REL * max_abs(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Exponential of a Hermitian matrix via its eigendecomposition.
pub fn expm_hermitian(a: &CMatrix) -> Result<CMatrix, NumericsError> {
    hermitian_map(a, f64::exp)
}

/// Principal logarithm of a Hermitian positive definite matrix.
pub fn logm_hermitian_pd(a: &CMatrix) -> Result<CMatrix, NumericsError> {
    let spec = hermitian_eigen(a)?;
    if let Some(&min) = spec.eigenvalues.first() {
        if min <= 0.0 {
            return Err(NumericsError::LogDomain(format!(
                "smallest eigenvalue {min:.3e} is not positive"
            )));
        }
    }
    hermitian_map(a, f64::ln)
}

/// Principal logarithm for general (possibly non-normal) input with
/// `‖A − I‖_op < 1`: inverse scaling-and-squaring on top of the Mercator
/// series in `A − I`.
pub fn logm_principal(a: &CMatrix) -> Result<CMatrix, NumericsError> {
    if !is_finite(a) {
        return Err(NumericsError::NonFinite);
    }
    let n = a.nrows();
    let eye = identity(n);
    let dist = op_norm(&(a - &eye))?;
    if dist < 1.0 {
        // Square-root steps until the Mercator series converges fast.
        let mut b = a.clone();
        let mut doublings = 0u32;
        while op_norm(&(&b - &eye))? > 0.25 && doublings < 40 {
            b = sqrtm_newton(&b)?;
            doublings += 1;
        }
        let log = mercator_log(&b)?;
        return Ok(log.scale(f64::powi(2.0, doublings as i32)));
    }
    // Fall back to the Hermitian PD route when applicable.
    if is_hermitian(a, tol::HERMITIAN_REL) {
        return logm_hermitian_pd(a);
    }
    Err(NumericsError::LogDomain(format!(
        "‖A − I‖_op = {dist:.3e} ≥ 1 and A is not Hermitian PD"
    )))
}

/// Mercator series `log(I + E) = Σ (−1)^{j+1} E^j / j` for `‖E‖ < 1`.
fn mercator_log(a: &CMatrix) -> Result<CMatrix, NumericsError> {
    let n = a.nrows();
    let e = a - identity(n);
    let mut sum = CMatrix::zeros(n, n);
    let mut power = identity(n);
    for j in 1..500 {
        power = &power * &e;
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let term = power.scale(sign / j as f64);
        sum += &term;
        if max_abs(&term) < tol::SERIES_TERM_REL * max_abs(&sum).max(1e-300) {
            break;
        }
    }
    Ok(sum)
}

/// Denman–Beavers iteration for the principal square root of a matrix
/// with spectrum off the closed negative real axis.
fn sqrtm_newton(a: &CMatrix) -> Result<CMatrix, NumericsError> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = identity(n);
    for _ in 0..60 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or(NumericsError::Singular { cond: f64::INFINITY })?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or(NumericsError::Singular { cond: f64::INFINITY })?;
        let y_next = (&y + z_inv).scale(0.5);
        let z_next = (&z + y_inv).scale(0.5);
        let delta = max_abs(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta < 1e-15 * max_abs(&y).max(1.0) {
            break;
        }
    }
    Ok(y)
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> Result<f64, NumericsError> {
    if !is_finite(a) {
        return Err(NumericsError::NonFinite);
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(a.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max))
}

/// Lower-triangular `L` with `L L^† = H` for Hermitian positive definite `H`.
/// Reports the failing pivot index on non-PD input.
pub fn cholesky(h: &CMatrix) -> Result<CMatrix, NumericsError> {
    if !is_finite(h) {
        return Err(NumericsError::NonFinite);
    }
    if !h.is_square() {
        return Err(NumericsError::NotSquare {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    let n = h.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = h[(j, j)].re;
        for p in 0..j {
            diag -= l[(j, p)].norm_sqr();
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(NumericsError::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = h[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// `Z^(p)(X_1, …, X_p) = log(e^{X_1} ⋯ e^{X_p})`.
pub fn z_bch(xs: &[CMatrix]) -> Result<CMatrix, NumericsError> {
    assert!(!xs.is_empty(), "z_bch needs at least one factor");
    let n = xs[0].nrows();
    let mut prod = identity(n);
    for x in xs {
        prod = prod * expm(x)?;
    }
    logm_principal(&prod)
}
