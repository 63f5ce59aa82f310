//! Bergman kernels of symmetric powers of Griffiths-positive Hermitian
//! bundles over Riemann-surface models.
//!
//! The library has two independent routes to the Bergman function of
//! `(Sym^k E, Sym^k h)` on P^1 models:
//!
//! * a direct route: global section bases, quadrature Gram matrices,
//!   Cholesky orthonormalization, pointwise evaluation ([`bergman`]);
//! * an asymptotic route: the phase/amplitude recursion producing the
//!   expansion coefficients `b_{k,m}`, plus closed forms for the first
//!   two coefficients ([`expansion`]).
//!
//! The two routes are cross-validated against each other; see the
//! `acceptance` integration test for the full suite.

pub mod bergman;
pub mod diastatic;
pub mod expansion;
pub mod geometry;
pub mod matjet;
pub mod numerics;
pub mod sympow;
pub mod tol;

pub use numerics::CMatrix;
