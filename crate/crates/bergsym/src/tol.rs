//! Named tolerances. Every numeric threshold in the library lives here;
//! no ad-hoc magic numbers at call sites.

/// Relative tolerance for Hermitian-tagged matrices: `A = A^†`.
pub const HERMITIAN_REL: f64 = 1e-12;

/// Eigenpair residual `A v - λ v` relative to `‖A‖`.
pub const EIGEN_RESIDUAL: f64 = 1e-10;

/// `expm(logm(A)) = A` relative round-trip.
pub const LOGM_ROUNDTRIP_REL: f64 = 1e-9;

/// Cholesky reconstruction `L L^† = H` relative.
pub const CHOLESKY_REL: f64 = 1e-10;

/// Taylor / Mercator series term cutoff, relative to the partial sum.
pub const SERIES_TERM_REL: f64 = 1e-16;

/// Relative tolerance of the `(x - y)`-division residual: the `w^0`
/// coefficients must be below this times the max coefficient norm.
pub const DIVIDE_REL: f64 = 1e-9;

/// Agreement between the two constructions of the amplitude kernel τ.
pub const TAU_CROSS_CHECK: f64 = 1e-9;

/// Agreement between the printed closed forms of `b_{k,1}`.
pub const B1_FORMS: f64 = 1e-9;

/// Recursion vs closed-form agreement for `b_{k,0}`, `b_{k,1}`.
pub const RECURSION_VS_CLOSED: f64 = 1e-8;

/// Griffiths-positivity floor for the sampled curvature minimum.
pub const GRIFFITHS_MIN: f64 = 1e-6;

/// Quadrature volume check against the closed-form total volume.
pub const QUAD_VOLUME_REL: f64 = 1e-10;

/// Trace identity `∫ tr B_k ω = d_k` at shipped quadrature.
pub const TRACE_IDENTITY: f64 = 1e-6;
