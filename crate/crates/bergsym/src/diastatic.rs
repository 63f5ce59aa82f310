//! The polarization ψ, the diastatic function `D(x, y)` at jet level and
//! pointwise, K-frame metrics, and the eigenvalue decay estimates.
//!
//! `D` is defined through the five-factor product
//! `e^{−φ(x)/2} e^{ψ(y,x̄)} e^{−φ(y)} e^{ψ(x,ȳ)} e^{−φ(x)/2} = e^{D(x,y)}`,
//! which is Hermitian positive definite by construction. Its mixed-only
//! power series and the bound `λ_max(D) ≤ −δ|x−y|²` (Griffiths-positive
//! case) drive the off-diagonal decay of the Bergman kernel.

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{BundleKind, BundleModel, ChartData, nilpotent_shift};
use crate::matjet::{MatJetError, MatrixJet};
use crate::numerics::{self, CMatrix, NumericsError};
use crate::sympow::s_k_lift;

#[derive(Debug, Error)]
pub enum DiastaticError {
    #[error("potential jet is not Hermitian-symmetric (defect {0:.3e})")]
    NotHermitianSymmetric(f64),
    #[error("polarization singular at this pair: 1 + x·ȳ = 0")]
    PolarizationPole,
    #[error(transparent)]
    Jet(#[from] MatJetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// The polarization of a potential jet: the same coefficients read as a
/// function holomorphic in each slot separately.
#[derive(Debug, Clone)]
pub struct Polarization {
    pub psi_jet: MatrixJet,
}

fn hermitian_symmetry_defect(phi_jet: &MatrixJet) -> f64 {
    let mut defect: f64 = 0.0;
    for (deg, m) in &phi_jet.coeffs {
        let other = phi_jet.coeff(&[deg[1], deg[0]]);
        defect = defect.max(numerics::max_abs(&(m - other.adjoint())));
    }
    defect
}

/// Hermitian transpose of a two-variable jet: coefficient at `(a, b)`
/// becomes the adjoint of the one at `(b, a)`. Fixed points of this map
/// are exactly the real-analytic (Hermitian-symmetric) jets.
fn jet_hermitian_transpose(j: &MatrixJet) -> MatrixJet {
    assert_eq!(j.vars.len(), 2);
    let mut out = MatrixJet {
        vars: j.vars.clone(),
        trunc: j.trunc,
        dim: j.dim,
        coeffs: Default::default(),
    };
    for (deg, m) in &j.coeffs {
        out.set(vec![deg[1], deg[0]], m.adjoint());
    }
    out
}

/// Relabel `ȳ` as an independent variable. Structurally the identity on
/// our polarized jet carrier; the value of the operation is the
/// Hermitian-symmetry gate, without which `ψ(x, x̄) = φ(x)` fails.
pub fn polarize(phi_jet: &MatrixJet) -> Result<Polarization, DiastaticError> {
    let defect = hermitian_symmetry_defect(phi_jet);
    if defect > 1e-9 * phi_jet.max_norm().max(1.0) {
        return Err(DiastaticError::NotHermitianSymmetric(defect));
    }
    Ok(Polarization {
        psi_jet: phi_jet.clone(),
    })
}

/// Diastatic function as a jet in the centered offsets `(y−x, ȳ−x̄)`.
#[derive(Debug, Clone)]
pub struct DiastasisJet {
    pub d_jet: MatrixJet,
    pub center: Complex64,
}

/// Keep only terms of the given variable-index with the complementary
/// variable at degree zero (the `ψ(y, x̄)` / `ψ(x, ȳ)` slices).
fn single_slot(j: &MatrixJet, keep: usize) -> MatrixJet {
    let mut out = MatrixJet {
        vars: j.vars.clone(),
        trunc: j.trunc,
        dim: j.dim,
        coeffs: Default::default(),
    };
    for (deg, m) in &j.coeffs {
        if deg[1 - keep] == 0 {
            out.set(deg.clone(), m.clone());
        }
    }
    out
}

/// Build `D` from a chart by the five-factor product and the jet
/// logarithm. The product is Hermitian-symmetrized before `log` to
/// suppress roundoff asymmetry.
pub fn diastasis_jet(chart: &ChartData) -> Result<DiastasisJet, DiastaticError> {
    let phi = &chart.phi_jet;
    polarize(phi)?;
    let vars: Vec<&str> = phi.vars.iter().map(String::as_str).collect();
    let phi0 = phi.constant_term();
    let half_inv = MatrixJet::constant(
        &vars,
        phi.trunc,
        numerics::expm(&phi0.scale(-0.5))?,
    );
    // ψ(y, x̄): the z-degree-0 slice; ψ(x, ȳ): the y-degree-0 slice.
    let psi_y = single_slot(phi, 0).exp();
    let psi_z = single_slot(phi, 1).exp();
    let h_mid = phi.neg().exp();
    let product = half_inv
        .mul(&psi_y)
        .mul(&h_mid)
        .mul(&psi_z)
        .mul(&half_inv);
    let sym = product.add(&jet_hermitian_transpose(&product)).scale_re(0.5);
    let d_jet = sym.log()?;
    Ok(DiastasisJet {
        d_jet,
        center: chart.center,
    })
}

impl DiastasisJet {
    /// Largest norm among pure-holomorphic / pure-antiholomorphic
    /// coefficients; the mixed-only structure says this is ~0.
    pub fn pure_part_norm(&self) -> f64 {
        self.d_jet
            .coeffs
            .iter()
            .filter(|(deg, _)| deg[0] == 0 || deg[1] == 0)
            .map(|(_, m)| numerics::max_abs(m))
            .fold(0.0, f64::max)
    }
}

/// Closed-form polarized potential of a catalog model: `ψ(a, b̄)`.
pub fn model_psi(model: &BundleModel, a: Complex64, b: Complex64) -> Result<CMatrix, DiastaticError> {
    let t = a * b.conj();
    let one_plus = Complex64::new(1.0, 0.0) + t;
    if one_plus.norm() < 1e-14 {
        return Err(DiastaticError::PolarizationPole);
    }
    let line = |d: u32, epsilon: f64| -> Complex64 {
        one_plus.ln() * d as f64 + t / one_plus * epsilon
    };
    Ok(match &model.kind {
        BundleKind::FsLine { d, epsilon } => CMatrix::from_element(1, 1, line(*d, *epsilon)),
        BundleKind::DirectSum { summands } => {
            let n = summands.len();
            let mut m = CMatrix::zeros(n, n);
            for (i, s) in summands.iter().enumerate() {
                m[(i, i)] = line(s.d, s.epsilon);
            }
            m
        }
        BundleKind::TwistedTrivial { a: deg, r, epsilon } => {
            let n = nilpotent_shift(*r);
            let diag = numerics::identity(*r).map(|x| x * one_plus.ln() * *deg as f64);
            let twist = n.map(|x| x * (a / one_plus) * *epsilon)
                + n.adjoint().map(|x| x * (b.conj() / one_plus) * *epsilon);
            diag - twist
        }
    })
}

/// Pointwise diastatic function from closures for the metric and the
/// polarized metric (`h_pol(a, b)` must return `H(a, b̄) = e^{−ψ(a, b̄)}`).
/// Working with `H` instead of `ψ` keeps every factor an inverse or an
/// exponential and avoids a matrix logarithm away from the identity.
pub fn diastasis_point_general(
    h: &dyn Fn(Complex64) -> CMatrix,
    h_pol: &dyn Fn(Complex64, Complex64) -> Result<CMatrix, DiastaticError>,
    x: Complex64,
    y: Complex64,
) -> Result<CMatrix, DiastaticError> {
    let hx = h(x);
    let hx_half = numerics::hermitian_map(&hx, f64::sqrt)?;
    let inv = |m: CMatrix| -> Result<CMatrix, DiastaticError> {
        m.try_inverse()
            .ok_or(DiastaticError::Numerics(NumericsError::Singular {
                cond: f64::INFINITY,
            }))
    };
    // e^{ψ(y,x̄)} = H(y,x̄)^{−1} and e^{ψ(x,ȳ)} = H(x,ȳ)^{−1}.
    let factor = inv(h_pol(y, x)?)? * h(y) * inv(h_pol(x, y)?)?;
    let p = &hx_half * factor * &hx_half;
    let sym = (&p + p.adjoint()).scale(0.5);
    Ok(numerics::logm_hermitian_pd(&sym)?)
}

/// Pointwise diastatic function of a catalog model.
pub fn diastasis_point(
    model: &BundleModel,
    x: Complex64,
    y: Complex64,
) -> Result<CMatrix, DiastaticError> {
    diastasis_point_general(
        &|z| model.metric_at(z),
        &|a, b| Ok(numerics::expm(&(-model_psi(model, a, b)?))?),
        x,
        y,
    )
}

/// `‖expm(𝔰^k(D(x,y)))‖_op`, the squared operator norm of the symmetric
/// power transition operator; decays like `e^{−δk|x−y|²}`.
pub fn sym_power_decay_check(
    model: &BundleModel,
    x: Complex64,
    y: Complex64,
    k: usize,
) -> Result<f64, DiastaticError> {
    let d = diastasis_point(model, x, y)?;
    let lifted = s_k_lift(&d, k);
    Ok(numerics::op_norm(&numerics::expm_hermitian(&lifted)?)?)
}

/// The metric jet in the K-frame centered at the chart center: `e^{D}`.
/// Constant term `I`; linear blocks vanish (mixed-only `D`).
pub fn k_frame_metric(chart: &ChartData) -> Result<MatrixJet, DiastaticError> {
    let d = diastasis_jet(chart)?;
    Ok(d.d_jet.exp())
}
