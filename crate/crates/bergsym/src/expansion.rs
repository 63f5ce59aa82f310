//! The phase `P`, the segment-averaged `θ`, the amplitude kernel `τ`,
//! the coefficient recursion producing `b_{k,0..N}`, closed forms for
//! `b_{k,0}` and `b_{k,1}`, and evaluation of the truncated local
//! kernel `K_k^(N)`.
//!
//! `P(x₁,y,z) = log(e^{−ψ(y,z)} e^{ψ(x₁,z)})` is the two-factor
//! product-log; `θ(x,y,z)` is the segment average of `∂₁P` over
//! `x₁ = tx + (1−t)y`, which makes `θ·(x−y) = P` exact. The amplitude
//! kernel is
//!
//! `τ = e^{−ψ(x,z)} e^{ψ(y,z)} ∂₂(e^{−ψ(y,z)} e^{ψ(x,z)}) / (x−y)`
//!
//! with `τ(0,0,0) = F̃(0,0)`, and independently the ad-series
//! `Σ_{n≥1} ad(−θ(x−y))^{n−1}(∂θ/∂z)/n!`; the two constructions are
//! cross-checked against each other on every build.

use num_complex::Complex64;

use crate::geometry::{curvature_pack, ChartData, GeometryError};
use crate::matjet::{MatJetError, MatrixJet};
use crate::numerics::{self, CMatrix, NumericsError};
use crate::sympow::{s_k_lift, weak_compositions};
use crate::tol;
use crate::diastatic::Polarization;

#[derive(Debug, thiserror::Error)]
pub enum ExpansionError {
    #[error("jet order too small: need {needed}, have {have}")]
    Starved { needed: usize, have: usize },
    #[error("tau cross-check failed: defect {defect:.3e} exceeds {tol:.3e}")]
    TauCrossCheck { defect: f64, tol: f64 },
    #[error("theta identity failed: defect {defect:.3e}")]
    ThetaIdentity { defect: f64 },
    #[error("b1 closed forms disagree: defect {defect:.3e}")]
    B1Forms { defect: f64 },
    #[error("line-bundle formula requires rank 1, got {0}")]
    NotLineBundle(usize),
    #[error("evaluation point outside the trust radius ({0:.3})")]
    TrustRadius(f64),
    #[error(transparent)]
    Jet(#[from] MatJetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Embed a two-variable jet into a three-variable space, sending its
/// variables to positions `slots.0` and `slots.1`.
fn embed3(j: &MatrixJet, vars: [&str; 3], slots: (usize, usize)) -> MatrixJet {
    assert_eq!(j.vars.len(), 2);
    let mut out = MatrixJet::zero(&vars, j.trunc, j.dim);
    for (deg, m) in &j.coeffs {
        let mut d = vec![0usize; 3];
        d[slots.0] = deg[0];
        d[slots.1] = deg[1];
        out.set(d, m.clone());
    }
    out
}

/// Coefficientwise `𝔰^k` lift of a rank-level jet (`𝔰^k` is linear, so
/// the lift of a jet is the jet of coefficient lifts).
fn lift_jet(j: &MatrixJet, k: usize) -> MatrixJet {
    let rk = weak_compositions(k, j.dim).r_k();
    let mut out = MatrixJet {
        vars: j.vars.clone(),
        trunc: j.trunc,
        dim: rk,
        coeffs: Default::default(),
    };
    for (deg, m) in &j.coeffs {
        out.set(deg.clone(), s_k_lift(m, k));
    }
    out
}

/// Conjugate every coefficient: `left · c · right`.
fn conj_jet(j: &MatrixJet, left: &CMatrix, right: &CMatrix) -> MatrixJet {
    let mut out = MatrixJet {
        vars: j.vars.clone(),
        trunc: j.trunc,
        dim: j.dim,
        coeffs: Default::default(),
    };
    for (deg, m) in &j.coeffs {
        out.set(deg.clone(), left * m * right);
    }
    out
}

/// Scalar jet `x − y` in the given three-variable space.
fn xy_factor(vars: [&str; 3], trunc: usize) -> MatrixJet {
    MatrixJet::scalar(&vars, trunc, &[(&[1, 0, 0], ONE), (&[0, 1, 0], -ONE)])
}

/// Phase data: `P` in `(x₁, y, z)` and `θ` in `(x, y, z)`, rank level.
#[derive(Debug, Clone)]
pub struct PhasePack {
    pub p_jet: MatrixJet,
    pub theta_jet: MatrixJet,
    pub r: usize,
}

pub fn build_phase(psi: &Polarization, order: usize) -> Result<PhasePack, ExpansionError> {
    let phi = &psi.psi_jet;
    if phi.trunc < order + 2 {
        return Err(ExpansionError::Starved {
            needed: order + 2,
            have: phi.trunc,
        });
    }
    let vars = ["x1", "y", "z"];
    let trunc = order + 1;
    let psi_yz = embed3(phi, vars, (1, 2)).truncate(trunc);
    let psi_xz = embed3(phi, vars, (0, 2)).truncate(trunc);
    // e^{−ψ(y,z)} e^{ψ(x₁,z)} has constant term exactly I, so the jet
    // log is anchored at zero.
    let prod = psi_yz.neg().exp().mul(&psi_xz.exp());
    let p_jet = prod.log()?;
    let theta_jet = p_jet.partial("x1")?.segment_average("y", "x")?;

    // θ(x,y,z)·(x−y) = P(x,y,z) exactly; anything above roundoff is a
    // construction bug.
    let p_as_x = p_jet.rename_var("x1", "x")?.truncate(theta_jet.trunc);
    let rebuilt = theta_jet.mul_scalar_jet(&xy_factor(["x", "y", "z"], theta_jet.trunc));
    let defect = rebuilt.sub(&p_as_x.truncate(rebuilt.trunc)).max_norm();
    if defect > 1e-10 * p_jet.max_norm().max(1.0) {
        return Err(ExpansionError::ThetaIdentity { defect });
    }

    Ok(PhasePack {
        p_jet,
        theta_jet,
        r: phi.dim,
    })
}

/// Rank-level `τ(x, y, z)`, built from the exponential-quotient form
/// and cross-checked against the ad-series form.
pub fn build_tau(phase: &PhasePack) -> Result<MatrixJet, ExpansionError> {
    let p = phase.p_jet.rename_var("x1", "x")?;
    let e_p = p.exp();
    let e_minus_p = p.neg().exp();
    let numerator = e_minus_p.mul(&e_p.partial("z")?);
    let tau = numerator.divide_by_xy("x", "y")?;

    // Ad-series: Σ_{n≥1} ad(−θ·(x−y))^{n−1}(∂θ/∂z)/n!. The adjoint
    // argument has no constant term, so the series terminates at the
    // truncation order.
    let theta = &phase.theta_jet;
    let minus_q = theta
        .mul_scalar_jet(&xy_factor(["x", "y", "z"], theta.trunc))
        .neg();
    let dtheta_z = theta.partial("z")?;
    let mut term = dtheta_z.clone();
    let mut acc = term.clone();
    let mut factorial = 1.0;
    for n in 2..=(theta.trunc + 2) {
        term = minus_q.mul(&term).sub(&term.mul(&minus_q));
        factorial *= n as f64;
        if term.max_norm() == 0.0 {
            break;
        }
        acc = acc.add(&term.scale_re(1.0 / factorial));
    }

    let common = tau.trunc.min(acc.trunc);
    let defect = tau
        .truncate(common)
        .sub(&acc.truncate(common))
        .max_norm();
    let gate = tol::TAU_CROSS_CHECK * tau.max_norm().max(1.0);
    if defect > gate {
        return Err(ExpansionError::TauCrossCheck { defect, tol: gate });
    }
    Ok(tau)
}

/// Diagonal coefficient data for one `(chart, k)` pair: `b[m]` is the
/// value `b_{k,m}` at the chart center, `b_jets[m]` its full `(x, z)`
/// jet for off-diagonal kernel evaluation.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub k: usize,
    pub n: usize,
    pub b: Vec<CMatrix>,
    pub b_jets: Vec<MatrixJet>,
}

/// Solve the coefficient recursion through order `N`:
/// `b_{k,0} = 𝔰^k(∂θ/∂z(x,x,z)) g̃(x,z)^{−1} / k`, then
/// `b_{k,m} = g̃^{−1} ∂_z A_{k,m−1}(x,x,z)` with
/// `A_{k,m} (x−y) = a_{k,m} − k 𝔰^k(τ)^{−1} ∂_z A_{k,m−1}` and
/// `a_{k,m} = k g̃(y,z) 𝔰^k(τ)^{−1} b_{k,m}`.
pub fn coeff_recursion(chart: &ChartData, k: usize, n: usize) -> Result<CoefficientTable, ExpansionError> {
    assert!(k >= 1);
    let order = chart.phi_jet.trunc;
    if order < 2 * n + 4 {
        return Err(ExpansionError::Starved {
            needed: 2 * n + 4,
            have: order,
        });
    }
    let psi = crate::diastatic::polarize(&chart.phi_jet)
        .map_err(|_| ExpansionError::Starved { needed: order, have: order })?;
    let phase = build_phase(&psi, order - 2)?;
    let tau_r = build_tau(&phase)?;

    let vars3 = ["x", "y", "z"];
    let tau_k = lift_jet(&tau_r, k);
    let rk = tau_k.dim;
    let theta_z_diag = phase.theta_jet.partial("z")?.restrict_diagonal("y", "x")?;
    let s_thz = lift_jet(&theta_z_diag, k);

    let g_xz = chart.g_jet.rename_var("y", "x")?;
    let g_xz_inv = g_xz.inverse()?;
    let g3_yz = embed3(&chart.g_jet, vars3, (1, 2));
    let g3_xz = g_xz.clone();
    let _g3_xz_inv3 = embed3_inv(&g3_xz, vars3)?;
    let g3_yz_self = g3_yz.clone();

    // 𝔰^k(τ)^{−1}: invert after conjugating by Sym^k(e^{φ₀/2}) so the
    // constant solve happens on the Hermitian-balanced operator.
    let phi0 = s_k_lift(&chart.phi_jet.constant_term(), k);
    let c = numerics::expm_hermitian(&phi0.scale(0.5))?;
    let c_inv = numerics::expm_hermitian(&phi0.scale(-0.5))?;
    let tau_balanced = conj_jet(&tau_k, &c, &c_inv);
    let tau_k_inv = conj_jet(&tau_balanced.inverse()?, &c_inv, &c);

    // b_{k,0} and the order-k amplitude equation.
    let b0_jet = s_thz.mul_scalar_jet(&g_xz_inv).scale_re(1.0 / k as f64);
    let thz3 = embed_xz(&s_thz, vars3);
    let a0 = tau_k_inv
        .mul(&thz3)
        .mul_scalar_jet(&embed_xz(&g_xz_inv, vars3))
        .mul_scalar_jet(&g3_yz_self)
        .sub(&MatrixJet::unit(&vars3, tau_k_inv.trunc, rk));
    let roundoff = 1e-12 * tau_k.max_norm().max(1.0);
    let mut a_prev = chop(&a0, roundoff).divide_by_xy("x", "y")?;

    let mut b_jets = vec![b0_jet];
    for _m in 1..=n {
        let daz = a_prev.partial("z")?;
        let b_m = daz
            .restrict_diagonal("y", "x")?
            .mul_scalar_jet(&g_xz_inv.truncate(daz.trunc));
        let a_m = tau_k_inv
            .mul(&embed_xz(&b_m, vars3))
            .mul_scalar_jet(&g3_yz.truncate(daz.trunc))
            .scale_re(k as f64);
        let correction = tau_k_inv.mul(&daz).scale_re(k as f64);
        a_prev = chop(&a_m.sub(&correction), roundoff).divide_by_xy("x", "y")?;
        b_jets.push(b_m);
    }

    let b = b_jets.iter().map(|j| j.constant_term()).collect();
    Ok(CoefficientTable { k, n, b, b_jets })
}

/// Embed an `(x, z)` jet into `(x, y, z)` with `y`-degree zero.
fn embed_xz(j: &MatrixJet, vars: [&str; 3]) -> MatrixJet {
    embed3(j, vars, (0, 2))
}

fn embed3_inv(g_xz: &MatrixJet, vars: [&str; 3]) -> Result<MatrixJet, MatJetError> {
    Ok(embed_xz(&g_xz.inverse()?, vars))
}

/// Drop coefficients below `eps`; keeps the division step from
/// tripping over an all-roundoff jet (exactly-solvable models).
fn chop(j: &MatrixJet, eps: f64) -> MatrixJet {
    let mut out = MatrixJet {
        vars: j.vars.clone(),
        trunc: j.trunc,
        dim: j.dim,
        coeffs: Default::default(),
    };
    for (deg, m) in &j.coeffs {
        if numerics::max_abs(m) >= eps {
            out.set(deg.clone(), m.clone());
        }
    }
    out
}

/// Closed forms at the chart center: `b₀ = 𝔰^k(√−1ΛF)/k` and `b₁` by
/// the five-term curvature display
///
/// `b₁ = −½ g̃⁻¹F̃⁻¹∂₂(F̃)F̃⁻¹∂₁(F̃) + ½ g̃⁻¹F̃⁻¹∂₁∂₂(F̃)
///       + ½ g̃⁻¹F̃⁻¹∂₂(F̃)F̃⁻¹ηF̃ − ½ g̃⁻¹F̃⁻¹η∂₂(F̃) + Scal_ω`,
///
/// asserted against the independent compact form
/// `½ g̃⁻¹∂₂((ΛF)⁻¹ ∂̄*F) + ½ Scal_ω` built from the curvature pack.
pub fn closed_form_b0_b1(chart: &ChartData, k: usize) -> Result<(CMatrix, CMatrix), ExpansionError> {
    if chart.phi_jet.trunc < 5 {
        return Err(ExpansionError::Starved {
            needed: 5,
            have: chart.phi_jet.trunc,
        });
    }
    let pack = curvature_pack(chart)?;
    let f = lift_jet(&pack.f_tilde, k);
    let eta = lift_jet(&pack.eta, k).truncate(f.trunc);
    let rk = f.dim;
    let g_inv = chart.g_jet.inverse()?.truncate(f.trunc);

    let b0 = s_k_lift(&pack.lambda_f.constant_term(), k).scale(1.0 / k as f64);

    let fi = f.inverse()?;
    let f1 = f.partial("y")?;
    let f2 = f.partial("z")?;
    let f12 = f1.partial("z")?;
    let t1 = fi.mul(&f2).mul(&fi).mul(&f1).scale_re(-0.5);
    let t2 = fi.mul(&f12).scale_re(0.5);
    let t3 = fi.mul(&f2).mul(&fi).mul(&eta).mul(&f).scale_re(0.5);
    let t4 = fi.mul(&eta).mul(&f2).scale_re(-0.5);
    let curv_terms = t1.add(&t2).add(&t3).add(&t4).mul_scalar_jet(&g_inv);
    let scal0 = pack.scal.constant_term()[(0, 0)];
    let b1_main = curv_terms.constant_term() + numerics::identity(rk).map(|z| z * scal0);

    // Compact form from the assembled operators of the curvature pack.
    let v = lift_jet(&pack.lambda_f, k);
    let s = lift_jet(&pack.dbar_star_f, k);
    let w = v.inverse()?.mul(&s.truncate(v.trunc));
    let b1_compact = w
        .partial("z")?
        .mul_scalar_jet(&g_inv.truncate(w.trunc - 1))
        .scale_re(0.5)
        .constant_term()
        + numerics::identity(rk).map(|z| z * scal0 * 0.5);

    let defect = numerics::op_norm(&(&b1_main - &b1_compact))?;
    let scale = numerics::op_norm(&b1_main)?.max(1.0);
    if defect > tol::B1_FORMS * scale {
        return Err(ExpansionError::B1Forms { defect });
    }
    Ok((b0, b1_main))
}

/// Norm of the difference between the two printed orderings of the
/// leading `−½` term, `(ΛF)⁻¹ΛΔF` versus `ΛΔF(ΛF)⁻¹`; zero whenever
/// the curvature operator commutes with its Laplacian, nonzero in
/// general, reported rather than silently resolved.
pub fn ordering_discrepancy(chart: &ChartData, k: usize) -> Result<f64, ExpansionError> {
    let pack = curvature_pack(chart)?;
    let v0 = s_k_lift(&pack.lambda_f.constant_term(), k);
    let l0 = s_k_lift(&pack.lambda_laplacian_f.constant_term(), k);
    let v0_inv = v0
        .clone()
        .try_inverse()
        .ok_or(ExpansionError::NotLineBundle(0))?;
    Ok(0.5 * numerics::op_norm(&(&v0_inv * &l0 - &l0 * &v0_inv))?)
}

/// Line-bundle closed forms at the chart center: with `ω′ = √−1F_h`,
/// `b₀ = Λ_ω ω′` and `b₁ = Scal_ω − ½ Λ_ω ω′ · Scal_{ω′}`; the
/// coefficients do not depend on `k`. Also checks the cross-identity
/// `b₀ · Λ_{ω′} ω = 1`.
pub fn line_bundle_b0_b1(chart: &ChartData, _k: usize) -> Result<(f64, f64), ExpansionError> {
    if chart.r != 1 {
        return Err(ExpansionError::NotLineBundle(chart.r));
    }
    let pack = curvature_pack(chart)?;
    let b0 = pack.lambda_f.constant_term()[(0, 0)].re;
    let scal_omega = pack.scal.constant_term()[(0, 0)].re;
    // ω′ has Kähler density F̃, so Scal_{ω′} reuses the density rule.
    let scal_prime =
        crate::geometry::scalar_curvature_of_density(&pack.f_tilde)?.constant_term()[(0, 0)].re;
    let b1 = scal_omega - 0.5 * b0 * scal_prime;

    let lambda_prime_omega = (chart.g_jet.constant_term()[(0, 0)]
        / pack.f_tilde.constant_term()[(0, 0)])
    .re;
    let cross = b0 * lambda_prime_omega;
    if (cross - 1.0).abs() > 1e-10 {
        return Err(ExpansionError::B1Forms {
            defect: (cross - 1.0).abs(),
        });
    }
    Ok((b0, b1))
}

/// Evaluate the truncated local kernel
/// `K_k^(N)(x, y) = conj(e^{𝔰^k ψ(x,ȳ)} b_k^(N)(x,ȳ)) / 2π` with
/// `b_k^(N) = k Σ_{m≤N} b_{k,m}/k^m`, in chart-centered coordinates.
pub fn local_kernel_eval(
    chart: &ChartData,
    k: usize,
    n: usize,
    x: Complex64,
    y: Complex64,
) -> Result<CMatrix, ExpansionError> {
    let xl = x - chart.center;
    let yl = y - chart.center;
    let radius = xl.norm().max(yl.norm());
    if radius > 0.5 {
        return Err(ExpansionError::TrustRadius(radius));
    }
    let table = coeff_recursion(chart, k, n)?;
    let sym = chart.sym_power(k);
    let point = [xl, yl.conj()];
    let psi_mat = sym.phi_jet.evaluate(&point);
    let mut b_eval = CMatrix::zeros(table.b[0].nrows(), table.b[0].ncols());
    for (m, jet) in table.b_jets.iter().enumerate() {
        let weight = (k as f64).powi(1 - m as i32);
        b_eval += jet.evaluate(&point).map(|z| z * weight);
    }
    let val = numerics::expm(&psi_mat)? * b_eval;
    Ok(val.map(|z| z.conj() / (2.0 * std::f64::consts::PI)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{chart_from_model, BundleModel};
    use crate::numerics::{hermitian_eigen, identity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bargmann_fock_chart(order: usize) -> ChartData {
        ChartData {
            r: 1,
            phi_jet: MatrixJet::scalar(&["y", "z"], order, &[(&[1, 1], ONE)]),
            g_jet: MatrixJet::unit(&["y", "z"], order, 1),
            center: c(0.0, 0.0),
        }
    }

    /// Random Hermitian-symmetric potential jet with positive-definite
    /// (1,1) part, rank 2.
    fn random_chart(seed: u64, order: usize) -> ChartData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phi = MatrixJet::zero(&["y", "z"], order, 2);
        for a in 0..=order {
            for b in 0..=a {
                if a + b > order || a + b == 0 {
                    continue;
                }
                let scale = 0.25f64.powi((a + b) as i32 - 1);
                let m = CMatrix::from_fn(2, 2, |_, _| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * scale
                });
                if a == b {
                    let herm = (&m + m.adjoint()).scale(0.5);
                    let mut mm = herm;
                    if a == 1 {
                        // Shift the (1,1) block well into positivity.
                        mm += identity(2).scale(1.5);
                    }
                    phi.set(vec![a, b], mm);
                } else {
                    phi.set(vec![a, b], m.clone());
                    phi.set(vec![b, a], m.adjoint());
                }
            }
        }
        let g = MatrixJet::scalar(
            &["y", "z"],
            order,
            &[
                (&[0, 0], ONE),
                (&[1, 1], c(0.3, 0.0)),
                (&[2, 1], c(0.05, 0.02)),
                (&[1, 2], c(0.05, -0.02)),
            ],
        );
        ChartData {
            r: 2,
            phi_jet: phi,
            g_jet: g,
            center: c(0.0, 0.0),
        }
    }

    #[test]
    fn bargmann_fock_phase_is_linear() {
        let chart = bargmann_fock_chart(8);
        let psi = crate::diastatic::polarize(&chart.phi_jet).unwrap();
        let phase = build_phase(&psi, 6).unwrap();
        // P = z·(x₁ − y).
        let mut expected = MatrixJet::scalar(
            &["x1", "y", "z"],
            phase.p_jet.trunc,
            &[(&[1, 0, 1], ONE), (&[0, 1, 1], -ONE)],
        );
        expected.dim = 1;
        assert!(phase.p_jet.sub(&expected).max_norm() < 1e-12);
        // θ = z, constant in x and y.
        let theta = &phase.theta_jet;
        assert!((theta.coeff(&[0, 0, 1])[(0, 0)] - ONE).norm() < 1e-12);
        assert!(
            theta
                .sub(&MatrixJet::scalar(&["x", "y", "z"], theta.trunc, &[(&[0, 0, 1], ONE)]))
                .max_norm()
                < 1e-12
        );
    }

    #[test]
    fn theta_identity_random_rank2() {
        for seed in [1u64, 7, 23] {
            let chart = random_chart(seed, 8);
            let psi = crate::diastatic::polarize(&chart.phi_jet).unwrap();
            let phase = build_phase(&psi, 6).unwrap();
            let p_as_x = phase.p_jet.rename_var("x1", "x").unwrap();
            let rebuilt = phase
                .theta_jet
                .mul_scalar_jet(&xy_factor(["x", "y", "z"], phase.theta_jet.trunc));
            let defect = rebuilt
                .sub(&p_as_x.truncate(rebuilt.trunc))
                .max_norm();
            assert!(defect < 1e-10, "theta identity defect {defect:.3e}");
        }
    }

    #[test]
    fn tau_bargmann_fock_is_one() {
        let chart = bargmann_fock_chart(8);
        let psi = crate::diastatic::polarize(&chart.phi_jet).unwrap();
        let phase = build_phase(&psi, 6).unwrap();
        let tau = build_tau(&phase).unwrap();
        let unit = MatrixJet::unit(&["x", "y", "z"], tau.trunc, 1);
        assert!(tau.sub(&unit).max_norm() < 1e-11);
    }

    #[test]
    fn tau_origin_matches_curvature() {
        let models = [
            BundleModel::fs_line(2, 0.1),
            BundleModel::twisted_trivial(1, 2, 0.2),
            BundleModel::direct_sum(vec![(2, 0.1), (3, -0.05)]),
        ];
        for model in &models {
            for center in [c(0.0, 0.0), c(0.3, -0.2)] {
                let chart = chart_from_model(model, center, 8).unwrap();
                let psi = crate::diastatic::polarize(&chart.phi_jet).unwrap();
                let phase = build_phase(&psi, 6).unwrap();
                let tau = build_tau(&phase).unwrap();
                let f0 = curvature_pack(&chart).unwrap().f_tilde.constant_term();
                let defect = numerics::max_abs(&(tau.constant_term() - f0));
                assert!(defect < 1e-9, "tau(0,0,0) vs F(0,0): {defect:.3e}");
            }
        }
    }

    #[test]
    fn tau_cross_check_random() {
        // build_tau errors out if the exponential-quotient and
        // ad-series disagree; passing construction is the assertion.
        for seed in [3u64, 11] {
            let chart = random_chart(seed, 8);
            let psi = crate::diastatic::polarize(&chart.phi_jet).unwrap();
            let phase = build_phase(&psi, 6).unwrap();
            build_tau(&phase).unwrap();
        }
    }

    #[test]
    fn recursion_flat_model_terminates() {
        // Bargmann–Fock: b_{k,0} = 1, every later coefficient zero.
        let chart = bargmann_fock_chart(10);
        for k in [1usize, 3, 6] {
            let table = coeff_recursion(&chart, k, 2).unwrap();
            assert!((table.b[0][(0, 0)] - ONE).norm() < 1e-11);
            for m in 1..=2 {
                assert!(
                    numerics::max_abs(&table.b[m]) < 1e-10,
                    "b_{m} should vanish, got {:.3e}",
                    numerics::max_abs(&table.b[m])
                );
            }
        }
    }

    #[test]
    fn recursion_matches_line_bundle_forms() {
        let model = BundleModel::fs_line(2, 0.1);
        for center in [c(0.0, 0.0), c(0.4, 0.25)] {
            let chart = chart_from_model(&model, center, 10).unwrap();
            let (b0, b1) = line_bundle_b0_b1(&chart, 3).unwrap();
            let table = coeff_recursion(&chart, 3, 1).unwrap();
            assert!((table.b[0][(0, 0)].re - b0).abs() < tol::RECURSION_VS_CLOSED);
            assert!(table.b[0][(0, 0)].im.abs() < tol::RECURSION_VS_CLOSED);
            assert!((table.b[1][(0, 0)].re - b1).abs() < tol::RECURSION_VS_CLOSED);
        }
    }

    #[test]
    fn recursion_matches_closed_form_rank2() {
        let model = BundleModel::twisted_trivial(1, 2, 0.2);
        for center in [c(0.0, 0.0), c(0.3, 0.1)] {
            let chart = chart_from_model(&model, center, 10).unwrap();
            for k in 1..=4usize {
                let (b0, b1) = closed_form_b0_b1(&chart, k).unwrap();
                let table = coeff_recursion(&chart, k, 1).unwrap();
                let d0 = numerics::op_norm(&(&table.b[0] - &b0)).unwrap();
                let d1 = numerics::op_norm(&(&table.b[1] - &b1)).unwrap();
                assert!(d0 < tol::RECURSION_VS_CLOSED, "b0 defect {d0:.3e} (k={k})");
                assert!(d1 < tol::RECURSION_VS_CLOSED, "b1 defect {d1:.3e} (k={k})");
            }
        }
    }

    #[test]
    fn recursion_matches_closed_form_random() {
        for seed in [5u64, 19] {
            let chart = random_chart(seed, 10);
            for k in [1usize, 3] {
                let (b0, b1) = closed_form_b0_b1(&chart, k).unwrap();
                let table = coeff_recursion(&chart, k, 1).unwrap();
                let d0 = numerics::op_norm(&(&table.b[0] - &b0)).unwrap();
                let d1 = numerics::op_norm(&(&table.b[1] - &b1)).unwrap();
                assert!(d0 < tol::RECURSION_VS_CLOSED, "b0 defect {d0:.3e}");
                assert!(d1 < tol::RECURSION_VS_CLOSED, "b1 defect {d1:.3e}");
            }
        }
    }

    #[test]
    fn closed_form_bargmann_fock() {
        let chart = bargmann_fock_chart(8);
        let (b0, b1) = closed_form_b0_b1(&chart, 4).unwrap();
        assert!(numerics::max_abs(&(&b0 - identity(1))) < 1e-12);
        assert!(numerics::max_abs(&b1) < 1e-11);
    }

    #[test]
    fn closed_form_hermitian_einstein() {
        // (FS^a)^{⊕2} with the Fubini–Study base metric is
        // Hermitian–Einstein with √−1ΛF = a·I and Scal = 2.
        let model = BundleModel::twisted_trivial(2, 2, 0.0);
        let chart = chart_from_model(&model, c(0.2, -0.1), 8).unwrap();
        for k in [1usize, 2, 3] {
            let rk = k + 1;
            let (b0, b1) = closed_form_b0_b1(&chart, k).unwrap();
            assert!(numerics::max_abs(&(&b0 - identity(rk).scale(2.0))) < 1e-9);
            assert!(numerics::max_abs(&(&b1 - identity(rk))) < 1e-9);
        }
    }

    #[test]
    fn closed_form_direct_sum_blocks() {
        let (d1, e1) = (2u32, 0.1);
        let (d2, e2) = (3u32, -0.05);
        let model = BundleModel::direct_sum(vec![(d1, e1), (d2, e2)]);
        let k = 3usize;
        let center = c(0.15, 0.1);
        let chart = chart_from_model(&model, center, 10).unwrap();
        let (b0, b1) = closed_form_b0_b1(&chart, k).unwrap();

        // Summand oracle: for the composition (i, k−i) the bundle is
        // L₁^i ⊗ L₂^{k−i}; its coefficients come from the line-bundle
        // formulas with combined curvature density i·F̃₁ + (k−i)·F̃₂.
        let chart1 = chart_from_model(&BundleModel::fs_line(d1, e1), center, 10).unwrap();
        let chart2 = chart_from_model(&BundleModel::fs_line(d2, e2), center, 10).unwrap();
        let f1 = curvature_pack(&chart1).unwrap().f_tilde;
        let f2 = curvature_pack(&chart2).unwrap().f_tilde;
        let scal_omega = curvature_pack(&chart1).unwrap().scal.constant_term()[(0, 0)].re;
        let g0 = chart.g_jet.constant_term()[(0, 0)].re;

        let basis = weak_compositions(k, 2);
        for (pos, comp) in basis.indices.iter().enumerate() {
            let (i, j) = (comp.0[0], comp.0[1]);
            let combined = f1.scale_re(i as f64).add(&f2.scale_re(j as f64));
            let lam = combined.constant_term()[(0, 0)].re / g0;
            let scal_prime = crate::geometry::scalar_curvature_of_density(&combined)
                .unwrap()
                .constant_term()[(0, 0)]
                .re;
            let b0_expect = lam / k as f64;
            let b1_expect = scal_omega - 0.5 * lam * scal_prime;
            assert!((b0[(pos, pos)].re - b0_expect).abs() < 1e-9);
            assert!((b1[(pos, pos)].re - b1_expect).abs() < 1e-9);
            // Off-diagonal entries vanish for a direct sum.
            for q in 0..basis.r_k() {
                if q != pos {
                    assert!(b0[(pos, q)].norm() < 1e-10);
                    assert!(b1[(pos, q)].norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn line_bundle_specializes_closed_form() {
        let model = BundleModel::fs_line(3, 0.2);
        let chart = chart_from_model(&model, c(0.1, 0.3), 8).unwrap();
        let (b0s, b1s) = line_bundle_b0_b1(&chart, 2).unwrap();
        let (b0m, b1m) = closed_form_b0_b1(&chart, 2).unwrap();
        assert!((b0m[(0, 0)].re - b0s).abs() < 1e-10);
        assert!((b1m[(0, 0)].re - b1s).abs() < 1e-10);
    }

    #[test]
    fn hermitian_einstein_scalarity() {
        let model = BundleModel::twisted_trivial(2, 2, 0.0);
        let chart = chart_from_model(&model, c(0.1, 0.2), 10).unwrap();
        let table = coeff_recursion(&chart, 3, 3).unwrap();
        for (m, b) in table.b.iter().enumerate() {
            let lead = b[(0, 0)];
            let defect = numerics::max_abs(&(b - identity(b.nrows()).map(|z| z * lead)));
            assert!(defect < 1e-8, "b_{m} not scalar: defect {defect:.3e}");
        }
    }

    #[test]
    fn coefficients_uniform_over_k() {
        let model = BundleModel::twisted_trivial(1, 2, 0.2);
        let chart = chart_from_model(&model, c(0.2, 0.0), 10).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for k in 2..=8usize {
            let table = coeff_recursion(&chart, k, 2).unwrap();
            let m = table
                .b
                .iter()
                .map(|b| numerics::op_norm(b).unwrap())
                .fold(0.0, f64::max);
            lo = lo.min(m);
            hi = hi.max(m);
        }
        assert!(hi / lo < 10.0, "coefficient norms swing {lo:.3e}..{hi:.3e}");
    }

    #[test]
    fn constant_gauge_conjugates_coefficients() {
        // Constant holomorphic frame change h ↦ gᵀ h ḡ sends η, F̃, τ to
        // gᵀ(·)g⁻ᵀ, so every diagonal coefficient transforms by the
        // similarity S = Sym^k(gᵀ): b\' = S b S⁻¹ exactly.
        let model = BundleModel::twisted_trivial(1, 2, 0.2);
        let chart = chart_from_model(&model, c(0.1, -0.2), 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = CMatrix::from_fn(2, 2, |_, _| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 0.3
        });
        let g = identity(2) + a;
        let g_t = g.transpose();
        let g_bar = g.map(|z| z.conj());

        // φ\' = −log(gᵀ e^{−φ} ḡ) as a jet.
        let h_prime = conj_jet(&chart.phi_jet.neg().exp(), &g_t, &g_bar);
        let phi_prime = h_prime.log().unwrap().neg();
        let chart_prime = ChartData {
            r: 2,
            phi_jet: phi_prime,
            g_jet: chart.g_jet.clone(),
            center: chart.center,
        };

        let k = 2usize;
        let s_mat = crate::sympow::sym_pow_matrix(&g_t, k);
        let s_inv = s_mat.clone().try_inverse().unwrap();
        let t0 = coeff_recursion(&chart, k, 1).unwrap();
        let t1 = coeff_recursion(&chart_prime, k, 1).unwrap();
        for m in 0..=1 {
            let expected = &s_mat * &t0.b[m] * &s_inv;
            let defect = numerics::max_abs(&(&t1.b[m] - &expected));
            let scale = numerics::max_abs(&expected).max(1.0);
            assert!(
                defect < 1e-9 * scale,
                "b_{m} not gauge-conjugated: defect {defect:.3e}"
            );
        }
    }

    #[test]
    fn ordering_discrepancy_reports() {
        // Zero in the commuting (line bundle) case, nonzero for the
        // genuinely non-commuting twisted model.
        let line = chart_from_model(&BundleModel::fs_line(2, 0.1), c(0.2, 0.0), 8).unwrap();
        assert!(ordering_discrepancy(&line, 3).unwrap() < 1e-12);
        let twisted =
            chart_from_model(&BundleModel::twisted_trivial(1, 2, 0.4), c(0.3, 0.1), 8).unwrap();
        assert!(ordering_discrepancy(&twisted, 3).unwrap() > 1e-6);
    }

    #[test]
    fn local_kernel_flat_diagonal() {
        let chart = bargmann_fock_chart(10);
        let k = 5usize;
        let x = c(0.2, -0.1);
        let kk = local_kernel_eval(&chart, k, 2, x, x).unwrap();
        let expected = (k as f64) / (2.0 * std::f64::consts::PI)
            * (k as f64 * x.norm_sqr()).exp();
        assert!((kk[(0, 0)].re - expected).abs() < 1e-9 * expected);
        assert!(kk[(0, 0)].im.abs() < 1e-9 * expected);
    }

    #[test]
    fn local_kernel_diagonal_hermitian() {
        // Dressed diagonal kernel e^{−𝔰φ/2} conj(K) e^{−𝔰φ/2}. For a
        // Hermitian–Einstein model every coefficient is scalar and the
        // dressing is exactly Hermitian; in general the k-dependent
        // coefficients are Hermitian only in total, so the defect is of
        // the size of the truncation error and decays like k^{−(N+2)}
        // relative to the kernel.
        let dressed_defect = |model: &BundleModel, k: usize, n: usize| -> f64 {
            let chart = chart_from_model(model, c(0.1, 0.1), 10).unwrap();
            let x = c(0.18, 0.02);
            let kk = local_kernel_eval(&chart, k, n, x, x).unwrap();
            let sym = chart.sym_power(k);
            let xl = x - chart.center;
            let phi = sym.phi_jet.evaluate(&[xl, xl.conj()]);
            let half = numerics::expm_hermitian(&phi.scale(-0.5)).unwrap();
            let dressed = &half * kk.map(|z| z.conj()) * &half;
            numerics::max_abs(&(&dressed - dressed.adjoint()))
                / numerics::max_abs(&dressed).max(1e-300)
        };

        let he = BundleModel::twisted_trivial(2, 2, 0.0);
        assert!(dressed_defect(&he, 3, 1) < 1e-9);

        let twisted = BundleModel::twisted_trivial(1, 2, 0.2);
        let d2 = dressed_defect(&twisted, 2, 2);
        let d4 = dressed_defect(&twisted, 4, 2);
        let d8 = dressed_defect(&twisted, 8, 2);
        assert!(d2 < 1e-2 && d4 < d2 && d8 < d4, "no decay: {d2:.3e} {d4:.3e} {d8:.3e}");
        assert!(d8 < 5e-5, "defect at k=8 too large: {d8:.3e}");
    }

    #[test]
    fn local_kernel_trust_radius() {
        let chart = bargmann_fock_chart(8);
        assert!(matches!(
            local_kernel_eval(&chart, 2, 1, c(0.9, 0.0), c(0.0, 0.0)),
            Err(ExpansionError::TrustRadius(_))
        ));
    }
}

