//! Bundle models on ℙ¹, local chart jets, and curvature operators.
//!
//! # Convention ledger
//!
//! All curvature bookkeeping in the library follows this table:
//!
//! | quantity | convention |
//! |---|---|
//! | Kähler form | `ω = √−1 g̃ dy∧dȳ` |
//! | metric potential | `h = e^{−φ}`, `H(y,z) = e^{−φ(y,z)}` the polarization |
//! | connection coefficient | `η = ∂₁(H) H^{−1}` |
//! | curvature density | `F̃ = −∂₂(η)`, i.e. `F = F̃ dy∧dȳ` |
//! | contraction | `√−1 Λ F = +g̃^{−1} F̃` (sign pinned by the positivity oracle: Fubini–Study of degree d gives `√−1ΛF = d > 0`) |
//! | scalar curvature | `Scal_ω = −g̃^{−1} ∂₂(∂₁(g̃) g̃^{−1})` (Fubini–Study: 2) |
//! | `∂̄*F` (dy-coefficient) | `∂₁(v) − [η, v]` with `v = g̃^{−1}F̃`, expanded term by term below |
//! | `√−1 Λ Δ F` | `−g̃^{−1}∂₁∂₂(v) + g̃^{−1}η ∂₂(v) − g̃^{−1}∂₂(v) η` |
//!
//! The last three rows carry the sign flips forced by pinning `√−1ΛF`
//! positive; they are cross-validated against the independent closed
//! forms of the expansion coefficients (see the expansion module tests).

use num_complex::Complex64;
use thiserror::Error;

use crate::matjet::{MatJetError, MatrixJet};
use crate::numerics::{self, CMatrix, NumericsError};
use crate::sympow::s_k_lift;
use crate::tol;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("center must be finite (standard affine chart of P^1)")]
    BadCenter,
    #[error("jet order {have} too small for {field} (needs ≥ {needed})")]
    TruncationStarvation {
        field: &'static str,
        needed: usize,
        have: usize,
    },
    #[error("density must be positive; constant term {0:.3e}")]
    NonPositiveDensity(f64),
    #[error("model failed Griffiths positivity sampling: min eigenvalue {0:.3e}")]
    NotGriffithsPositive(f64),
    #[error("bad model parameters: {0}")]
    BadModel(String),
    #[error(transparent)]
    Jet(#[from] MatJetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Kähler form on the base, given through its density `g̃`.
#[derive(Debug, Clone, PartialEq)]
pub enum KahlerModel {
    /// `g̃ = (1+|z|²)^{−2}`; total volume 2π.
    FubiniStudy,
    /// `g̃ ≡ 1`; chart-local only (does not extend to ℙ¹).
    FlatChart,
    /// `g̃ = (1+|z|²)^{−2} · exp(Σ_j c_j u^j)` with `u = |z|²/(1+|z|²)`.
    DensityExpr { coeffs: Vec<f64> },
}

fn default_kahler() -> KahlerModel {
    KahlerModel::FubiniStudy
}

/// A rank-r holomorphic bundle over ℙ¹ with a real-analytic Hermitian
/// metric given in closed form on the standard affine chart.
#[derive(Debug, Clone, PartialEq)]
pub enum BundleKind {
    /// `O(d)` with `h = (1+|z|²)^{−d} e^{−ε·u}`, `u = |z|²/(1+|z|²)`.
    FsLine { d: u32, epsilon: f64 },
    /// Orthogonal direct sum of line models.
    DirectSum { summands: Vec<LineSummand> },
    /// `O(a)^{⊕r}` twisted off-diagonal:
    /// `h = (1+|z|²)^{−a} · exp(ε(wN + w̄N^†))` with `w = z/(1+|z|²)`
    /// and `N` the nilpotent upper shift. The exponential form is the
    /// positivity-preserving correction to `I + ε(wN + w̄N^†)`.
    TwistedTrivial { a: u32, r: usize, epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSummand {
    pub d: u32,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleModel {
    pub kind: BundleKind,
    pub kahler: KahlerModel,
}

impl BundleModel {
    pub fn fs_line(d: u32, epsilon: f64) -> Self {
        BundleModel {
            kind: BundleKind::FsLine { d, epsilon },
            kahler: KahlerModel::FubiniStudy,
        }
    }

    pub fn direct_sum(summands: Vec<(u32, f64)>) -> Self {
        BundleModel {
            kind: BundleKind::DirectSum {
                summands: summands
                    .into_iter()
                    .map(|(d, epsilon)| LineSummand { d, epsilon })
                    .collect(),
            },
            kahler: KahlerModel::FubiniStudy,
        }
    }

    pub fn twisted_trivial(a: u32, r: usize, epsilon: f64) -> Self {
        BundleModel {
            kind: BundleKind::TwistedTrivial { a, r, epsilon },
            kahler: KahlerModel::FubiniStudy,
        }
    }

    /// Parse the model specification JSON. The schema is strict: every
    /// key must be one the chosen `kind` understands.
    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| GeometryError::BadModel(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| GeometryError::BadModel("model must be a JSON object".into()))?;
        let bad = |msg: String| GeometryError::BadModel(msg);
        let kind_name = obj
            .get("kind")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("missing string field \"kind\"".into()))?;
        let allowed: &[&str] = match kind_name {
            "fs_line" => &["kind", "d", "epsilon", "kahler"],
            "direct_sum" => &["kind", "summands", "kahler"],
            "twisted_trivial" => &["kind", "a", "r", "epsilon", "kahler"],
            other => return Err(bad(format!("unknown model kind {other:?}"))),
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(bad(format!("unknown key {key:?} for kind {kind_name:?}")));
            }
        }
        let get_u32 = |key: &str| -> Result<u32, GeometryError> {
            obj.get(key)
                .and_then(|v| v.as_u64())
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| bad(format!("missing or invalid integer field {key:?}")))
        };
        let get_f64_default = |o: &serde_json::Map<String, serde_json::Value>, key: &str| -> Result<f64, GeometryError> {
            match o.get(key) {
                None => Ok(0.0),
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| bad(format!("field {key:?} must be a number"))),
            }
        };
        let kind = match kind_name {
            "fs_line" => BundleKind::FsLine {
                d: get_u32("d")?,
                epsilon: get_f64_default(obj, "epsilon")?,
            },
            "direct_sum" => {
                let list = obj
                    .get("summands")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| bad("missing array field \"summands\"".into()))?;
                let mut summands = Vec::with_capacity(list.len());
                for item in list {
                    let s = item
                        .as_object()
                        .ok_or_else(|| bad("summand must be an object".into()))?;
                    for key in s.keys() {
                        if key != "d" && key != "epsilon" {
                            return Err(bad(format!("unknown summand key {key:?}")));
                        }
                    }
                    let d = s
                        .get("d")
                        .and_then(|v| v.as_u64())
                        .and_then(|v| u32::try_from(v).ok())
                        .ok_or_else(|| bad("summand needs integer \"d\"".into()))?;
                    summands.push(LineSummand {
                        d,
                        epsilon: get_f64_default(s, "epsilon")?,
                    });
                }
                BundleKind::DirectSum { summands }
            }
            "twisted_trivial" => BundleKind::TwistedTrivial {
                a: get_u32("a")?,
                r: obj
                    .get("r")
                    .and_then(|v| v.as_u64())
                    .and_then(|v| usize::try_from(v).ok())
                    .filter(|&r| r >= 1)
                    .ok_or_else(|| bad("missing or invalid integer field \"r\"".into()))?,
                epsilon: get_f64_default(obj, "epsilon")?,
            },
            _ => unreachable!(),
        };
        let kahler = match obj.get("kahler") {
            None => default_kahler(),
            Some(v) => {
                let k = v
                    .as_object()
                    .ok_or_else(|| bad("\"kahler\" must be an object".into()))?;
                let kk = k
                    .get("kind")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| bad("kahler needs a string \"kind\"".into()))?;
                let k_allowed: &[&str] = match kk {
                    "fubini_study" | "flat_chart" => &["kind"],
                    "density_expr" => &["kind", "coeffs"],
                    other => return Err(bad(format!("unknown kahler kind {other:?}"))),
                };
                for key in k.keys() {
                    if !k_allowed.contains(&key.as_str()) {
                        return Err(bad(format!("unknown kahler key {key:?}")));
                    }
                }
                match kk {
                    "fubini_study" => KahlerModel::FubiniStudy,
                    "flat_chart" => KahlerModel::FlatChart,
                    "density_expr" => {
                        let coeffs = k
                            .get("coeffs")
                            .and_then(|v| v.as_array())
                            .ok_or_else(|| bad("density_expr needs \"coeffs\"".into()))?
                            .iter()
                            .map(|v| {
                                v.as_f64()
                                    .ok_or_else(|| bad("coeffs must be numbers".into()))
                            })
                            .collect::<Result<Vec<f64>, _>>()?;
                        KahlerModel::DensityExpr { coeffs }
                    }
                    _ => unreachable!(),
                }
            }
        };
        Ok(BundleModel { kind, kahler })
    }

    pub fn rank(&self) -> usize {
        match &self.kind {
            BundleKind::FsLine { .. } => 1,
            BundleKind::DirectSum { summands } => summands.len(),
            BundleKind::TwistedTrivial { r, .. } => *r,
        }
    }

    /// Degree of det E; the line-bundle degree per summand sums up.
    pub fn degree(&self) -> i64 {
        match &self.kind {
            BundleKind::FsLine { d, .. } => *d as i64,
            BundleKind::DirectSum { summands } => summands.iter().map(|s| s.d as i64).sum(),
            BundleKind::TwistedTrivial { a, r, .. } => *a as i64 * *r as i64,
        }
    }

    /// Closed-form metric matrix at a chart point.
    pub fn metric_at(&self, z: Complex64) -> CMatrix {
        let q = 1.0 + z.norm_sqr();
        match &self.kind {
            BundleKind::FsLine { d, epsilon } => {
                let u = z.norm_sqr() / q;
                CMatrix::from_element(
                    1,
                    1,
                    Complex64::new(q.powi(-(*d as i32)) * (-epsilon * u).exp(), 0.0),
                )
            }
            BundleKind::DirectSum { summands } => {
                let n = summands.len();
                let mut m = CMatrix::zeros(n, n);
                for (i, s) in summands.iter().enumerate() {
                    let u = z.norm_sqr() / q;
                    m[(i, i)] = Complex64::new(
                        q.powi(-(s.d as i32)) * (-s.epsilon * u).exp(),
                        0.0,
                    );
                }
                m
            }
            BundleKind::TwistedTrivial { a, r, epsilon } => {
                let w = z / q;
                let n = nilpotent_shift(*r);
                let arg = (n.map(|x| x * w * epsilon) + n.adjoint().map(|x| x * w.conj() * epsilon))
                    .map(|x| x);
                let h = numerics::expm_hermitian(&arg).expect("finite Hermitian argument");
                h.scale(q.powi(-(*a as i32)))
            }
        }
    }

    /// Closed-form Kähler density at a chart point.
    pub fn density_at(&self, z: Complex64) -> f64 {
        let q = 1.0 + z.norm_sqr();
        match &self.kahler {
            KahlerModel::FubiniStudy => q.powi(-2),
            KahlerModel::FlatChart => 1.0,
            KahlerModel::DensityExpr { coeffs } => {
                let u = z.norm_sqr() / q;
                let expo: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * u.powi(j as i32 + 1))
                    .sum();
                q.powi(-2) * expo.exp()
            }
        }
    }
}

/// Upper-shift nilpotent: ones on the superdiagonal.
pub fn nilpotent_shift(r: usize) -> CMatrix {
    CMatrix::from_fn(r, r, |i, j| {
        if j == i + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Local data at a chart center: the potential jet `φ(y, z)` (with `z`
/// standing for `ȳ` as an independent formal variable) and the Kähler
/// density jet `g̃(y, z)`, both truncated at the requested order.
#[derive(Debug, Clone)]
pub struct ChartData {
    pub r: usize,
    pub phi_jet: MatrixJet,
    pub g_jet: MatrixJet,
    pub center: Complex64,
}

impl ChartData {
    /// Polarized metric `H(y, z) = e^{−φ(y,z)}`.
    pub fn h_jet(&self) -> MatrixJet {
        self.phi_jet.neg().exp()
    }

    /// Entrywise conjugate-pair check of real-analyticity: the
    /// coefficient at `y^a z^b` must be the adjoint of the one at
    /// `y^b z^a`.
    pub fn is_hermitian_symmetric(&self, rel: f64) -> bool {
        let scale = self.phi_jet.max_norm().max(1.0);
        for (deg, m) in &self.phi_jet.coeffs {
            let swapped = vec![deg[1], deg[0]];
            let other = self.phi_jet.coeff(&swapped);
            if numerics::max_abs(&(m - other.adjoint())) > rel * scale {
                return false;
            }
        }
        true
    }

    /// Coefficientwise `𝔰^k` lift: the potential jet of `Sym^k h`
    /// (legitimate because `𝔰^k` is linear in the matrix).
    pub fn sym_power(&self, k: usize) -> ChartData {
        let rk = crate::sympow::weak_compositions(k, self.r).r_k();
        let mut phi = MatrixJet::zero(&["y", "z"], self.phi_jet.trunc, rk);
        for (deg, m) in &self.phi_jet.coeffs {
            phi.set(deg.clone(), s_k_lift(m, k));
        }
        ChartData {
            r: rk,
            phi_jet: phi,
            g_jet: self.g_jet.clone(),
            center: self.center,
        }
    }
}

/// Scalar jet of `(c + y)(c̄ + z)`, the polarization of `|ζ|²` recentered
/// at `c`.
fn abs_sq_jet(c: Complex64, trunc: usize) -> MatrixJet {
    MatrixJet::scalar(
        &["y", "z"],
        trunc,
        &[
            (&[0, 0], c * c.conj()),
            (&[1, 0], c.conj()),
            (&[0, 1], c),
            (&[1, 1], Complex64::new(1.0, 0.0)),
        ],
    )
}

/// `s · M` for a scalar jet `s` and a constant matrix.
fn scalar_times_matrix(s: &MatrixJet, m: &CMatrix) -> MatrixJet {
    assert_eq!(s.dim, 1);
    let mut out = MatrixJet {
        vars: s.vars.clone(),
        trunc: s.trunc,
        dim: m.nrows(),
        coeffs: Default::default(),
    };
    for (deg, c) in &s.coeffs {
        out.set(deg.clone(), m.map(|x| x * c[(0, 0)]));
    }
    out
}

/// Jets of the model's `φ = −log h` and `g̃` at a finite chart center.
pub fn chart_from_model(
    model: &BundleModel,
    center: Complex64,
    order: usize,
) -> Result<ChartData, GeometryError> {
    if !center.re.is_finite() || !center.im.is_finite() {
        return Err(GeometryError::BadCenter);
    }
    let t = abs_sq_jet(center, order);
    let one = MatrixJet::unit(&["y", "z"], order, 1);
    let one_plus_t = one.add(&t);
    let log1pt = one_plus_t.log()?;
    // u = t/(1+t), the global perturbation coordinate.
    let u = t.mul(&one_plus_t.inverse()?);

    let line_phi = |d: u32, epsilon: f64| -> Result<MatrixJet, GeometryError> {
        Ok(log1pt.scale_re(d as f64).add(&u.scale_re(epsilon)))
    };

    let phi_jet = match &model.kind {
        BundleKind::FsLine { d, epsilon } => line_phi(*d, *epsilon)?,
        BundleKind::DirectSum { summands } => {
            if summands.is_empty() {
                return Err(GeometryError::BadModel("empty direct sum".into()));
            }
            let n = summands.len();
            let mut phi = MatrixJet::zero(&["y", "z"], order, n);
            for (i, s) in summands.iter().enumerate() {
                let block = line_phi(s.d, s.epsilon)?;
                for (deg, c) in &block.coeffs {
                    let mut m = phi.coeff(deg);
                    m[(i, i)] += c[(0, 0)];
                    phi.set(deg.clone(), m);
                }
            }
            phi
        }
        BundleKind::TwistedTrivial { a, r, epsilon } => {
            if *r == 0 {
                return Err(GeometryError::BadModel("rank must be positive".into()));
            }
            let n = nilpotent_shift(*r);
            // w = ζ/(1+|ζ|²) polarizes to (c+y)/(1+t); w̄ to (c̄+z)/(1+t).
            let c_plus_y = MatrixJet::scalar(
                &["y", "z"],
                order,
                &[(&[0, 0], center), (&[1, 0], Complex64::new(1.0, 0.0))],
            );
            let cbar_plus_z = MatrixJet::scalar(
                &["y", "z"],
                order,
                &[(&[0, 0], center.conj()), (&[0, 1], Complex64::new(1.0, 0.0))],
            );
            let inv = one_plus_t.inverse()?;
            let w = c_plus_y.mul(&inv);
            let wbar = cbar_plus_z.mul(&inv);
            let twist = scalar_times_matrix(&w, &n)
                .add(&scalar_times_matrix(&wbar, &n.adjoint()))
                .scale_re(*epsilon);
            let diag = log1pt.broadcast(*r).scale_re(*a as f64);
            diag.sub(&twist)
        }
    };

    let g_jet = match &model.kahler {
        KahlerModel::FubiniStudy => one_plus_t.inverse()?.mul(&one_plus_t.inverse()?),
        KahlerModel::FlatChart => one.clone(),
        KahlerModel::DensityExpr { coeffs } => {
            let fs = one_plus_t.inverse()?.mul(&one_plus_t.inverse()?);
            let mut expo = MatrixJet::zero(&["y", "z"], order, 1);
            let mut u_pow = u.clone();
            for c in coeffs {
                expo = expo.add(&u_pow.scale_re(*c));
                u_pow = u_pow.mul(&u);
            }
            fs.mul(&expo.exp())
        }
    };

    let chart = ChartData {
        r: model.rank(),
        phi_jet,
        g_jet,
        center,
    };
    debug_assert!(chart.is_hermitian_symmetric(1e-9));
    Ok(chart)
}

/// The curvature operators of the convention ledger, as jets in `(y, z)`.
#[derive(Debug, Clone)]
pub struct CurvaturePack {
    /// `F̃ = −∂₂(∂₁(H)H^{−1})`.
    pub f_tilde: MatrixJet,
    /// `√−1ΛF = g̃^{−1}F̃`.
    pub lambda_f: MatrixJet,
    /// `√−1ΛΔF` (vanishes for Hermitian–Einstein metrics).
    pub lambda_laplacian_f: MatrixJet,
    /// The `dy`-coefficient of `∂̄*F`.
    pub dbar_star_f: MatrixJet,
    /// `Scal_ω`, scalar.
    pub scal: MatrixJet,
    /// `η = ∂₁(H)H^{−1}`.
    pub eta: MatrixJet,
}

/// `−g̃^{−1}∂₂(∂₁(g̃)g̃^{−1})`.
pub fn scalar_curvature_of_density(g_jet: &MatrixJet) -> Result<MatrixJet, GeometryError> {
    let g0 = g_jet.constant_term()[(0, 0)];
    if g0.re <= 0.0 || g0.im.abs() > 1e-12 * g0.re.abs().max(1.0) {
        return Err(GeometryError::NonPositiveDensity(g0.re));
    }
    let g_inv = g_jet.inverse()?;
    let inner = g_jet.partial("y")?.mul(&g_inv.truncate(g_jet.trunc - 1));
    Ok(inner
        .partial("z")?
        .mul(&g_inv.truncate(inner.trunc - 1))
        .neg())
}

/// All curvature operators from a chart. Consumes jet orders: the pack
/// entries end at chart order minus 3 (two holomorphic and two
/// antiholomorphic derivatives in the deepest term).
pub fn curvature_pack(chart: &ChartData) -> Result<CurvaturePack, GeometryError> {
    if chart.phi_jet.trunc < 3 {
        return Err(GeometryError::TruncationStarvation {
            field: "curvature_pack",
            needed: 3,
            have: chart.phi_jet.trunc,
        });
    }
    let h = chart.h_jet();
    let h_inv = h.inverse()?;
    let eta = h.partial("y")?.mul(&h_inv.truncate(h.trunc - 1));
    let f_tilde = eta.partial("z")?.neg();

    let n = f_tilde.trunc;
    let g = chart.g_jet.truncate(n);
    let g_inv = g.inverse()?;
    let v = f_tilde.mul_scalar_jet(&g_inv);
    let eta_n = eta.truncate(n);

    // ∂̄*F = ∂₁(v) − [η, v] against dy.
    let dv = v.partial("y")?;
    let comm = eta_n.truncate(n - 1).mul(&v.truncate(n - 1)).sub(
        &v.truncate(n - 1).mul(&eta_n.truncate(n - 1)),
    );
    let dbar_star_f = dv.sub(&comm);

    // √−1ΛΔF = −g̃^{−1}∂₁∂₂(v) + g̃^{−1}η∂₂(v) − g̃^{−1}∂₂(v)η.
    let dzv = v.partial("z")?;
    let d12v = dzv.partial("y")?;
    let m = d12v.trunc;
    let lambda_laplacian_f = d12v
        .neg()
        .add(&eta_n.truncate(m).mul(&dzv.truncate(m)))
        .sub(&dzv.truncate(m).mul(&eta_n.truncate(m)))
        .mul_scalar_jet(&g_inv.truncate(m));

    let scal = scalar_curvature_of_density(&chart.g_jet)?;

    Ok(CurvaturePack {
        f_tilde,
        lambda_f: v,
        lambda_laplacian_f,
        dbar_star_f,
        scal,
        eta,
    })
}

/// Minimum over a stereographic grid of the smallest eigenvalue of the
/// Hermitian-symmetrized curvature operator `h^{1/2} (√−1ΛF) h^{−1/2}`;
/// Griffiths positivity of the model means this stays above
/// [`tol::GRIFFITHS_MIN`].
pub fn griffiths_min(model: &BundleModel, grid: usize) -> Result<f64, GeometryError> {
    let mut min = f64::INFINITY;
    for i in 0..grid {
        for j in 0..grid {
            // u ∈ (0,1) covers the sphere radially; ρ = √(u/(1−u)).
            let u = (i as f64 + 0.5) / grid as f64;
            let angle = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / grid as f64;
            let rho = (u / (1.0 - u)).sqrt();
            let z = Complex64::from_polar(rho, angle);
            let chart = chart_from_model(model, z, 3)?;
            let pack = curvature_pack(&chart)?;
            let v0 = pack.lambda_f.constant_term();
            let h0 = model.metric_at(z);
            let h_half = numerics::hermitian_map(&h0, f64::sqrt)?;
            let h_half_inv = numerics::hermitian_map(&h0, |x| 1.0 / x.sqrt())?;
            let conj = &h_half_inv * v0 * h_half;
            let sym = (&conj + conj.adjoint()).scale(0.5);
            let lam = numerics::hermitian_eigen(&sym)?.eigenvalues[0];
            min = min.min(lam);
        }
    }
    Ok(min)
}

/// Construct-and-check entry point: parse checks plus the sampled
/// Griffiths positivity gate on a 64×64 grid.
pub fn validate_model(model: &BundleModel) -> Result<(), GeometryError> {
    let min = griffiths_min(model, 64)?;
    if min <= tol::GRIFFITHS_MIN {
        return Err(GeometryError::NotGriffithsPositive(min));
    }
    Ok(())
}
