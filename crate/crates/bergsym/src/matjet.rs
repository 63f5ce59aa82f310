//! Truncated multivariate formal power series with square-matrix
//! coefficients: the ring arithmetic, inverses, exp/log, formal partial
//! derivatives, segment averaging, and exact division by `(x − y)`.
//!
//! Variables are carried by name; substitution-style operations match on
//! names, never on position.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::{self, CMatrix, NumericsError};
use crate::tol;

#[derive(Debug, Error)]
pub enum MatJetError {
    #[error("jet shape mismatch: vars {vars_a:?} dim {dim_a} vs vars {vars_b:?} dim {dim_b}")]
    ShapeMismatch {
        vars_a: Vec<String>,
        vars_b: Vec<String>,
        dim_a: usize,
        dim_b: usize,
    },
    #[error("no variable named {0:?} in jet")]
    NoSuchVariable(String),
    #[error("constant term is singular (condition estimate {cond:.3e})")]
    SingularConstant { cond: f64 },
    #[error("not divisible by (x - y): coefficient at degree {degree:?} has norm {norm:.3e} (tolerance {tol:.3e})")]
    NotDivisible {
        degree: Vec<usize>,
        norm: f64,
        tol: f64,
    },
    #[error("jet log did not converge; truncation bug (residual {residual:.3e})")]
    LogNoConvergence { residual: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A matrix-coefficient power series truncated at total degree `trunc`.
/// Absent degrees are zero. Coefficients are `dim × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixJet {
    pub vars: Vec<String>,
    pub trunc: usize,
    pub dim: usize,
    pub coeffs: BTreeMap<Vec<usize>, CMatrix>,
}

fn vnames(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

impl MatrixJet {
    pub fn zero(vars: &[&str], trunc: usize, dim: usize) -> Self {
        MatrixJet {
            vars: vnames(vars),
            trunc,
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    /// Constant jet with the given matrix as degree-0 coefficient.
    pub fn constant(vars: &[&str], trunc: usize, m: CMatrix) -> Self {
        assert!(m.is_square());
        let dim = m.nrows();
        let mut jet = Self::zero(vars, trunc, dim);
        jet.set(vec![0; jet.vars.len()], m);
        jet
    }

    /// Multiplicative unit: identity matrix at degree zero.
    pub fn unit(vars: &[&str], trunc: usize, dim: usize) -> Self {
        Self::constant(vars, trunc, numerics::identity(dim))
    }

    /// Single monomial `m · x^deg`.
    pub fn monomial(vars: &[&str], trunc: usize, deg: &[usize], m: CMatrix) -> Self {
        assert_eq!(deg.len(), vars.len());
        assert!(deg.iter().sum::<usize>() <= trunc);
        let dim = m.nrows();
        let mut jet = Self::zero(vars, trunc, dim);
        jet.set(deg.to_vec(), m);
        jet
    }

    /// Scalar (1×1) jet from complex coefficients.
    pub fn scalar(vars: &[&str], trunc: usize, coeffs: &[(&[usize], Complex64)]) -> Self {
        let mut jet = Self::zero(vars, trunc, 1);
        for (deg, c) in coeffs {
            jet.set(deg.to_vec(), CMatrix::from_element(1, 1, *c));
        }
        jet
    }

    pub fn set(&mut self, deg: Vec<usize>, m: CMatrix) {
        assert_eq!(deg.len(), self.vars.len());
        assert_eq!(m.nrows(), self.dim);
        if deg.iter().sum::<usize>() > self.trunc {
            return;
        }
        if numerics::max_abs(&m) == 0.0 {
            self.coeffs.remove(&deg);
        } else {
            self.coeffs.insert(deg, m);
        }
    }

    pub fn coeff(&self, deg: &[usize]) -> CMatrix {
        self.coeffs
            .get(deg)
            .cloned()
            .unwrap_or_else(|| CMatrix::zeros(self.dim, self.dim))
    }

    pub fn constant_term(&self) -> CMatrix {
        self.coeff(&vec![0; self.vars.len()])
    }

    pub fn var_index(&self, name: &str) -> Result<usize, MatJetError> {
        self.vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| MatJetError::NoSuchVariable(name.to_string()))
    }

    /// Largest coefficient entry across all degrees.
    pub fn max_norm(&self) -> f64 {
        self.coeffs
            .values()
            .map(numerics::max_abs)
            .fold(0.0, f64::max)
    }

    fn check_shape(&self, other: &Self) -> Result<(), MatJetError> {
        if self.vars != other.vars || self.dim != other.dim {
            return Err(MatJetError::ShapeMismatch {
                vars_a: self.vars.clone(),
                vars_b: other.vars.clone(),
                dim_a: self.dim,
                dim_b: other.dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_shape(other).unwrap();
        let trunc = self.trunc.min(other.trunc);
        let mut out = Self::zero_like(self, trunc);
        for (deg, m) in self.coeffs.iter().chain(other.coeffs.iter()) {
            if deg.iter().sum::<usize>() > trunc {
                continue;
            }
            let cur = out.coeff(deg);
            out.set(deg.clone(), cur + m);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map_coeffs(|m| -m)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map_coeffs(|m| m.map(|z| z * c))
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    fn map_coeffs(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let mut out = self.clone();
        for m in out.coeffs.values_mut() {
            *m = f(m);
        }
        out
    }

    fn zero_like(j: &Self, trunc: usize) -> Self {
        MatrixJet {
            vars: j.vars.clone(),
            trunc,
            dim: j.dim,
            coeffs: BTreeMap::new(),
        }
    }

    /// Cauchy product; order-respecting for non-commuting coefficients.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_shape(other).unwrap();
        let trunc = self.trunc.min(other.trunc);
        let mut out = Self::zero_like(self, trunc);
        for (da, ma) in &self.coeffs {
            let sa: usize = da.iter().sum();
            if sa > trunc {
                continue;
            }
            for (db, mb) in &other.coeffs {
                let sb: usize = db.iter().sum();
                if sa + sb > trunc {
                    continue;
                }
                let deg: Vec<usize> = da.iter().zip(db).map(|(a, b)| a + b).collect();
                let cur = out.coeff(&deg);
                out.set(deg, cur + ma * mb);
            }
        }
        out
    }

    /// Multiply by a scalar (1×1) jet on the left.
    pub fn mul_scalar_jet(&self, s: &MatrixJet) -> Self {
        assert_eq!(s.dim, 1);
        assert_eq!(s.vars, self.vars);
        self.mul_broadcast(s)
    }

    fn mul_broadcast(&self, s: &MatrixJet) -> Self {
        let trunc = self.trunc.min(s.trunc);
        let mut out = Self::zero_like(self, trunc);
        for (da, ma) in &self.coeffs {
            for (db, mb) in &s.coeffs {
                let deg: Vec<usize> = da.iter().zip(db).map(|(a, b)| a + b).collect();
                if deg.iter().sum::<usize>() > trunc {
                    continue;
                }
                let cur = out.coeff(&deg);
                out.set(deg, cur + ma.scale(1.0).map(|z| z * mb[(0, 0)]));
            }
        }
        out
    }

    /// Promote a scalar jet to `c · I_dim`.
    pub fn broadcast(&self, dim: usize) -> Self {
        assert_eq!(self.dim, 1);
        let mut out = MatrixJet {
            vars: self.vars.clone(),
            trunc: self.trunc,
            dim,
            coeffs: BTreeMap::new(),
        };
        for (deg, m) in &self.coeffs {
            out.set(deg.clone(), numerics::identity(dim).map(|z| z * m[(0, 0)]));
        }
        out
    }

    pub fn truncate(&self, trunc: usize) -> Self {
        let mut out = Self::zero_like(self, trunc);
        for (deg, m) in &self.coeffs {
            if deg.iter().sum::<usize>() <= trunc {
                out.set(deg.clone(), m.clone());
            }
        }
        out
    }

    /// Entrywise adjoint of each coefficient (no variable conjugation).
    pub fn adjoint_coeffs(&self) -> Self {
        self.map_coeffs(|m| m.adjoint())
    }

    /// Evaluate at a point, coordinates in stored variable order.
    pub fn evaluate(&self, point: &[Complex64]) -> CMatrix {
        assert_eq!(point.len(), self.vars.len());
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (deg, m) in &self.coeffs {
            let mut w = Complex64::new(1.0, 0.0);
            for (d, p) in deg.iter().zip(point) {
                for _ in 0..*d {
                    w *= p;
                }
            }
            out += m.map(|z| z * w);
        }
        out
    }

    /// Multiplicative inverse through order `trunc`; needs an invertible
    /// constant term.
    pub fn inverse(&self) -> Result<Self, MatJetError> {
        let a0 = self.constant_term();
        let b0 = a0.clone().try_inverse().ok_or_else(|| {
            let cond = numerics::op_norm(&a0).unwrap_or(f64::INFINITY);
            MatJetError::SingularConstant { cond }
        })?;
        let cond_est =
            numerics::op_norm(&a0).unwrap_or(0.0) * numerics::op_norm(&b0).unwrap_or(0.0);
        if !cond_est.is_finite() || cond_est > 1e15 {
            return Err(MatJetError::SingularConstant { cond: cond_est });
        }
        let nv = self.vars.len();
        let mut inv = Self::zero_like(self, self.trunc);
        inv.set(vec![0; nv], b0.clone());
        // B_γ = −B₀ Σ_{α<γ} A_{γ−α} B_α, by increasing total degree.
        for total in 1..=self.trunc {
            for gamma in degrees_of_total(total, nv) {
                let mut acc = CMatrix::zeros(self.dim, self.dim);
                for (alpha, b_alpha) in inv.coeffs.clone() {
                    if alpha == gamma || !leq(&alpha, &gamma) {
                        continue;
                    }
                    let diff: Vec<usize> =
                        gamma.iter().zip(&alpha).map(|(g, a)| g - a).collect();
                    if let Some(a_diff) = self.coeffs.get(&diff) {
                        acc += a_diff * b_alpha;
                    }
                }
                let val = -&b0 * acc;
                inv.set(gamma, val);
            }
        }
        Ok(inv)
    }

    /// Exponential in the jet ring by scaling-and-squaring plus Taylor
    /// series; the term loop stops below [`tol::SERIES_TERM_REL`]
    /// relative coefficient norm.
    pub fn exp(&self) -> Self {
        let norm = self.max_norm();
        let mut s = 0u32;
        while norm / f64::powi(2.0, s as i32) > 0.5 {
            s += 1;
        }
        let b = self.scale_re(1.0 / f64::powi(2.0, s as i32));
        let nv = self.vars.len();
        let mut sum = Self::unit(
            &self.vars.iter().map(String::as_str).collect::<Vec<_>>(),
            self.trunc,
            self.dim,
        );
        let mut term = sum.clone();
        let _ = nv;
        for j in 1..300 {
            term = term.mul(&b).scale_re(1.0 / j as f64);
            sum = sum.add(&term);
            if term.max_norm() < tol::SERIES_TERM_REL * sum.max_norm() {
                break;
            }
        }
        for _ in 0..s {
            sum = sum.mul(&sum);
        }
        sum
    }

    /// Principal logarithm in the jet ring: matrix log of the constant
    /// term, then Newton iteration on `exp(L) = J` with the
    /// Bernoulli-series inverse differential. Corrections are strictly
    /// order-increasing, so `trunc + 2` doublings always suffice.
    pub fn log(&self) -> Result<Self, MatJetError> {
        let l0 = numerics::logm_principal(&self.constant_term())?;
        let vars: Vec<&str> = self.vars.iter().map(String::as_str).collect();
        let mut l = Self::constant(&vars, self.trunc, l0);
        let unit = Self::unit(&vars, self.trunc, self.dim);
        let scale = self.max_norm().max(1.0);
        let mut residual = f64::INFINITY;
        for _ in 0..(2 * self.trunc + 10) {
            let e = l.exp();
            let eps = e.inverse()?.mul(self).sub(&unit);
            residual = eps.max_norm();
            if residual < 1e-13 * scale {
                return Ok(l);
            }
            l = l.add(&dexp_inverse(&l, &eps));
        }
        Err(MatJetError::LogNoConvergence { residual })
    }

    /// Formal partial derivative; truncation order drops by one.
    pub fn partial(&self, var: &str) -> Result<Self, MatJetError> {
        let idx = self.var_index(var)?;
        let mut out = Self::zero_like(self, self.trunc.saturating_sub(1));
        for (deg, m) in &self.coeffs {
            if deg[idx] == 0 {
                continue;
            }
            let mut d = deg.clone();
            d[idx] -= 1;
            let cur = out.coeff(&d);
            out.set(d, cur + m.scale(deg[idx] as f64));
        }
        Ok(out)
    }

    /// Rename a variable in place (no reordering).
    pub fn rename_var(&self, from: &str, to: &str) -> Result<Self, MatJetError> {
        let idx = self.var_index(from)?;
        let mut out = self.clone();
        out.vars[idx] = to.to_string();
        out
            .var_index(to)
            .expect("renamed variable must exist");
        Ok(out)
    }

    /// Substitute `var ↦ Σ_i c_i · var_i` (a linear form in this jet's
    /// own variables, given by name).
    pub fn substitute_linear(
        &self,
        var: &str,
        combo: &[(&str, Complex64)],
    ) -> Result<Self, MatJetError> {
        let idx = self.var_index(var)?;
        let combo_idx: Vec<(usize, Complex64)> = combo
            .iter()
            .map(|(name, c)| Ok((self.var_index(name)?, *c)))
            .collect::<Result<_, MatJetError>>()?;
        let mut out = Self::zero_like(self, self.trunc);
        for (deg, m) in &self.coeffs {
            let a = deg[idx];
            let mut base = deg.clone();
            base[idx] = 0;
            // Expand (Σ c_i x_i)^a multinomially via repeated products.
            let mut expansion: BTreeMap<Vec<usize>, Complex64> = BTreeMap::new();
            expansion.insert(vec![0; deg.len()], Complex64::new(1.0, 0.0));
            for _ in 0..a {
                let mut next: BTreeMap<Vec<usize>, Complex64> = BTreeMap::new();
                for (d, c) in &expansion {
                    for (i, ci) in &combo_idx {
                        let mut nd = d.clone();
                        nd[*i] += 1;
                        *next.entry(nd).or_insert(Complex64::new(0.0, 0.0)) += c * ci;
                    }
                }
                expansion = next;
            }
            for (d, c) in expansion {
                let total: Vec<usize> = base.iter().zip(&d).map(|(b, e)| b + e).collect();
                if total.iter().sum::<usize>() > self.trunc {
                    continue;
                }
                let cur = out.coeff(&total);
                out.set(total, cur + m.map(|z| z * c));
            }
        }
        Ok(out)
    }

    /// For a jet in `(x₁, y, z, …)`: substitute `x₁ ↦ t·x + (1−t)·y` and
    /// integrate `t` over `[0, 1]`. The first variable is renamed to
    /// `new_first`; the monomial rule is
    /// `x₁^a ↦ (x^a + x^{a−1}y + … + y^a)/(a+1)`.
    pub fn segment_average(&self, second: &str, new_first: &str) -> Result<Self, MatJetError> {
        let yi = self.var_index(second)?;
        assert_ne!(yi, 0, "second variable must differ from the first");
        let mut out = Self::zero_like(self, self.trunc);
        out.vars[0] = new_first.to_string();
        for (deg, m) in &self.coeffs {
            let a = deg[0];
            let scaled = m.scale(1.0 / (a + 1) as f64);
            for j in 0..=a {
                let mut d = deg.clone();
                d[0] = j;
                d[yi] += a - j;
                let cur = out.coeff(&d);
                out.set(d, cur + &scaled);
            }
        }
        Ok(out)
    }

    /// Divide by `(x − y)` a jet that vanishes on `{y = x}`: rewrite in
    /// `w = y − x`, check the `w⁰` block is negligible, shift the `w`
    /// exponent down and negate, rewrite back.
    pub fn divide_by_xy(&self, x: &str, y: &str) -> Result<Self, MatJetError> {
        let xi = self.var_index(x)?;
        let yi = self.var_index(y)?;
        // y ↦ x + w, reusing the y slot as w.
        let in_w = self.substitute_linear(
            y,
            &[(x, Complex64::new(1.0, 0.0)), (y, Complex64::new(1.0, 0.0))],
        )?;
        let divide_tol = tol::DIVIDE_REL * self.max_norm().max(1e-300);
        let mut shifted = Self::zero_like(self, self.trunc);
        for (deg, m) in &in_w.coeffs {
            if deg[yi] == 0 {
                let norm = numerics::max_abs(m);
                if norm >= divide_tol {
                    return Err(MatJetError::NotDivisible {
                        degree: deg.clone(),
                        norm,
                        tol: divide_tol,
                    });
                }
                continue;
            }
            let mut d = deg.clone();
            d[yi] -= 1;
            // (x − y) = −w.
            shifted.set(d, -m);
        }
        let _ = xi;
        // w ↦ y − x.
        shifted.substitute_linear(
            y,
            &[(y, Complex64::new(1.0, 0.0)), (x, Complex64::new(-1.0, 0.0))],
        )
    }

    /// Collapse `from` into `to` (set `from = to`), dropping the merged
    /// variable from the jet.
    pub fn restrict_diagonal(&self, from: &str, to: &str) -> Result<Self, MatJetError> {
        let fi = self.var_index(from)?;
        let ti = self.var_index(to)?;
        assert_ne!(fi, ti);
        let mut vars = self.vars.clone();
        vars.remove(fi);
        let mut out = MatrixJet {
            vars,
            trunc: self.trunc,
            dim: self.dim,
            coeffs: BTreeMap::new(),
        };
        for (deg, m) in &self.coeffs {
            let mut d = deg.clone();
            let moved = d.remove(fi);
            let ti_new = if ti > fi { ti - 1 } else { ti };
            d[ti_new] += moved;
            let cur = out.coeff(&d);
            out.set(d, cur + m);
        }
        Ok(out)
    }

    /// One line per stored degree: `deg=(a,b,c) norm=… matrix=[[…]]`,
    /// in the stable coefficient order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (deg, m) in &self.coeffs {
            let degs: Vec<String> = deg.iter().map(|d| d.to_string()).collect();
            let _ = write!(s, "deg=({}) norm={:.6e} matrix=[", degs.join(","), numerics::max_abs(m));
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|j| format!("{:+.6e}{:+.6e}i", m[(i, j)].re, m[(i, j)].im))
                    .collect();
                let _ = write!(s, "[{}]", row.join(", "));
                if i + 1 < m.nrows() {
                    s.push_str(", ");
                }
            }
            s.push_str("]\n");
        }
        s
    }
}

fn leq(a: &[usize], b: &[usize]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// All degree vectors in `nv` variables with the given total.
fn degrees_of_total(total: usize, nv: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; nv];
    fn rec(slot: usize, remaining: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot + 1 == cur.len() {
            cur[slot] = remaining;
            out.push(cur.clone());
            return;
        }
        for v in 0..=remaining {
            cur[slot] = v;
            rec(slot + 1, remaining - v, cur, out);
        }
    }
    rec(0, total, &mut cur, &mut out);
    out
}

/// Inverse differential of exp at `l` applied to `eps`:
/// `Σ_n B_n⁺/n! · ad_l^n(eps)` with the plus-convention Bernoulli
/// numbers. `eps` has no constant term, so each Newton step gains order.
fn dexp_inverse(l: &MatrixJet, eps: &MatrixJet) -> MatrixJet {
    const BERNOULLI_PLUS: [f64; 16] = [
        1.0,
        0.5,
        1.0 / 6.0,
        0.0,
        -1.0 / 30.0,
        0.0,
        1.0 / 42.0,
        0.0,
        -1.0 / 30.0,
        0.0,
        5.0 / 66.0,
        0.0,
        -691.0 / 2730.0,
        0.0,
        7.0 / 6.0,
        0.0,
    ];
    let mut acc = eps.scale_re(BERNOULLI_PLUS[0]);
    let mut ad = eps.clone();
    let mut factorial = 1.0;
    for (n, &b) in BERNOULLI_PLUS.iter().enumerate().skip(1) {
        ad = l.mul(&ad).sub(&ad.mul(l));
        factorial *= n as f64;
        if b != 0.0 {
            acc = acc.add(&ad.scale_re(b / factorial));
        }
        if ad.max_norm() / factorial < 1e-18 * eps.max_norm().max(1e-300) {
            break;
        }
    }
    acc
}
