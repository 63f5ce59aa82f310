//! The symmetric-power functor on a rank-`r` complex vector space:
//! multi-index bases, `Sym^k` of linear maps and metrics, and the
//! Lie-algebra lift `𝔰^k` with its sparse entry rule.
//!
//! The orthonormal-style frame throughout is `u_n = e^n / √(n!)` for
//! multi-indices `n` with `|n| = k`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::numerics::{cholesky, CMatrix, NumericsError};

/// Exponent vector of a degree-`k` monomial in `r` slots.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    /// `n! = Π n_i!` as a float (exact for the sizes in play).
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&p| (1..=p).map(|j| j as f64).product::<f64>())
            .product()
    }
}

/// The fixed ordered basis of `Sym^k C^r`. Every `r_k`-dimensional object
/// in the library indexes against this order; never re-enumerate locally.
#[derive(Debug, Clone)]
pub struct SymBasis {
    pub r: usize,
    pub k: usize,
    pub indices: Vec<MultiIndex>,
}

impl SymBasis {
    pub fn r_k(&self) -> usize {
        self.indices.len()
    }

    pub fn position(&self, n: &MultiIndex) -> Option<usize> {
        self.indices.iter().position(|m| m == n)
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for j in 0..k.min(n - k) {
        acc = acc * (n - j) / (j + 1);
    }
    acc
}

/// All weak compositions of `k` into `r` parts, first slot weighted
/// heaviest first: `(k,0,…,0)` down to `(0,…,0,k)`.
pub fn weak_compositions(k: usize, r: usize) -> SymBasis {
    assert!(r >= 1, "need at least one slot");
    let mut indices = Vec::with_capacity(binomial(k + r - 1, r - 1));
    let mut cur = vec![0usize; r];
    fn rec(slot: usize, remaining: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if slot + 1 == cur.len() {
            cur[slot] = remaining;
            out.push(MultiIndex(cur.clone()));
            return;
        }
        for v in (0..=remaining).rev() {
            cur[slot] = v;
            rec(slot + 1, remaining - v, cur, out);
        }
    }
    rec(0, k, &mut cur, &mut indices);
    debug_assert_eq!(indices.len(), binomial(k + r - 1, r - 1));
    SymBasis { r, k, indices }
}

/// Sparse polynomial in the slots `e_1 … e_r`, used for the multinomial
/// expansion behind `Sym^k A`.
type Poly = BTreeMap<Vec<usize>, Complex64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let m: Vec<usize> = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
            *out.entry(m).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
        }
    }
    out
}

/// Matrix of `Sym^k A` on `Sym^k C^r` in the `u_n` frame, by expanding
/// `Π_j (A e_j)^{n_j}` into monomials. Defined for every `A`, including
/// singular ones.
pub fn sym_pow_matrix(a: &CMatrix, k: usize) -> CMatrix {
    assert!(a.is_square(), "Sym^k needs a square matrix");
    let r = a.nrows();
    let basis = weak_compositions(k, r);
    let rk = basis.r_k();
    // Images A e_j as degree-1 polynomials.
    let columns: Vec<Poly> = (0..r)
        .map(|j| {
            let mut p = Poly::new();
            for i in 0..r {
                let c = a[(i, j)];
                if c != Complex64::new(0.0, 0.0) {
                    let mut m = vec![0usize; r];
                    m[i] = 1;
                    p.insert(m, c);
                }
            }
            p
        })
        .collect();
    let mut out = CMatrix::zeros(rk, rk);
    for (col, n) in basis.indices.iter().enumerate() {
        let mut prod = Poly::new();
        prod.insert(vec![0usize; r], Complex64::new(1.0, 0.0));
        for (j, &mult) in n.0.iter().enumerate() {
            for _ in 0..mult {
                prod = poly_mul(&prod, &columns[j]);
            }
        }
        let n_fact = n.factorial();
        for (m, c) in &prod {
            let mi = MultiIndex(m.clone());
            let row = basis.position(&mi).expect("degree is preserved");
            // e^n = √(n!) u_n, so the u-frame entry picks up √(m!/n!).
            out[(row, col)] = c * Complex64::new((mi.factorial() / n_fact).sqrt(), 0.0);
        }
    }
    out
}

/// The Lie-algebra lift `𝔰^k(M) = d/dt|₀ Sym^k(e^{tM})`, built by its
/// sparse entry rule:
///
/// * diagonal: `[n, n] = Σ_i n_i M_{ii}`;
/// * off-diagonal: `[f_{ij}(n), n] = √((n_i+1) n_j) · M_{ij}` where
///   `f_{ij}` moves one unit from slot `j` to slot `i`.
pub fn s_k_lift(m: &CMatrix, k: usize) -> CMatrix {
    assert!(m.is_square(), "𝔰^k needs a square matrix");
    let r = m.nrows();
    let basis = weak_compositions(k, r);
    let rk = basis.r_k();
    let mut out = CMatrix::zeros(rk, rk);
    for (col, n) in basis.indices.iter().enumerate() {
        let mut diag = Complex64::new(0.0, 0.0);
        for i in 0..r {
            diag += m[(i, i)] * n.0[i] as f64;
        }
        out[(col, col)] = diag;
        for i in 0..r {
            for j in 0..r {
                if i == j || n.0[j] == 0 {
                    continue;
                }
                let mut shifted = n.0.clone();
                shifted[i] += 1;
                shifted[j] -= 1;
                let row = basis.position(&MultiIndex(shifted)).unwrap();
                let weight = (((n.0[i] + 1) * n.0[j]) as f64).sqrt();
                out[(row, col)] += m[(i, j)] * weight;
            }
        }
    }
    out
}

/// `Sym^k` of a Hermitian positive definite metric matrix; rejects
/// non-PD input up front.
pub fn sym_pow_metric(h: &CMatrix, k: usize) -> Result<CMatrix, NumericsError> {
    cholesky(h)?;
    Ok(sym_pow_matrix(h, k))
}
