//! Complex dense linear algebra on top of nalgebra.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::math::sqrt;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const C_ZERO: C64 = C64::new(0.0, 0.0);
pub const C_ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// op(A)·op(B), where op is the adjoint when the flag is set.
pub fn gemm(a: &CMat, adj_a: bool, b: &CMat, adj_b: bool) -> CMat {
    // The kernel has no conjugating mode: adjoints are a conjugated copy read
    // with swapped strides.
    let conj_a = adj_a.then(|| a.map(|x| x.conj()));
    let conj_b = adj_b.then(|| b.map(|x| x.conj()));
    let (pa, pb) = (conj_a.as_ref().unwrap_or(a), conj_b.as_ref().unwrap_or(b));
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let (m, k, rsa, csa) = if adj_a { (ac, ar, ar as isize, 1) } else { (ar, ac, 1, ar as isize) };
    let (k2, n, rsb, csb) = if adj_b { (bc, br, br as isize, 1) } else { (br, bc, 1, br as isize) };
    assert_eq!(k, k2, "gemm: inner dimensions differ");
    let mut out = CMat::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    let std = matrixmultiply::CGemmOption::Standard;
    // SAFETY: Complex<f64> is repr(C) {re, im}, so the column-major buffers are
    // arrays of [f64; 2] with the strides given above, and `out` is m×n.
    unsafe {
        matrixmultiply::zgemm(
            std,
            std,
            m,
            k,
            n,
            [1.0, 0.0],
            pa.as_ptr() as *const [f64; 2],
            rsa,
            csa,
            pb.as_ptr() as *const [f64; 2],
            rsb,
            csb,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    out
}

/// Replaces `a` by (a + aᴴ)/2 so that the result is exactly Hermitian.
pub fn hermitize(a: &mut CMat) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitize needs a square matrix");
    for j in 0..n {
        let d = a[(j, j)].re;
        a[(j, j)] = cr(d);
        for i in (j + 1)..n {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

/// tr(AB) without forming the product.
pub fn tr_mul(a: &CMat, b: &CMat) -> C64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = C_ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Frobenius inner product ⟨A, B⟩ = tr(AᴴB).
pub fn frob_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn frob2(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn vec_norm2(v: &CVec) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Unitary DFT matrix with entries e^{-j2π mn/M}/√M.
pub fn dft_matrix(m: usize) -> CMat {
    let s = 1.0 / sqrt(m as f64);
    CMat::from_fn(m, m, |a, b| {
        let ph = -2.0 * core::f64::consts::PI * ((a * b) % m) as f64 / m as f64;
        C64::from_polar(s, ph)
    })
}

/// Hermitian matrix, stored as a real diagonal whenever that is exact.
#[derive(Clone, Debug, PartialEq)]
pub enum Herm {
    Diag(DVector<f64>),
    Full(CMat),
}

impl Herm {
    pub fn zeros(m: usize, diagonal: bool) -> Self {
        if diagonal {
            Herm::Diag(DVector::zeros(m))
        } else {
            Herm::Full(CMat::zeros(m, m))
        }
    }

    pub fn scaled_identity(m: usize, s: f64) -> Self {
        Herm::Diag(DVector::from_element(m, s))
    }

    /// Wraps a full matrix after exact Hermitian symmetrisation.
    pub fn from_full(mut a: CMat) -> Self {
        hermitize(&mut a);
        Herm::Full(a)
    }

    pub fn dim(&self) -> usize {
        match self {
            Herm::Diag(d) => d.len(),
            Herm::Full(a) => a.nrows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Herm::Diag(_))
    }

    pub fn trace(&self) -> f64 {
        match self {
            Herm::Diag(d) => d.sum(),
            Herm::Full(a) => (0..a.nrows()).map(|i| a[(i, i)].re).sum(),
        }
    }

    pub fn diag(&self) -> DVector<f64> {
        match self {
            Herm::Diag(d) => d.clone(),
            Herm::Full(a) => DVector::from_fn(a.nrows(), |i, _| a[(i, i)].re),
        }
    }

    pub fn diagonal_part(&self) -> Herm {
        Herm::Diag(self.diag())
    }

    pub fn to_full(&self) -> CMat {
        match self {
            Herm::Diag(d) => CMat::from_diagonal(&d.map(cr)),
            Herm::Full(a) => a.clone(),
        }
    }

    pub fn into_full(self) -> CMat {
        match self {
            Herm::Full(a) => a,
            d => d.to_full(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        match self {
            Herm::Diag(d) => *d *= s,
            Herm::Full(a) => *a *= cr(s),
        }
    }

    pub fn scaled(&self, s: f64) -> Herm {
        let mut h = self.clone();
        h.scale(s);
        h
    }

    pub fn add_identity(&mut self, s: f64) {
        match self {
            Herm::Diag(d) => d.add_scalar_mut(s),
            Herm::Full(a) => {
                for i in 0..a.nrows() {
                    a[(i, i)].re += s;
                }
            }
        }
    }

    /// self += s·other.
    pub fn axpy(&mut self, s: f64, other: &Herm) {
        assert_eq!(self.dim(), other.dim());
        match (&mut *self, other) {
            (Herm::Diag(a), Herm::Diag(b)) => a.axpy(s, b, 1.0),
            (Herm::Full(a), Herm::Diag(b)) => {
                for i in 0..b.len() {
                    a[(i, i)].re += s * b[i];
                }
            }
            (Herm::Full(a), Herm::Full(b)) => a.zip_apply(b, |x, y| *x += y * s),
            (Herm::Diag(_), Herm::Full(b)) => {
                let mut full = self.to_full();
                full.zip_apply(b, |x, y| *x += y * s);
                *self = Herm::Full(full);
            }
        }
    }

    pub fn mul_vec(&self, v: &CVec) -> CVec {
        match self {
            Herm::Diag(d) => CVec::from_fn(d.len(), |i, _| v[i] * d[i]),
            Herm::Full(a) => a * v,
        }
    }

    pub fn mul_mat(&self, b: &CMat) -> CMat {
        match self {
            Herm::Diag(d) => CMat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * d[i]),
            Herm::Full(a) => gemm(a, false, b, false),
        }
    }

    /// vᴴ A v (real for Hermitian A).
    pub fn quad(&self, v: &CVec) -> f64 {
        match self {
            Herm::Diag(d) => v.iter().zip(d.iter()).map(|(x, s)| x.norm_sqr() * s).sum(),
            Herm::Full(a) => v.dotc(&(a * v)).re,
        }
    }

    /// tr(AB) for Hermitian A, B (real).
    pub fn tr_mul(&self, other: &Herm) -> f64 {
        match (self, other) {
            (Herm::Diag(a), Herm::Diag(b)) => a.dot(b),
            (Herm::Diag(d), Herm::Full(f)) | (Herm::Full(f), Herm::Diag(d)) => {
                (0..d.len()).map(|i| d[i] * f[(i, i)].re).sum()
            }
            (Herm::Full(a), Herm::Full(b)) => frob_inner(a, b).re,
        }
    }

    pub fn frob2(&self) -> f64 {
        match self {
            Herm::Diag(d) => d.norm_squared(),
            Herm::Full(a) => frob2(a),
        }
    }

    pub fn factor(&self) -> Result<HpdFactor> {
        match self {
            Herm::Diag(d) => HpdFactor::diagonal(d.clone()),
            Herm::Full(a) => HpdFactor::new(a.clone()),
        }
    }
}

/// nalgebra's complex Cholesky takes complex square roots of negative pivots
/// instead of failing, so positivity of the pivots is checked here.
fn checked_cholesky(a: CMat) -> Option<Cholesky<C64, Dyn>> {
    let chol = Cholesky::new(a)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-8 * d.re
    });
    ok.then_some(chol)
}

/// Factorisation of a Hermitian positive-definite matrix.
#[derive(Clone, Debug)]
pub enum HpdFactor {
    Diag(DVector<f64>),
    Chol { chol: Cholesky<C64, Dyn>, jittered: bool },
}

impl HpdFactor {
    pub fn diagonal(d: DVector<f64>) -> Result<Self> {
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "diagonal matrix not positive definite: entry {i} = {v:e}"
            )));
        }
        Ok(HpdFactor::Diag(d))
    }

    /// Cholesky factorisation; on failure retries once with a 1e-12·tr/M diagonal jitter.
    pub fn new(a: CMat) -> Result<Self> {
        let m = a.nrows();
        if a.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::Numerical("non-finite entries in matrix to factorise".into()));
        }
        let tr: f64 = (0..m).map(|i| a[(i, i)].re).sum();
        match checked_cholesky(a.clone()) {
            Some(chol) => Ok(HpdFactor::Chol { chol, jittered: false }),
            None => {
                let jitter = 1e-12 * tr.abs().max(f64::MIN_POSITIVE) / m.max(1) as f64;
                log::warn!("Cholesky failed (M={m}); retrying with diagonal jitter {jitter:e}");
                let mut b = a;
                for i in 0..m {
                    b[(i, i)].re += jitter;
                }
                checked_cholesky(b)
                    .map(|chol| HpdFactor::Chol { chol, jittered: true })
                    .ok_or_else(|| {
                        Error::Numerical(format!(
                            "Hermitian PD factorisation failed after jitter (M={m}, trace={tr:e})"
                        ))
                    })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HpdFactor::Diag(d) => d.len(),
            HpdFactor::Chol { chol, .. } => chol.l_dirty().nrows(),
        }
    }

    pub fn jittered(&self) -> bool {
        matches!(self, HpdFactor::Chol { jittered: true, .. })
    }

    pub fn solve_mut(&self, b: &mut CMat) {
        match self {
            HpdFactor::Diag(d) => {
                for j in 0..b.ncols() {
                    for i in 0..b.nrows() {
                        b[(i, j)] /= d[i];
                    }
                }
            }
            HpdFactor::Chol { chol, .. } => chol.solve_mut(b),
        }
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        let mut x = b.clone();
        self.solve_mut(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &CVec) -> CVec {
        match self {
            HpdFactor::Diag(d) => CVec::from_fn(b.len(), |i, _| b[i] / d[i]),
            HpdFactor::Chol { chol, .. } => chol.solve(b),
        }
    }

    /// L⁻¹B where A = LLᴴ (for a diagonal A, L = A^{1/2}).
    pub fn whiten(&self, b: &CMat) -> CMat {
        match self {
            HpdFactor::Diag(d) => CMat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] / sqrt(d[i])),
            HpdFactor::Chol { chol, .. } => {
                let mut x = b.clone();
                let ok = chol.l_dirty().solve_lower_triangular_mut(&mut x);
                debug_assert!(ok);
                x
            }
        }
    }

    /// L⁻¹ itself, for applying the same whitening to many matrices.
    pub fn whitener(&self) -> CMat {
        let m = self.dim();
        match self {
            HpdFactor::Diag(d) => CMat::from_fn(m, m, |i, j| if i == j { cr(1.0 / sqrt(d[i])) } else { C_ZERO }),
            HpdFactor::Chol { .. } => self.whiten(&CMat::identity(m, m)),
        }
    }

    /// L⁻ᴴB, so that `unwhiten(whiten(B)) = A⁻¹B`.
    pub fn unwhiten(&self, b: &CMat) -> CMat {
        match self {
            HpdFactor::Diag(d) => CMat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] / sqrt(d[i])),
            HpdFactor::Chol { chol, .. } => {
                let mut x = b.clone();
                let ok = chol.l_dirty().ad_solve_lower_triangular_mut(&mut x);
                debug_assert!(ok);
                x
            }
        }
    }

    /// bᴴA⁻¹b.
    pub fn quad_inv(&self, b: &CVec) -> f64 {
        match self {
            HpdFactor::Diag(d) => b.iter().zip(d.iter()).map(|(x, s)| x.norm_sqr() / s).sum(),
            HpdFactor::Chol { chol, .. } => {
                let mut x = b.clone();
                chol.l_dirty().solve_lower_triangular_mut(&mut x);
                vec_norm2(&x)
            }
        }
    }

    pub fn inverse(&self) -> Herm {
        match self {
            HpdFactor::Diag(d) => Herm::Diag(d.map(|x| 1.0 / x)),
            HpdFactor::Chol { chol, .. } => Herm::from_full(chol.inverse()),
        }
    }
}

/// Hermitian eigen-decomposition sorted by decreasing eigenvalue.
pub fn herm_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let m = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m, m, |r, col| eig.eigenvectors[(r, order[col])]);
    (vals, vecs)
}

pub fn herm_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

/// Pivoted (rank-revealing) Cholesky: returns G with A ≈ GGᴴ, stopping once every
/// remaining residual diagonal entry is ≤ rel_tol·max diag(A).
pub fn pivoted_cholesky(a: &Herm, rel_tol: f64) -> CMat {
    match a {
        Herm::Diag(d) => {
            let keep: Vec<usize> = (0..d.len()).filter(|&i| d[i] > 0.0).collect();
            let mut g = CMat::zeros(d.len(), keep.len());
            for (col, &i) in keep.iter().enumerate() {
                g[(i, col)] = cr(sqrt(d[i]));
            }
            g
        }
        Herm::Full(a) => {
            let m = a.nrows();
            let mut resid: Vec<f64> = (0..m).map(|i| a[(i, i)].re).collect();
            let dmax = resid.iter().cloned().fold(0.0, f64::max);
            let tol = rel_tol * dmax;
            let mut cols: Vec<CVec> = Vec::new();
            let mut used = alloc::vec![false; m];
            loop {
                let mut p = usize::MAX;
                let mut best = tol;
                for i in 0..m {
                    if !used[i] && resid[i] > best {
                        best = resid[i];
                        p = i;
                    }
                }
                if p == usize::MAX {
                    break;
                }
                used[p] = true;
                let piv = sqrt(resid[p]);
                let mut g = a.column(p).into_owned();
                for prev in &cols {
                    let s = prev[p].conj();
                    g.axpy(-s, prev, C_ONE);
                }
                g /= cr(piv);
                g[p] = cr(piv);
                for i in 0..m {
                    if used[i] {
                        g[i] = if i == p { g[i] } else { C_ZERO };
                    }
                    resid[i] -= g[i].norm_sqr();
                }
                resid[p] = 0.0;
                cols.push(g);
            }
            let mut g = CMat::zeros(m, cols.len());
            for (j, col) in cols.iter().enumerate() {
                g.set_column(j, col);
            }
            g
        }
    }
}

/// Least squares min ‖b − A x‖₂ over real x via SVD (rank-tolerant).
pub fn real_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * 1e-12 * (a.nrows().max(a.ncols()) as f64);
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}
