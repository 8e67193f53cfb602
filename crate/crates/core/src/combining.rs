//! Receive combiners and duality-based transmit precoders.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::estimation::{BsStatistics, Estimator};
use crate::linalg::{cr, gemm, herm_eigenvalues, CMat, Herm, HpdFactor, C64};

/// Condition-number cap for ZF's Gram matrix.
pub const ZF_COND_CAP: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Scheme {
    Mr,
    Zf,
    Smmse,
    Mmmse,
    MmmseEw,
    Obe,
    Dobe,
}

impl Scheme {
    pub const ALL: [Scheme; 7] =
        [Scheme::Mr, Scheme::Zf, Scheme::Smmse, Scheme::Mmmse, Scheme::MmmseEw, Scheme::Obe, Scheme::Dobe];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Mr => "mr",
            Scheme::Zf => "zf",
            Scheme::Smmse => "smmse",
            Scheme::Mmmse => "mmmse",
            Scheme::MmmseEw => "mmmse-ew",
            Scheme::Obe => "obe",
            Scheme::Dobe => "dobe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown scheme '{s}' (expected mr, zf, smmse, mmmse, mmmse-ew, obe or dobe)"))
        })
    }

    /// Estimator a scheme is tied to, if any.
    pub fn required_estimator(self) -> Option<Estimator> {
        match self {
            Scheme::MmmseEw => Some(Estimator::EwMmse),
            Scheme::Obe | Scheme::Dobe => Some(Estimator::Ls),
            _ => None,
        }
    }

    /// Whether the combiner needs estimates of the other cells' UEs.
    pub fn needs_all_estimates(self) -> bool {
        matches!(self, Scheme::Mmmse | Scheme::MmmseEw)
    }
}

pub fn mr(hhat_own: &CMat) -> CMat {
    hhat_own.clone()
}

/// V = Ĥ(ĤᴴĤ)⁻¹.
pub fn zf(hhat_own: &CMat, cell: usize) -> Result<CMat> {
    let (m, k) = hhat_own.shape();
    if k > m {
        return Err(Error::RankDeficient { cell, cond: f64::INFINITY });
    }
    let g = hhat_own.adjoint() * hhat_own;
    let ev = herm_eigenvalues(&g);
    let (hi, lo) = (ev[0], ev[k - 1]);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= ZF_COND_CAP) {
        return Err(Error::RankDeficient { cell, cond });
    }
    let f = HpdFactor::new(g)?;
    Ok(f.solve(&hhat_own.adjoint()).adjoint())
}

/// Factored regularising matrix (Z, Z̄ or S) of an MMSE-type combiner.
#[derive(Clone, Debug)]
pub struct Regularizer {
    pub z: Herm,
    pub factor: HpdFactor,
}

impl Regularizer {
    pub fn new(z: Herm) -> Result<Self> {
        let factor = z.factor()?;
        Ok(Regularizer { z, factor })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveRoute {
    Auto,
    Direct,
    Woodbury,
}

/// (ĤĤᴴ + Z)⁻¹ Ĥ[:, targets], one factorisation shared by all target columns.
pub fn mmse_type(hhat: &CMat, targets: Range<usize>, reg: &Regularizer, route: SolveRoute) -> Result<CMat> {
    let (m, n) = hhat.shape();
    let woodbury = match route {
        SolveRoute::Direct => false,
        SolveRoute::Woodbury => true,
        SolveRoute::Auto => reg.z.is_diagonal() || (n as f64) < 0.4 * m as f64,
    };
    if woodbury {
        // With Z = LLᴴ and W = L⁻¹Ĥ: (ĤĤᴴ+Z)⁻¹Ĥ = L⁻ᴴ W (I + WᴴW)⁻¹.
        let w = reg.factor.whiten(hhat);
        let mut g = gemm(&w, true, &w, false);
        for i in 0..n {
            g[(i, i)] += cr(1.0);
        }
        let gf = HpdFactor::new(g)?;
        let rhs = CMat::from_fn(n, targets.len(), |r, c| if r == targets.start + c { cr(1.0) } else { cr(0.0) });
        let x = gf.solve(&rhs);
        Ok(reg.factor.unwhiten(&gemm(&w, false, &x, false)))
    } else {
        let mut a = reg.z.to_full();
        a += gemm(hhat, false, hhat, true);
        let f = HpdFactor::new(a)?;
        Ok(f.solve(&hhat.columns(targets.start, targets.len()).into_owned()))
    }
}

/// Multicell MMSE: regularised by Z_j over the estimates of all L·K UEs.
pub fn m_mmse(hhat_all: &CMat, j: usize, k: usize, z: &Regularizer) -> Result<CMat> {
    mmse_type(hhat_all, j * k..(j + 1) * k, z, SolveRoute::Auto)
}

/// Single-cell MMSE: own-cell estimates only, regularised by Z̄_j.
pub fn s_mmse(hhat_own: &CMat, zbar: &Regularizer) -> Result<CMat> {
    mmse_type(hhat_own, 0..hhat_own.ncols(), zbar, SolveRoute::Auto)
}

/// M-MMSE structure on element-wise estimates, regularised by S_j.
pub fn m_mmse_ew(hhat_ew_all: &CMat, j: usize, k: usize, s: &Regularizer) -> Result<CMat> {
    m_mmse(hhat_ew_all, j, k, s)
}

/// U_j = Σ_{l,i} R_li + (σ²/ρ) I.
pub fn u_matrix(stats: &BsStatistics) -> Herm {
    let diagonal = stats.r.iter().all(|r| r.is_diagonal());
    let mut u = Herm::zeros(stats.m(), diagonal);
    for r in &stats.r {
        u.axpy(1.0, r.herm());
    }
    u.add_identity(stats.sigma2_over_rho);
    u
}

/// Z_j = Σ_{l,i} (error term) + (σ²/ρ) I for the given estimator.
pub fn z_matrix(stats: &BsStatistics, est: Estimator) -> Herm {
    let terms: Vec<Herm> = (0..stats.n_users()).map(|u| stats.error_term(est, u)).collect();
    let diagonal = terms.iter().all(|t| t.is_diagonal());
    let mut z = Herm::zeros(stats.m(), diagonal);
    for t in &terms {
        z.axpy(1.0, t);
    }
    z.add_identity(stats.sigma2_over_rho);
    z
}

/// Z̄_j: own-cell error terms plus the full inter-cell statistics (their
/// diagonals under EW-MMSE) plus (σ²/ρ) I.
pub fn zbar_matrix(stats: &BsStatistics, est: Estimator) -> Herm {
    let (j, k) = (stats.j, stats.k);
    let mut terms: Vec<Herm> = Vec::with_capacity(stats.n_users());
    for u in 0..stats.n_users() {
        if u / k == j {
            terms.push(stats.error_term(est, u));
        } else if est == Estimator::EwMmse {
            terms.push(stats.r[u].herm().diagonal_part());
        } else {
            terms.push(stats.r[u].herm().clone());
        }
    }
    let diagonal = terms.iter().all(|t| t.is_diagonal());
    let mut z = Herm::zeros(stats.m(), diagonal);
    for t in &terms {
        z.axpy(1.0, t);
    }
    z.add_identity(stats.sigma2_over_rho);
    z
}

/// Statistics-only OBE matrices of one BS: v_jk = Σ_jk·(LS despread of UE k).
#[derive(Clone, Debug)]
pub struct ObeMatrices {
    pub sigma: Vec<CMat>,
    pub alpha: Vec<Vec<C64>>,
    pub cells: Vec<usize>,
}

/// Γ with [Γ]_{li} = tr(R_ik Q⁻¹ R_lk U⁻¹) over the pilot-sharing cells, and
/// α = (Γ + I)⁻¹ e_j.
pub fn obe_coefficients(stats: &BsStatistics, u_factor: &HpdFactor, k: usize) -> Result<(Vec<usize>, CMat, Vec<C64>)> {
    let j = stats.j;
    let p = stats.pilot_of[j * stats.k + k];
    let cells: Vec<usize> = stats.users_of_pilot[p].iter().map(|&u| u / stats.k).collect();
    let qf = &stats.q_factor[p];
    let x: Vec<CMat> = cells.iter().map(|&l| qf.solve(&stats.r[l * stats.k + k].to_full())).collect();
    let y: Vec<CMat> = cells.iter().map(|&l| u_factor.solve(&stats.r[l * stats.k + k].to_full())).collect();
    let n = cells.len();
    // tr(R_ik Q⁻¹ R_lk U⁻¹) = tr(X_l Y_i) with X_l = Q⁻¹R_lk, Y_i = U⁻¹R_ik.
    let gamma = CMat::from_fn(n, n, |l, i| x[l].iter().zip(y[i].transpose().iter()).map(|(a, b)| a * b).sum());
    let mut g = gamma.clone();
    for i in 0..n {
        g[(i, i)] += cr(1.0);
    }
    let pos = cells.iter().position(|&l| l == j).expect("a cell shares its own pilots");
    let e = crate::linalg::CVec::from_fn(n, |i, _| if i == pos { cr(1.0) } else { cr(0.0) });
    let lu = g.lu();
    let alpha = lu.solve(&e).ok_or_else(|| Error::Numerical("singular Γ + I in OBE".into()))?;
    Ok((cells, gamma, alpha.iter().copied().collect()))
}

/// Σ_jk = U⁻¹(Σ_l α_l R_lk)Q⁻¹ for every UE of cell j. `diag_only` replaces all
/// statistics by their diagonals (D-OBE).
pub fn obe_precompute(stats: &BsStatistics, diag_only: bool) -> Result<ObeMatrices> {
    let dview;
    let stats = if diag_only && !stats.is_diagonal() {
        dview = stats.diagonal();
        &dview
    } else {
        stats
    };
    let u_factor = u_matrix(stats).factor()?;
    let mut sigma = Vec::with_capacity(stats.k);
    let mut alphas = Vec::with_capacity(stats.k);
    let mut cells = Vec::new();
    for k in 0..stats.k {
        let (c, _, alpha) = obe_coefficients(stats, &u_factor, k)?;
        let m = stats.m();
        let mut t = CMat::zeros(m, m);
        for (&l, &a) in c.iter().zip(alpha.iter()) {
            t += stats.r[l * stats.k + k].herm().to_full() * a;
        }
        let p = stats.pilot_of[stats.j * stats.k + k];
        // T Q⁻¹ = (Q⁻¹ Tᴴ)ᴴ since Q is Hermitian.
        let tq = stats.q_factor[p].solve(&t.adjoint()).adjoint();
        sigma.push(u_factor.solve(&tq));
        alphas.push(alpha);
        cells = c;
    }
    Ok(ObeMatrices { sigma, alpha: alphas, cells })
}

/// OBE combiners from the LS estimates (despread vectors) of the own cell.
pub fn obe(m: &ObeMatrices, ls_own: &CMat) -> CMat {
    let mut v = CMat::zeros(ls_own.nrows(), ls_own.ncols());
    for (k, s) in m.sigma.iter().enumerate() {
        v.set_column(k, &(s * ls_own.column(k)));
    }
    v
}

/// w = v/‖v‖ per column.
pub fn duality_precoder(v: &CMat) -> Result<CMat> {
    let mut w = v.clone();
    for (k, mut col) in w.column_iter_mut().enumerate() {
        let n = col.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Numerical(format!("cannot normalise zero combiner column {k}")));
        }
        col /= cr(n);
    }
    Ok(w)
}

/// Statistical quantities one BS needs for its combiners in one drop.
#[derive(Clone, Debug)]
pub struct StatisticalPrecomp {
    pub z: Option<Regularizer>,
    pub zbar: Option<Regularizer>,
    pub obe: Option<ObeMatrices>,
    pub dobe: Option<ObeMatrices>,
}

impl StatisticalPrecomp {
    pub fn new(stats: &BsStatistics, est: Estimator, schemes: &[Scheme]) -> Result<Self> {
        let need = |s: Scheme| schemes.contains(&s);
        let z = if need(Scheme::Mmmse) || need(Scheme::MmmseEw) { Some(Regularizer::new(z_matrix(stats, est))?) } else { None };
        let zbar = if need(Scheme::Smmse) { Some(Regularizer::new(zbar_matrix(stats, est))?) } else { None };
        let obe = if need(Scheme::Obe) { Some(obe_precompute(stats, false)?) } else { None };
        let dobe = if need(Scheme::Dobe) { Some(obe_precompute(stats, true)?) } else { None };
        Ok(StatisticalPrecomp { z, zbar, obe, dobe })
    }

    /// Combiners of cell j's UEs from the estimates of one block.
    pub fn combine(&self, scheme: Scheme, hhat: &CMat, j: usize, k: usize) -> Result<CMat> {
        let own = || hhat.columns(j * k, k).into_owned();
        let missing = || Error::Config(format!("statistics for scheme {} were not precomputed", scheme.name()));
        match scheme {
            Scheme::Mr => Ok(mr(&own())),
            Scheme::Zf => zf(&own(), j),
            Scheme::Smmse => s_mmse(&own(), self.zbar.as_ref().ok_or_else(missing)?),
            Scheme::Mmmse | Scheme::MmmseEw => m_mmse(hhat, j, k, self.z.as_ref().ok_or_else(missing)?),
            Scheme::Obe => Ok(obe(self.obe.as_ref().ok_or_else(missing)?, &own())),
            Scheme::Dobe => Ok(obe(self.dobe.as_ref().ok_or_else(missing)?, &own())),
        }
    }
}

/// Instantaneous effective SINR of combiner v given the estimates:
/// |vᴴĥ_t|² / vᴴ(Σ_{u≠t} ĥ_uĥ_uᴴ + Z)v, with Z in units of σ²/ρ.
pub fn instantaneous_sinr(v: &crate::linalg::CVec, hhat: &CMat, target: usize, z: &Herm) -> f64 {
    let num = (v.adjoint() * hhat.column(target))[(0, 0)].norm_sqr();
    let mut den = z.quad(v);
    for u in 0..hhat.ncols() {
        if u != target {
            den += (v.adjoint() * hhat.column(u))[(0, 0)].norm_sqr();
        }
    }
    num / den
}
