//! Estimation of the second-order statistics themselves: sample correlation
//! matrices with shrinkage, the circulant (DFT) approximation, the individual-R
//! methods (R direct, via Q, random phase, pilot switching) and the coherence
//! budget.
//!
//! All observations are despread vectors in the normalised convention of
//! [`crate::pilots::despread`], so a sample matrix estimates Q directly.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::BsStatistics;
use crate::linalg::{cr, frob2, herm_eigen, hermitize, pivoted_cholesky, CMat, Herm, HpdFactor, C64};
use crate::math::{floor, sqrt};
use crate::pilots::PilotPlan;
use crate::rng::{cn, cn_mat};
use crate::spatial::{circulant_average, CorrelationMatrix, Repair};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcqMethod {
    Sample,
    Regularized,
    Dft,
    RDirect,
    ViaQ,
    RandomPhase,
    PilotSwitch,
}

impl AcqMethod {
    pub fn name(self) -> &'static str {
        match self {
            AcqMethod::Sample => "sample",
            AcqMethod::Regularized => "regularized",
            AcqMethod::Dft => "dft",
            AcqMethod::RDirect => "r-direct",
            AcqMethod::ViaQ => "via-q",
            AcqMethod::RandomPhase => "random-phase",
            AcqMethod::PilotSwitch => "pilot-switch",
        }
    }
}

/// An acquired matrix. `estimate` is Hermitian but may be indefinite until
/// [`AcquisitionResult::repaired`] is called.
#[derive(Clone, Debug)]
pub struct AcquisitionResult {
    pub method: AcqMethod,
    pub estimate: CMat,
    pub n: usize,
    pub n_r: Option<usize>,
    pub eta: f64,
    pub nmse: Option<f64>,
}

impl AcquisitionResult {
    pub fn new(method: AcqMethod, estimate: CMat, n: usize) -> Self {
        AcquisitionResult { method, estimate, n, n_r: None, eta: 1.0, nmse: None }
    }

    pub fn scored(mut self, truth: &CMat) -> Result<Self> {
        self.nmse = Some(nmse_matrix(truth, &self.estimate)?);
        Ok(self)
    }

    pub fn repaired(&self) -> (CorrelationMatrix, Repair) {
        let (r, rep) = CorrelationMatrix::new_with_report(self.estimate.clone());
        if rep.clipped_trace > 0.0 {
            log::debug!(
                "{} estimate: clipped {:.3e} of negative eigenvalue mass",
                self.method.name(),
                rep.clipped_trace
            );
        }
        (r, rep)
    }
}

/// (1/N)·Σ y yᴴ over the columns of `obs` (M×N).
pub fn sample_q(obs: &CMat) -> Result<CMat> {
    let n = obs.ncols();
    if n == 0 {
        return Err(Error::Domain("sample correlation needs at least one observation".into()));
    }
    let mut s = obs * obs.adjoint() / cr(n as f64);
    hermitize(&mut s);
    Ok(s)
}

/// Sample correlation of N i.i.d. CN(0, FFᴴ) vectors, drawn in O(M³)
/// regardless of N through the Bartlett decomposition of the complex Wishart
/// law when N ≥ rank(F).
pub fn sample_wishart<R: Rng + ?Sized>(factor: &CMat, n: usize, rng: &mut R) -> Result<CMat> {
    if n == 0 {
        return Err(Error::Domain("sample correlation needs at least one observation".into()));
    }
    let r = factor.ncols();
    let g = if n >= r {
        let mut l = CMat::zeros(r, r);
        for i in 0..r {
            let gamma = Gamma::new((n - i) as f64, 1.0).map_err(|e| Error::Numerical(format!("{e}")))?;
            l[(i, i)] = cr(sqrt(gamma.sample(rng)));
            for j in 0..i {
                l[(i, j)] = cn(rng);
            }
        }
        factor * l
    } else {
        factor * cn_mat(rng, r, n)
    };
    let mut s = &g * g.adjoint() / cr(n as f64);
    hermitize(&mut s);
    Ok(s)
}

/// Sample correlation of N draws from CN(0, Q).
pub fn sample_from_truth<R: Rng + ?Sized>(q: &Herm, n: usize, rng: &mut R) -> Result<CMat> {
    sample_wishart(&pivoted_cholesky(q, 1e-13), n, rng)
}

/// η·Q̂ + (1−η)·diag(Q̂).
pub fn shrink(q: &CMat, eta: f64) -> Result<CMat> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("shrinkage weight must lie in [0, 1], got {eta}")));
    }
    let mut out = q * cr(eta);
    for i in 0..q.nrows() {
        out[(i, i)] = q[(i, i)];
    }
    Ok(out)
}

/// ‖truth − estimate‖²_F / ‖truth‖²_F.
pub fn nmse_matrix(truth: &CMat, estimate: &CMat) -> Result<f64> {
    if truth.shape() != estimate.shape() {
        return Err(Error::Domain("nmse needs matrices of equal shape".into()));
    }
    let den = frob2(truth);
    if den == 0.0 {
        return Err(Error::Domain("nmse of a zero matrix is undefined".into()));
    }
    Ok(frob2(&(truth - estimate)) / den)
}

pub fn nmse_diag(truth: &CMat, estimate: &CMat) -> Result<f64> {
    let t = CMat::from_diagonal(&truth.diagonal());
    let e = CMat::from_diagonal(&estimate.diagonal());
    nmse_matrix(&t, &e)
}

pub fn default_eta_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Grid minimiser of NMSE(η); ties go to the smaller η.
pub fn tune_eta(qhat: &CMat, truth: &CMat, grid: &[f64]) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &eta in grid {
        let e = nmse_matrix(truth, &shrink(qhat, eta)?)?;
        match best {
            Some((_, b)) if e >= b => {}
            _ => best = Some((eta, e)),
        }
    }
    best.ok_or_else(|| Error::Domain("empty shrinkage grid".into()))
}

/// Exact minimiser of the quadratic NMSE(η) over [0, 1].
pub fn eta_vertex(qhat: &CMat, truth: &CMat) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..qhat.ncols() {
        for i in 0..qhat.nrows() {
            if i != j {
                num += (qhat[(i, j)].conj() * truth[(i, j)]).re;
                den += qhat[(i, j)].norm_sqr();
            }
        }
    }
    if den == 0.0 {
        return 0.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// F·diag(FᴴQ̂F)·Fᴴ.
pub fn dft_q_estimate(qhat: &CMat) -> CMat {
    circulant_average(qhat)
}

/// Sample correlation of contamination-free despreads minus the known noise
/// level, optionally shrunk.
pub fn estimate_r_direct(clean: &CMat, noise: f64, eta: Option<f64>) -> Result<AcquisitionResult> {
    let n_r = clean.ncols();
    if n_r == 0 {
        return Err(Error::Domain("R direct needs N_R ≥ 1 clean observations".into()));
    }
    r_direct_from_sample(sample_q(clean)?, n_r, noise, eta)
}

pub fn r_direct_from_sample(mut s: CMat, n_r: usize, noise: f64, eta: Option<f64>) -> Result<AcquisitionResult> {
    for i in 0..s.nrows() {
        s[(i, i)] -= cr(noise);
    }
    let (s, eta) = match eta {
        Some(e) => (shrink(&s, e)?, e),
        None => (s, 1.0),
    };
    Ok(AcquisitionResult { method: AcqMethod::RDirect, estimate: s, n: n_r, n_r: Some(n_r), eta, nmse: None })
}

/// How the noise floors of Q̂ and Q̂₋ are reconciled in the via-Q difference.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum ViaQNoise {
    /// Plain Q̂ − Q̂₋; unbiased when both observations carry the same noise level.
    #[default]
    Difference,
    /// (Q̂ − σ_q·I) − (Q̂₋ − σ_−·I) with the two known despread noise levels.
    SubtractBoth { noise_q: f64, noise_minus: f64 },
}

/// R̂ = Q̂ − Q̂₋ where Q̂₋ is built from N_R blocks in which only the sharers
/// transmit the UE's clean pilot.
pub fn estimate_r_via_q(q_full: &CMat, n: usize, q_minus: &CMat, n_r: usize, mode: ViaQNoise) -> Result<AcquisitionResult> {
    if n == 0 || n_r == 0 {
        return Err(Error::Domain("via Q needs N ≥ 1 and N_R ≥ 1".into()));
    }
    if q_full.shape() != q_minus.shape() {
        return Err(Error::Domain("Q̂ and Q̂₋ differ in size".into()));
    }
    let mut r = q_full - q_minus;
    if let ViaQNoise::SubtractBoth { noise_q, noise_minus } = mode {
        for i in 0..r.nrows() {
            r[(i, i)] -= cr(noise_q - noise_minus);
        }
    }
    hermitize(&mut r);
    Ok(AcquisitionResult { method: AcqMethod::ViaQ, estimate: r, n, n_r: Some(n_r), eta: 1.0, nmse: None })
}

/// (1/N)·Σ y₁[n]·(e^{−jθ[n]} y₂[n])ᴴ, symmetrised. `y1`, `y2` hold the despreads
/// of the two half-pilots as columns; `theta[n]` is the target cell's phase.
pub fn estimate_r_random_phase(y1: &CMat, y2: &CMat, theta: &[f64]) -> Result<AcquisitionResult> {
    let n = y1.ncols();
    if n == 0 || y2.ncols() != n || theta.len() != n || y1.nrows() != y2.nrows() {
        return Err(Error::Domain("random-phase inputs must hold N ≥ 1 matching blocks".into()));
    }
    let mut y2r = y2.clone();
    for (col, &t) in theta.iter().enumerate() {
        let ph = C64::from_polar(1.0, -t);
        for x in y2r.column_mut(col).iter_mut() {
            *x *= ph;
        }
    }
    let mut r = y1 * y2r.adjoint() / cr(n as f64);
    hermitize(&mut r);
    Ok(AcquisitionResult::new(AcqMethod::RandomPhase, r, n))
}

/// T pilot allocations; `alloc[t][u]` is the pilot of UE u in allocation t.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotSwitchPlan {
    pub n_users: usize,
    pub tau_p: usize,
    pub alloc: Vec<Vec<usize>>,
}

impl PilotSwitchPlan {
    pub fn new(n_users: usize, tau_p: usize, alloc: Vec<Vec<usize>>) -> Result<Self> {
        if tau_p == 0 || n_users == 0 {
            return Err(Error::Domain("pilot-switch plan needs τ_p ≥ 1 and at least one UE".into()));
        }
        if alloc.len() * tau_p < n_users {
            return Err(Error::Protocol(format!(
                "T = {} allocations of {tau_p} pilots cannot identify {n_users} correlation matrices (need T ≥ KL/τ_p)",
                alloc.len()
            )));
        }
        for (t, a) in alloc.iter().enumerate() {
            if a.len() != n_users || a.iter().any(|&p| p >= tau_p) {
                return Err(Error::Domain(format!("allocation {t} must give each of the {n_users} UEs one pilot below {tau_p}")));
            }
        }
        Ok(PilotSwitchPlan { n_users, tau_p, alloc })
    }

    pub fn t(&self) -> usize {
        self.alloc.len()
    }

    /// Joint allocation matrix Π (KL × τ_pT).
    pub fn joint(&self) -> DMatrix<f64> {
        let mut pi = DMatrix::zeros(self.n_users, self.tau_p * self.t());
        for (t, a) in self.alloc.iter().enumerate() {
            for (u, &p) in a.iter().enumerate() {
                pi[(u, t * self.tau_p + p)] = 1.0;
            }
        }
        pi
    }

    pub fn rank(&self) -> usize {
        self.joint().rank(1e-9)
    }

    /// Πᵀ's left pseudo-inverse (KL × τ_pT), or an error naming the rank deficit.
    fn solver(&self) -> Result<DMatrix<f64>> {
        let pi = self.joint();
        let rank = pi.rank(1e-9);
        if rank < self.n_users {
            return Err(Error::Numerical(format!(
                "pilot-switch allocation matrix has rank {rank} < {} UEs; the correlation matrices are not identifiable",
                self.n_users
            )));
        }
        let gram = &pi * pi.transpose();
        let inv = gram.try_inverse().ok_or_else(|| Error::Numerical("singular allocation Gram matrix".into()))?;
        Ok(inv * pi)
    }
}

/// Solves Q̂(t)_p − noise·I = Σ_u Π(t)[u, p]·R_u for every R_u by least squares,
/// entry by entry. `q[t][p]` is the sample matrix of pilot p in allocation t.
pub fn estimate_r_pilot_switch(q: &[Vec<CMat>], noise: f64, plan: &PilotSwitchPlan, diag_only: bool) -> Result<Vec<CMat>> {
    if q.len() != plan.t() || q.iter().any(|row| row.len() != plan.tau_p) {
        return Err(Error::Domain(format!("expected {}×{} sample matrices", plan.t(), plan.tau_p)));
    }
    let m = q[0][0].nrows();
    let solver = plan.solver()?;
    let obs: Vec<CMat> = q
        .iter()
        .flat_map(|row| row.iter())
        .map(|x| {
            let mut x = if diag_only { CMat::from_diagonal(&x.diagonal()) } else { x.clone() };
            for i in 0..m {
                x[(i, i)] -= cr(noise);
            }
            x
        })
        .collect();
    Ok((0..plan.n_users)
        .map(|u| {
            let mut r = CMat::zeros(m, m);
            for (col, x) in obs.iter().enumerate() {
                let w = solver[(u, col)];
                if w != 0.0 {
                    r += x * cr(w);
                }
            }
            hermitize(&mut r);
            r
        })
        .collect())
}

/// τ_s = ⌊B·T_s/τ_c⌋.
pub fn coherence_budget(b_hz: f64, t_s_sec: f64, tau_c: usize) -> Result<u64> {
    if !(b_hz >= 0.0) || !(t_s_sec >= 0.0) || tau_c == 0 {
        return Err(Error::Domain("coherence budget needs B, T_s ≥ 0 and τ_c ≥ 1".into()));
    }
    let x = b_hz * t_s_sec / tau_c as f64;
    Ok(floor(x * (1.0 + 1e-12)) as u64)
}

/// Pre-log factor after deducting N_R·KL clean pilots spread over τ_s blocks.
pub fn overhead_prelog(tau_c: usize, tau_p: usize, n_r: usize, n_users: usize, tau_s: u64) -> f64 {
    let extra = if tau_s == 0 { 0.0 } else { (n_r * n_users) as f64 / tau_s as f64 };
    ((tau_c as f64 - tau_p as f64 - extra) / tau_c as f64).max(0.0)
}

/// Which individual-R method feeds the acquired statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum RMethod {
    RDirect,
    #[default]
    ViaQ,
}

/// Settings for replacing true statistics at one BS by acquired ones.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct AcquisitionSpec {
    pub method: RMethod,
    /// Contaminated pilot observations behind Q̂ (via Q only).
    pub n: usize,
    /// Clean pilot observations per UE.
    pub n_r: usize,
    pub diag_only: bool,
    pub eta: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise_mode: ViaQNoise,
}

/// Statistics at BS j as the BS would learn them: every Q̂ and R̂ is a sample
/// matrix drawn from its exact Wishart law around `truth`, then repaired.
/// Clean observations carry the same despread noise level as regular pilots.
pub fn acquire_statistics<R: Rng + ?Sized>(
    truth: &BsStatistics,
    plan: &PilotPlan,
    sigma2: f64,
    rho: f64,
    spec: &AcquisitionSpec,
    rng: &mut R,
) -> Result<BsStatistics> {
    if spec.n_r == 0 {
        return Err(Error::Domain("acquired statistics need N_R ≥ 1".into()));
    }
    let m = truth.m();
    let noise = truth.noise;
    let finish = |a: CMat| -> CMat {
        if spec.diag_only {
            CMat::from_diagonal(&a.diagonal())
        } else {
            a
        }
    };
    let shrunk = |a: CMat| -> Result<CMat> {
        match spec.eta {
            Some(e) => shrink(&a, e),
            None => Ok(a),
        }
    };
    let to_herm = |a: CMat| -> Herm {
        if spec.diag_only {
            Herm::Diag(a.diagonal().map(|x| x.re))
        } else {
            Herm::from_full(a)
        }
    };

    let mut r_hat: Vec<CorrelationMatrix> = Vec::with_capacity(truth.n_users());
    let q_hat: Vec<Herm> = match spec.method {
        RMethod::RDirect => {
            for u in 0..truth.n_users() {
                let mut clean = truth.r[u].herm().clone();
                clean.add_identity(noise);
                let s = sample_from_truth(&clean, spec.n_r, rng)?;
                let est = r_direct_from_sample(finish(s), spec.n_r, noise, spec.eta)?;
                r_hat.push(est.repaired().0);
            }
            truth
                .users_of_pilot
                .iter()
                .map(|us| {
                    let mut q = Herm::scaled_identity(m, noise);
                    if !spec.diag_only {
                        q = Herm::Full(q.into_full());
                    }
                    for &u in us {
                        q.axpy(1.0, &to_herm(r_hat[u].to_full()));
                    }
                    q
                })
                .collect()
        }
        RMethod::ViaQ => {
            if spec.n == 0 {
                return Err(Error::Domain("via Q needs N ≥ 1".into()));
            }
            let raw_q: Vec<CMat> = truth
                .q
                .iter()
                .map(|q| sample_from_truth(q, spec.n, rng).map(&finish))
                .collect::<Result<_>>()?;
            let q_used: Vec<CMat> = raw_q.iter().cloned().map(&shrunk).collect::<Result<_>>()?;
            for u in 0..truth.n_users() {
                let p = truth.pilot_of[u];
                let mut minus = Herm::scaled_identity(m, noise);
                for &v in &truth.users_of_pilot[p] {
                    if v != u {
                        minus.axpy(1.0, truth.r[v].herm());
                    }
                }
                let s = finish(sample_from_truth(&minus, spec.n_r, rng)?);
                let est = estimate_r_via_q(&raw_q[p], spec.n, &s, spec.n_r, spec.noise_mode)?;
                let est = AcquisitionResult { estimate: shrunk(est.estimate)?, ..est };
                r_hat.push(cap_below(&est.repaired().0.to_full(), &q_used[p])?);
            }
            q_used.into_iter().map(to_herm).collect()
        }
    };
    let r_hat = r_hat
        .into_iter()
        .map(|r| if spec.diag_only { r.diagonal_part() } else { r })
        .collect();
    BsStatistics::with_q(truth.j, r_hat, q_hat, plan, sigma2, rho)
}

/// Largest R' ⪯ `q` sharing R's whitened eigenvectors: the eigenvalues of
/// L⁻¹RL⁻ᴴ (Q = LLᴴ) are clipped to [0, 1]. An independently estimated R̂ can
/// exceed Q̂ in some directions, and then R̂ − R̂Q̂⁻¹R̂ is indefinite.
pub fn cap_below(r: &CMat, q: &CMat) -> Result<CorrelationMatrix> {
    let m = r.nrows();
    if (0..m).all(|i| (0..m).all(|j| i == j || (r[(i, j)] == C64::new(0.0, 0.0) && q[(i, j)] == C64::new(0.0, 0.0)))) {
        return Ok(CorrelationMatrix::trusted(Herm::Diag(DVector::from_fn(m, |i, _| {
            r[(i, i)].re.clamp(0.0, q[(i, i)].re.max(0.0))
        }))));
    }
    let factor = HpdFactor::new(q.clone())?;
    let li = factor.whitener();
    let HpdFactor::Chol { chol, .. } = factor else { unreachable!("dense input gives a Cholesky factor") };
    let l = chol.l();
    let mut w = &li * r * li.adjoint();
    hermitize(&mut w);
    let (vals, vecs) = herm_eigen(&w);
    let d = CMat::from_diagonal(&DVector::from_iterator(m, vals.iter().map(|v| cr(v.clamp(0.0, 1.0)))));
    let x = &l * vecs;
    let mut out = &x * d * x.adjoint();
    hermitize(&mut out);
    Ok(CorrelationMatrix::trusted(Herm::Full(out)))
}
