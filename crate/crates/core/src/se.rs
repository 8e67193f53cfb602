//! Spectral-efficiency bounds: closed forms, Monte Carlo UatF and
//! instantaneous-SINR estimators, DL hardening assembly.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimation::BsStatistics;
use crate::linalg::{tr_mul, CMat, C64};
use crate::math::{log2, sqrt};
use crate::pilots::PilotPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Bound {
    /// Use-and-then-forget (UL) / hardening (DL).
    Uatf,
    /// Instantaneous effective SINR with MMSE estimates.
    Inst,
}

impl Bound {
    pub fn name(self) -> &'static str {
        match self {
            Bound::Uatf => "uatf",
            Bound::Inst => "inst",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uatf" => Ok(Bound::Uatf),
            "inst" => Ok(Bound::Inst),
            _ => Err(Error::Config(alloc::format!("unknown bound '{s}' (expected uatf or inst)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Direction {
    Ul,
    Dl,
}

/// (τ_c − τ_p)/τ_c: all data samples are credited to the evaluated direction.
pub fn prelog(tau_c: usize, tau_p: usize) -> f64 {
    if tau_p >= tau_c {
        0.0
    } else {
        (tau_c - tau_p) as f64 / tau_c as f64
    }
}

pub fn se_from_sinr(gamma: f64, tau_c: usize, tau_p: usize) -> f64 {
    prelog(tau_c, tau_p) * log2(1.0 + gamma)
}

fn sharer_cells(plan: &PilotPlan, j: usize) -> Vec<usize> {
    plan.sharers(j)
}

/// MR with uncorrelated fading. `beta[l·K+i]` are the gains to BS j.
pub fn uatf_mr_uncorr(beta: &[f64], plan: &PilotPlan, j: usize, k: usize, m: usize, noise_ratio: f64) -> f64 {
    let kk = plan.k;
    let sharers = sharer_cells(plan, j);
    let psi = 1.0 / (sharers.iter().map(|&l| beta[l * kk + k]).sum::<f64>() + noise_ratio / plan.tau_p() as f64);
    let own = beta[j * kk + k];
    let num = own * own * psi * m as f64;
    let noncoherent: f64 = beta.iter().sum();
    let coherent: f64 = sharers.iter().filter(|&&l| l != j).map(|&l| { let b = beta[l * kk + k]; b * b } * psi * m as f64).sum();
    num / (noncoherent + coherent + noise_ratio)
}

/// M → ∞ limit of [`uatf_mr_uncorr`]: β²_own/Σ_{l∈P_j∖j} β²_lk (+∞ without contamination).
pub fn asymptotic_mr_uncorr(beta: &[f64], plan: &PilotPlan, j: usize, k: usize) -> f64 {
    let own = beta[j * plan.k + k];
    let den: f64 = sharer_cells(plan, j).iter().filter(|&&l| l != j).map(|&l| { let b = beta[l * plan.k + k]; b * b }).sum();
    if den == 0.0 {
        f64::INFINITY
    } else {
        own * own / den
    }
}

/// tr(R_u Q⁻¹ R_jk) for every UE u at the BS, plus tr(Φ_jk).
fn mr_corr_terms(stats: &BsStatistics, k: usize) -> (CMat, f64) {
    let own = stats.j * stats.k + k;
    let p = stats.pilot_of[own];
    // X = Q⁻¹ R_jk, so tr(R_u X) = tr(R_u Q⁻¹ R_jk).
    let x = stats.q_factor[p].solve(&stats.r[own].to_full());
    let phi = stats.r[own].herm().mul_mat(&x);
    let tr_phi = phi.trace().re;
    (phi, tr_phi)
}

/// MR with correlated fading and MMSE estimation.
pub fn uatf_mr_corr(stats: &BsStatistics, k: usize) -> f64 {
    let own = stats.j * stats.k + k;
    let p = stats.pilot_of[own];
    let (phi, tr_phi) = mr_corr_terms(stats, k);
    let x = stats.q_factor[p].solve(&stats.r[own].to_full());
    let noncoherent: f64 = stats.r.iter().map(|r| tr_mul(&r.to_full(), &phi).re).sum::<f64>() / tr_phi;
    let coherent: f64 = stats.users_of_pilot[p]
        .iter()
        .filter(|&&u| u != own)
        .map(|&u| tr_mul(&stats.r[u].to_full(), &x).norm_sqr())
        .sum::<f64>()
        / tr_phi;
    tr_phi / (noncoherent + coherent + stats.sigma2_over_rho)
}

/// M → ∞ limit of [`uatf_mr_corr`]; +∞ when the coherent term vanishes.
pub fn asymptotic_mr_corr(stats: &BsStatistics, k: usize) -> f64 {
    let own = stats.j * stats.k + k;
    let p = stats.pilot_of[own];
    let (_, tr_phi) = mr_corr_terms(stats, k);
    let x = stats.q_factor[p].solve(&stats.r[own].to_full());
    let coherent: f64 = stats.users_of_pilot[p]
        .iter()
        .filter(|&&u| u != own)
        .map(|&u| tr_mul(&stats.r[u].to_full(), &x).norm_sqr())
        .sum::<f64>()
        / tr_phi;
    if coherent <= 1e-13 * tr_phi {
        f64::INFINITY
    } else {
        tr_phi / coherent
    }
}

/// Exact UatF SINR of v = G·y_LS for UE (j,k), where y_LS is the despread pilot
/// observation of that UE:
/// |tr(GᴴR_jk)|² / (tr(G Q Gᴴ U) + Σ_{l∈P_j∖j} |tr(GᴴR_lk)|²).
pub fn uatf_ls_linear(g: &CMat, stats: &BsStatistics, u_mat: &CMat, k: usize) -> f64 {
    let own = stats.j * stats.k + k;
    let p = stats.pilot_of[own];
    let gh = g.adjoint();
    let num = tr_mul(&gh, &stats.r[own].to_full()).norm_sqr();
    let q = stats.q[p].to_full();
    let noncoherent = tr_mul(&(g * q * &gh), u_mat).re;
    let coherent: f64 = stats.users_of_pilot[p]
        .iter()
        .filter(|&&u| u != own)
        .map(|&u| tr_mul(&gh, &stats.r[u].to_full()).norm_sqr())
        .sum();
    num / (noncoherent + coherent)
}

/// SINR estimate with its delta-method standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinrEstimate {
    pub sinr: f64,
    pub stderr: f64,
}

/// γ = |ā|²/(s̄ − |ā|² + c·n̄) and its delta-method standard error from
/// per-block samples x_b = (Re a, Im a, s, n).
pub fn ratio_estimate(samples: &[[f64; 4]], c: f64) -> SinrEstimate {
    let b = samples.len() as f64;
    let mut mean = [0.0f64; 4];
    for x in samples {
        for i in 0..4 {
            mean[i] += x[i];
        }
    }
    for v in mean.iter_mut() {
        *v /= b;
    }
    let n = mean[0] * mean[0] + mean[1] * mean[1];
    let d = mean[2] - n + c * mean[3];
    let sinr = n / d;
    if samples.len() < 2 {
        return SinrEstimate { sinr, stderr: f64::NAN };
    }
    let grad = [
        2.0 * mean[0] * (d + n) / (d * d),
        2.0 * mean[1] * (d + n) / (d * d),
        -n / (d * d),
        -c * n / (d * d),
    ];
    let mut var = 0.0;
    for x in samples {
        let dot: f64 = (0..4).map(|i| grad[i] * (x[i] - mean[i])).sum();
        var += dot * dot;
    }
    var /= b - 1.0;
    SinrEstimate { sinr, stderr: sqrt(var / b) }
}

/// Monte Carlo UatF statistics of one BS's combiners V (M×K) against every
/// UE's channel to that BS (M×LK).
#[derive(Clone, Debug)]
pub struct UlAccumulator {
    pub j: usize,
    pub k: usize,
    pub n_users: usize,
    pub blocks: usize,
    /// Σ_b v_kᴴh_u.
    pub sum_ip: CMat,
    /// Σ_b |v_kᴴh_u|².
    pub sum_sq: DMatrix<f64>,
    pub sum_nv: Vec<f64>,
    /// Per block and UE k of the cell: (Re vᴴh_own, Im vᴴh_own, Σ_u|vᴴh_u|², ‖v‖²).
    pub per_block: Vec<Vec<[f64; 4]>>,
}

impl UlAccumulator {
    pub fn new(j: usize, k: usize, n_users: usize) -> Self {
        UlAccumulator {
            j,
            k,
            n_users,
            blocks: 0,
            sum_ip: CMat::zeros(k, n_users),
            sum_sq: DMatrix::zeros(k, n_users),
            sum_nv: vec![0.0; k],
            per_block: vec![Vec::new(); k],
        }
    }

    pub fn add_block(&mut self, v: &CMat, h: &CMat) {
        let ip = v.adjoint() * h;
        for kk in 0..self.k {
            let nv = v.column(kk).norm_squared();
            let mut s = 0.0;
            for u in 0..self.n_users {
                let x = ip[(kk, u)];
                self.sum_ip[(kk, u)] += x;
                let q = x.norm_sqr();
                self.sum_sq[(kk, u)] += q;
                s += q;
            }
            self.sum_nv[kk] += nv;
            let own = ip[(kk, self.j * self.k + kk)];
            self.per_block[kk].push([own.re, own.im, s, nv]);
        }
        self.blocks += 1;
    }

    pub fn merge(&mut self, other: &UlAccumulator) {
        self.sum_ip += &other.sum_ip;
        self.sum_sq += &other.sum_sq;
        for kk in 0..self.k {
            self.sum_nv[kk] += other.sum_nv[kk];
            self.per_block[kk].extend_from_slice(&other.per_block[kk]);
        }
        self.blocks += other.blocks;
    }

    /// UatF SINR of UE k of the cell; `noise_ratio` = σ²/ρ.
    pub fn sinr(&self, k: usize, noise_ratio: f64) -> SinrEstimate {
        ratio_estimate(&self.per_block[k], noise_ratio)
    }

    pub fn decomposition(&self, k: usize, noise_ratio: f64, plan: &PilotPlan) -> PowerDecomposition {
        let b = self.blocks as f64;
        let norm = noise_ratio * self.sum_nv[k] / b;
        let own = self.j * self.k + k;
        let mut coherent = vec![0.0; self.n_users];
        let mut noncoherent = vec![0.0; self.n_users];
        for u in 0..self.n_users {
            let m1 = (self.sum_ip[(k, u)] / b).norm_sqr();
            let m2 = self.sum_sq[(k, u)] / b;
            coherent[u] = m1 / norm;
            noncoherent[u] = (m2 - m1) / norm;
        }
        let sharers: Vec<bool> =
            (0..self.n_users).map(|u| u % self.k == k && plan.shares(u / self.k, self.j)).collect();
        PowerDecomposition { own, desired: coherent[own], coherent, noncoherent, pilot_sharer: sharers }
    }
}

/// Signal and interference powers of one UE relative to its noise power.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerDecomposition {
    pub own: usize,
    pub desired: f64,
    pub coherent: Vec<f64>,
    pub noncoherent: Vec<f64>,
    pub pilot_sharer: Vec<bool>,
}

impl PowerDecomposition {
    /// Reassembled UatF SINR: desired/(Σ non-coherent + Σ_{u≠own} coherent + 1).
    pub fn sinr(&self) -> f64 {
        let nc: f64 = self.noncoherent.iter().sum();
        let c: f64 = self.coherent.iter().enumerate().filter(|(u, _)| *u != self.own).map(|(_, x)| x).sum();
        self.desired / (nc + c + 1.0)
    }
}

/// DL statistics contributed by one BS l: its unit-norm precoders against the
/// channels from BS l to every UE.
#[derive(Clone, Debug)]
pub struct DlAccumulator {
    pub l: usize,
    pub k: usize,
    pub n_users: usize,
    /// Per block: w_liᴴ h^l_li for i = 0..K.
    pub own: Vec<Vec<C64>>,
    /// Per block: Σ_i |w_liᴴ h^l_u|² for every UE u.
    pub interference: Vec<Vec<f64>>,
}

impl DlAccumulator {
    pub fn new(l: usize, k: usize, n_users: usize) -> Self {
        DlAccumulator { l, k, n_users, own: Vec::new(), interference: Vec::new() }
    }

    pub fn add_block(&mut self, w: &CMat, h: &CMat) {
        let ip = w.adjoint() * h;
        self.own.push((0..self.k).map(|i| ip[(i, self.l * self.k + i)]).collect());
        self.interference.push((0..self.n_users).map(|u| (0..self.k).map(|i| ip[(i, u)].norm_sqr()).sum()).collect());
    }

    pub fn merge(&mut self, other: &DlAccumulator) {
        self.own.extend_from_slice(&other.own);
        self.interference.extend_from_slice(&other.interference);
    }

    pub fn blocks(&self) -> usize {
        self.own.len()
    }
}

/// Hardening-bound SINR of every UE from the accumulators of all BSs (indexed
/// by BS). `noise_ratio` = σ²_dl/ρ_dl.
pub fn dl_sinr(accs: &[DlAccumulator], noise_ratio: f64) -> Result<Vec<SinrEstimate>> {
    let first = accs.first().ok_or_else(|| Error::Domain("no DL accumulators".into()))?;
    let (k, n_users, blocks) = (first.k, first.n_users, first.blocks());
    if accs.iter().any(|a| a.blocks() != blocks) {
        return Err(Error::Domain("DL accumulators cover different numbers of blocks".into()));
    }
    let mut out = Vec::with_capacity(n_users);
    for u in 0..n_users {
        let (j, i) = (u / k, u % k);
        let samples: Vec<[f64; 4]> = (0..blocks)
            .map(|b| {
                let a = accs[j].own[b][i];
                let s: f64 = accs.iter().map(|acc| acc.interference[b][u]).sum();
                [a.re, a.im, s, 1.0]
            })
            .collect();
        out.push(ratio_estimate(&samples, noise_ratio));
    }
    Ok(out)
}

/// Per-block instantaneous SINRs of the K UEs of one cell, given the estimates as side information.
#[derive(Clone, Debug)]
pub struct InstAccumulator {
    pub per_block: Vec<Vec<f64>>,
}

impl InstAccumulator {
    pub fn new(k: usize) -> Self {
        InstAccumulator { per_block: vec![Vec::new(); k] }
    }

    pub fn add(&mut self, k: usize, gamma: f64) {
        self.per_block[k].push(gamma);
    }

    pub fn merge(&mut self, other: &InstAccumulator) {
        for (a, b) in self.per_block.iter_mut().zip(other.per_block.iter()) {
            a.extend_from_slice(b);
        }
    }

    /// Mean of log2(1+γ) and its standard error.
    pub fn mean_log(&self, k: usize) -> (f64, f64) {
        let xs: Vec<f64> = self.per_block[k].iter().map(|g| log2(1.0 + g)).collect();
        let n = xs.len() as f64;
        let mean = crate::math::pairwise_sum(&xs) / n;
        if xs.len() < 2 {
            return (mean, f64::NAN);
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, sqrt(var / n))
    }
}

/// Effective SINR 2^{E log2(1+γ)} − 1 of a mean-log value.
pub fn effective_sinr(mean_log: f64) -> f64 {
    crate::math::exp(mean_log * core::f64::consts::LN_2) - 1.0
}
