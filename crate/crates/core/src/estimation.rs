//! MMSE, element-wise MMSE and LS channel estimation at one BS.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{gemm, CMat, CVec, Herm, HpdFactor};
use crate::pilots::PilotPlan;
use crate::spatial::CorrelationMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Estimator {
    Mmse,
    EwMmse,
    Ls,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Mmse, Estimator::EwMmse, Estimator::Ls];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Mmse => "mmse",
            Estimator::EwMmse => "ew-mmse",
            Estimator::Ls => "ls",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator '{s}' (expected mmse, ew-mmse or ls)")))
    }
}

/// Q = Σ R + noise·I over the pilot-sharing UEs.
pub fn compute_q(rs: &[&CorrelationMatrix], noise: f64) -> Result<Herm> {
    let m = rs.first().map(|r| r.dim()).ok_or_else(|| Error::Domain("compute_q needs at least one R".into()))?;
    if rs.iter().any(|r| r.dim() != m) {
        return Err(Error::Domain("all correlation matrices must share M".into()));
    }
    let diagonal = rs.iter().all(|r| r.is_diagonal());
    let mut q = Herm::zeros(m, diagonal);
    for r in rs {
        q.axpy(1.0, r.herm());
    }
    q.add_identity(noise);
    Ok(q)
}

/// ĥ = R·Q⁻¹·y.
pub fn mmse_estimate(y: &CVec, r: &CorrelationMatrix, q: &HpdFactor) -> CVec {
    r.herm().mul_vec(&q.solve_vec(y))
}

/// Per-antenna scalar MMSE: ĥ_n = [R]_nn/[Q]_nn · y_n.
pub fn ew_mmse_estimate(y: &CVec, r_diag: &[f64], q_diag: &[f64]) -> CVec {
    CVec::from_fn(y.len(), |n, _| if r_diag[n] == 0.0 { crate::linalg::C_ZERO } else { y[n] * (r_diag[n] / q_diag[n]) })
}

pub fn ls_estimate(y: &CVec) -> CVec {
    y.clone()
}

/// 1 − β_own/(Σ_P β + σ²/(τ_pρ)); `betas[0]` is the UE of interest.
pub fn nmse_uncorrelated(betas: &[f64], noise: f64) -> Result<f64> {
    if betas.is_empty() || betas.iter().any(|b| *b < 0.0) {
        return Err(Error::Domain("betas must be non-empty and non-negative".into()));
    }
    let total: f64 = betas.iter().sum::<f64>() + noise;
    if total == 0.0 {
        return Err(Error::Domain("NMSE undefined with zero gain and zero noise".into()));
    }
    Ok(1.0 - betas[0] / total)
}

/// 1 − tr(R Q⁻¹ R)/tr(R).
pub fn nmse_correlated(r: &CorrelationMatrix, q: &HpdFactor) -> Result<f64> {
    let tr = r.trace();
    if !(tr > 0.0) {
        return Err(Error::Domain("NMSE undefined for tr(R) = 0".into()));
    }
    Ok(1.0 - phi_matrix(r.herm(), q).trace() / tr)
}

/// Φ = R Q⁻¹ R, assembled as XᴴX with X = L⁻¹R.
pub fn phi_matrix(r: &Herm, q: &HpdFactor) -> Herm {
    match (r, q) {
        (Herm::Diag(d), HpdFactor::Diag(qd)) => Herm::Diag(d.zip_map(qd, |x, s| x * x / s)),
        _ => {
            let x = q.whiten(&r.to_full());
            Herm::from_full(gemm(&x, true, &x, false))
        }
    }
}

/// [`phi_matrix`] given the whitener L⁻¹ of Q.
pub fn phi_whitened(r: &Herm, whitener: &CMat) -> Herm {
    let x = gemm(whitener, false, &r.to_full(), false);
    Herm::from_full(gemm(&x, true, &x, false))
}

/// Channel estimates of every UE at one BS: column l·K+i holds ĥ^j_li.
#[derive(Clone, Debug)]
pub struct EstimateBundle {
    pub estimator: Estimator,
    pub hhat: CMat,
}

/// Second-order statistics available at BS j in one drop, indexed by UE l·K+i.
#[derive(Clone, Debug)]
pub struct BsStatistics {
    pub j: usize,
    pub k: usize,
    pub r: Vec<CorrelationMatrix>,
    /// σ²/(τ_pρ).
    pub noise: f64,
    /// σ²/ρ.
    pub sigma2_over_rho: f64,
    pub q: Vec<Herm>,
    pub q_factor: Vec<HpdFactor>,
    /// L⁻¹ of every non-diagonal Q, shared by the Φ of its pilot's users.
    pub q_whitener: Vec<Option<CMat>>,
    pub pilot_of: Vec<usize>,
    pub users_of_pilot: Vec<Vec<usize>>,
}

fn whiteners(factors: &[HpdFactor]) -> Vec<Option<CMat>> {
    factors.iter().map(|f| matches!(f, HpdFactor::Chol { .. }).then(|| f.whitener())).collect()
}

impl BsStatistics {
    pub fn new(j: usize, r: Vec<CorrelationMatrix>, plan: &PilotPlan, sigma2: f64, rho: f64) -> Result<Self> {
        let noise = sigma2 / (plan.tau_p() as f64 * rho);
        let users_of_pilot: Vec<Vec<usize>> = (0..plan.tau_p()).map(|p| plan.users_of_pilot(p)).collect();
        let q = users_of_pilot
            .iter()
            .map(|us| {
                let rs: Vec<&CorrelationMatrix> = us.iter().map(|&u| &r[u]).collect();
                if rs.is_empty() {
                    Ok(Herm::scaled_identity(r[0].dim(), noise))
                } else {
                    compute_q(&rs, noise)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_q(j, r, q, plan, sigma2, rho)
    }

    /// Statistics where the Q matrices are supplied directly (e.g. estimated from samples).
    pub fn with_q(j: usize, r: Vec<CorrelationMatrix>, q: Vec<Herm>, plan: &PilotPlan, sigma2: f64, rho: f64) -> Result<Self> {
        if r.len() != plan.l * plan.k {
            return Err(Error::Domain(format!("expected {} correlation matrices, got {}", plan.l * plan.k, r.len())));
        }
        if q.len() != plan.tau_p() {
            return Err(Error::Domain(format!("expected {} Q matrices, got {}", plan.tau_p(), q.len())));
        }
        let noise = sigma2 / (plan.tau_p() as f64 * rho);
        let q_factor = q.iter().map(|h| h.factor()).collect::<Result<Vec<_>>>()?;
        let q_whitener = whiteners(&q_factor);
        let pilot_of = (0..plan.l * plan.k).map(|u| plan.pilot_of_ue(u / plan.k, u % plan.k)).collect();
        let users_of_pilot = (0..plan.tau_p()).map(|p| plan.users_of_pilot(p)).collect();
        Ok(BsStatistics { j, k: plan.k, r, noise, sigma2_over_rho: sigma2 / rho, q, q_factor, q_whitener, pilot_of, users_of_pilot })
    }

    pub fn m(&self) -> usize {
        self.r[0].dim()
    }
    pub fn n_users(&self) -> usize {
        self.r.len()
    }
    pub fn tau_p(&self) -> usize {
        self.q.len()
    }

    /// The same statistics with every R and Q replaced by its main diagonal.
    pub fn diagonal(&self) -> BsStatistics {
        let r = self.r.iter().map(|x| x.diagonal_part()).collect();
        let q: Vec<Herm> = self.q.iter().map(|x| x.diagonal_part()).collect();
        let q_factor: Vec<HpdFactor> = q.iter().map(|h| h.factor().expect("diagonal of a PD matrix is PD")).collect();
        let q_whitener = whiteners(&q_factor);
        BsStatistics { r, q, q_factor, q_whitener, pilot_of: self.pilot_of.clone(), users_of_pilot: self.users_of_pilot.clone(), ..*self }
    }

    pub fn is_diagonal(&self) -> bool {
        self.r.iter().all(|x| x.is_diagonal()) && self.q.iter().all(|x| x.is_diagonal())
    }

    /// Φ^j_u = R_u Q⁻¹ R_u.
    pub fn phi(&self, u: usize) -> Herm {
        let p = self.pilot_of[u];
        match (&self.q_whitener[p], self.r[u].herm()) {
            (Some(w), r @ Herm::Full(_)) => phi_whitened(r, w),
            _ => phi_matrix(self.r[u].herm(), &self.q_factor[p]),
        }
    }

    pub fn nmse(&self, u: usize) -> Result<f64> {
        nmse_correlated(&self.r[u], &self.q_factor[self.pilot_of[u]])
    }

    /// Estimates of every UE for a batch of blocks. `despread[b]` holds the τ_p
    /// despread vectors of block b; output `[b]` is M×LK.
    pub fn estimate(&self, est: Estimator, despread: &[CMat]) -> Vec<CMat> {
        let m = self.m();
        let n = despread.len();
        let mut out: Vec<CMat> = (0..n).map(|_| CMat::zeros(m, self.n_users())).collect();
        let diag_view;
        let stats = match est {
            Estimator::EwMmse if !self.is_diagonal() => {
                diag_view = self.diagonal();
                &diag_view
            }
            _ => self,
        };
        for (p, users) in self.users_of_pilot.iter().enumerate() {
            if users.is_empty() {
                continue;
            }
            let y = CMat::from_fn(m, n, |row, b| despread[b][(row, p)]);
            let z = match est {
                Estimator::Ls => y,
                _ => stats.q_factor[p].solve(&y),
            };
            for &u in users {
                let h = match est {
                    Estimator::Ls => z.clone(),
                    _ => stats.r[u].herm().mul_mat(&z),
                };
                for (b, o) in out.iter_mut().enumerate() {
                    o.set_column(u, &h.column(b));
                }
            }
        }
        out
    }

    pub fn estimate_block(&self, est: Estimator, despread: &CMat) -> EstimateBundle {
        let hhat = self.estimate(est, core::slice::from_ref(despread)).pop().expect("one block");
        EstimateBundle { estimator: est, hhat }
    }

    /// Q⁻¹y_p: the shared vector that every sharer's MMSE estimate is R-scaled from.
    pub fn despread_transform(&self, p: usize, y: &CVec) -> CVec {
        self.q_factor[p].solve_vec(y)
    }

    /// Error term that replaces ĥĥᴴ's complement in the combiner regulariser:
    /// R−Φ for MMSE, its diagonal analogue for EW-MMSE, nothing for LS.
    pub fn error_term(&self, est: Estimator, u: usize) -> Herm {
        match est {
            Estimator::Mmse => {
                let mut c = self.r[u].herm().clone();
                c.axpy(-1.0, &self.phi(u));
                c
            }
            Estimator::EwMmse => {
                let d = self.r[u].diag();
                let q = self.q[self.pilot_of[u]].diag();
                Herm::Diag(d.zip_map(&q, |x, s| x - x * x / s))
            }
            Estimator::Ls => Herm::zeros(self.m(), true),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cr, frob2, herm_eigenvalues, C64};
    use crate::pilots::{build_pilot_book, default_groups, BookKind};
    use crate::rng::{cn, purpose, stream};
    use crate::spatial::{local_scattering_r, uncorrelated_r, ChannelFactor, ScatteringParams};
    use crate::math::sqrt;
    use nalgebra::DVector;

    fn plan(l: usize, k: usize, f: usize) -> PilotPlan {
        PilotPlan::new(l, k, f, default_groups(l, f, true).unwrap(), build_pilot_book(f * k, 1.0, BookKind::Dft).unwrap()).unwrap()
    }

    fn scat(seed: u64, m: usize, angle: f64, beta: f64) -> CorrelationMatrix {
        let mut rng = stream(seed, &[purpose::TEST]);
        let p = ScatteringParams::draw(angle, 4, 0.5, 0.15, 0.0, beta, m, &mut rng);
        local_scattering_r(&p, m).unwrap()
    }

    #[test]
    fn q_examples() {
        let r = uncorrelated_r(2.0, 3).unwrap();
        let q = compute_q(&[&r], 0.5).unwrap();
        assert_eq!(q.to_full(), CMat::identity(3, 3) * cr(2.5));
        let a = scat(1, 6, 0.2, 1.0);
        let b = scat(2, 6, -0.4, 0.3);
        let q = compute_q(&[&a, &b], 0.1).unwrap();
        let mut minus = q.to_full();
        minus -= CMat::identity(6, 6) * cr(0.1);
        assert!(*herm_eigenvalues(&minus).last().unwrap() > -1e-12);
        assert!(*herm_eigenvalues(&q.to_full()).last().unwrap() >= 0.1 - 1e-12);
    }

    #[test]
    fn mmse_reduces_to_scalar_form() {
        let r = uncorrelated_r(0.8, 4).unwrap();
        let q = compute_q(&[&r], 0.2).unwrap().factor().unwrap();
        let y = CVec::from_fn(4, |n, _| C64::new(n as f64, 1.0));
        let h = mmse_estimate(&y, &r, &q);
        assert!((h - &y * cr(0.8)).norm() < 1e-14);
        let r = scat(3, 5, 0.3, 1.0);
        let q = compute_q(&[&r], 1e-13).unwrap().factor().unwrap();
        let mut rng = stream(4, &[purpose::TEST]);
        let h = ChannelFactor::new(&r).sample(&mut rng);
        let hh = mmse_estimate(&h, &r, &q);
        assert!((hh - &h).norm() < 1e-6 * h.norm());
    }

    #[test]
    fn ew_examples() {
        let d = [1.0, 0.0, 2.0];
        let qd = [1.5, 0.5, 2.5];
        let y = CVec::from_fn(3, |_, _| cr(1.0));
        let e = ew_mmse_estimate(&y, &d, &qd);
        assert_eq!(e[1], cr(0.0));
        let r = CorrelationMatrix::from_diagonal(DVector::from_vec(d.to_vec()));
        let q = Herm::Diag(DVector::from_vec(qd.to_vec())).factor().unwrap();
        assert!((mmse_estimate(&y, &r, &q) - e).norm() < 1e-15);
    }

    #[test]
    fn nmse_examples() {
        assert_eq!(nmse_uncorrelated(&[1.0], 0.0).unwrap(), 0.0);
        assert_eq!(nmse_uncorrelated(&[1.0, 1.0], 0.0).unwrap(), 0.5);
        assert!((nmse_uncorrelated(&[1.0, 0.5], 0.1).unwrap() - 0.375).abs() < 1e-15);
        let own = uncorrelated_r(1.0, 8).unwrap();
        let int = uncorrelated_r(0.5, 8).unwrap();
        let q = compute_q(&[&own, &int], 0.1).unwrap().factor().unwrap();
        assert!((nmse_correlated(&own, &q).unwrap() - 0.375).abs() < 1e-14);
        assert!(nmse_correlated(&uncorrelated_r(0.0, 3).unwrap(), &q).is_err());
    }

    #[test]
    fn orthogonal_contaminator_leaves_nmse_unchanged() {
        let m = 8;
        let own = CorrelationMatrix::from_diagonal(DVector::from_fn(m, |i, _| if i < 4 { 1.0 + i as f64 } else { 0.0 }));
        let int = CorrelationMatrix::from_diagonal(DVector::from_fn(m, |i, _| if i >= 4 { 3.0 } else { 0.0 }));
        // Rotate both by the same unitary so the test exercises the full path.
        let mut rng = stream(5, &[purpose::TEST]);
        let u = crate::rng::cn_mat(&mut rng, m, m).qr().q();
        let rot = |r: &CorrelationMatrix| CorrelationMatrix::new(&u * r.to_full() * u.adjoint());
        let (own, int) = (rot(&own), rot(&int));
        let alone = compute_q(&[&own], 0.3).unwrap().factor().unwrap();
        let both = compute_q(&[&own, &int], 0.3).unwrap().factor().unwrap();
        let a = nmse_correlated(&own, &alone).unwrap();
        let b = nmse_correlated(&own, &both).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn nmse_non_increasing_in_m() {
        for seed in 0..5u64 {
            let mut prev = f64::INFINITY;
            for m in [4usize, 8, 16, 32, 64] {
                let mut r1 = stream(seed, &[1]);
                let mut r2 = stream(seed, &[2]);
                let own = local_scattering_r(&ScatteringParams::draw(0.3, 6, 0.7, 0.09, 0.0, 1.0, m, &mut r1), m).unwrap();
                let int = local_scattering_r(&ScatteringParams::draw(-0.5, 6, 0.7, 0.09, 0.0, 0.6, m, &mut r2), m).unwrap();
                let q = compute_q(&[&own, &int], 0.05).unwrap().factor().unwrap();
                let v = nmse_correlated(&own, &q).unwrap();
                assert!(v <= prev + 1e-12, "seed {seed} M {m}: {v} > {prev}");
                prev = v;
            }
        }
    }

    /// Draws per-UE channels from the R's and the despread matrix for one block.
    fn block<R: rand::Rng>(stats: &BsStatistics, factors: &[ChannelFactor], rng: &mut R) -> (CMat, CMat) {
        let m = stats.m();
        let h = CMat::from_fn(m, factors.len(), |_, _| C64::new(0.0, 0.0));
        let mut h = h;
        for (u, f) in factors.iter().enumerate() {
            h.set_column(u, &f.sample(rng));
        }
        let mut y = CMat::from_fn(m, stats.tau_p(), |_, _| cn(rng) * sqrt(stats.noise));
        for (u, _) in factors.iter().enumerate() {
            let p = stats.pilot_of[u];
            let col = y.column(p) + h.column(u);
            y.set_column(p, &col);
        }
        (h, y)
    }

    fn setup() -> (BsStatistics, Vec<ChannelFactor>) {
        let m = 4;
        let pl = plan(4, 1, 2);
        let r: Vec<CorrelationMatrix> = (0..4).map(|u| scat(10 + u as u64, m, -0.8 + 0.5 * u as f64, [1.0, 0.3, 0.4, 0.2][u])).collect();
        let stats = BsStatistics::new(0, r, &pl, 0.2, 1.0).unwrap();
        let factors = stats.r.iter().map(ChannelFactor::new).collect();
        (stats, factors)
    }

    #[test]
    fn empirical_mse_matches_error_trace_and_orthogonality() {
        let (stats, factors) = setup();
        let m = stats.m();
        let mut rng = stream(20, &[purpose::TEST]);
        let n = 100_000;
        let mut mse = [0.0f64; 3];
        let mut cross = CMat::zeros(m, m);
        let batch: Vec<(CMat, CMat)> = (0..n).map(|_| block(&stats, &factors, &mut rng)).collect();
        let ys: Vec<CMat> = batch.iter().map(|(_, y)| y.clone()).collect();
        for (e, est) in Estimator::ALL.into_iter().enumerate() {
            let hh = stats.estimate(est, &ys);
            for ((h, _), hhat) in batch.iter().zip(hh.iter()) {
                let err = h.column(0) - hhat.column(0);
                mse[e] += err.norm_squared();
                if est == Estimator::Mmse {
                    cross += hhat.column(0) * err.adjoint();
                }
            }
        }
        for v in mse.iter_mut() {
            *v /= n as f64;
        }
        let tr_c = stats.error_term(Estimator::Mmse, 0).trace();
        assert!((mse[0] / tr_c - 1.0).abs() < 0.01, "{} vs {}", mse[0], tr_c);
        cross /= cr(n as f64);
        assert!(cross.norm() <= 0.02 * stats.r[0].trace());
        assert!(mse[0] < mse[1] && mse[0] < mse[2]);
        let nmse = stats.nmse(0).unwrap();
        assert!(nmse >= 0.0 && nmse <= 1.0);
    }

    #[test]
    fn ls_energy() {
        let (stats, factors) = setup();
        let mut rng = stream(21, &[purpose::TEST]);
        let n = 20_000;
        let mut e = 0.0;
        for _ in 0..n {
            let (_, y) = block(&stats, &factors, &mut rng);
            e += stats.estimate_block(Estimator::Ls, &y).hhat.column(0).norm_squared();
        }
        let p = stats.pilot_of[0];
        let expect: f64 = stats.users_of_pilot[p].iter().map(|&u| stats.r[u].trace()).sum::<f64>() + stats.m() as f64 * stats.noise;
        assert!((e / n as f64 / expect - 1.0).abs() < 0.02);
    }

    #[test]
    fn sharer_estimates_are_r_scaled_copies() {
        let (stats, factors) = setup();
        let mut rng = stream(22, &[purpose::TEST]);
        let (_, y) = block(&stats, &factors, &mut rng);
        let hh = stats.estimate_block(Estimator::Mmse, &y).hhat;
        let p = stats.pilot_of[0];
        let other = *stats.users_of_pilot[p].iter().find(|&&u| u != 0).unwrap();
        // Recover z from the own estimate, then rebuild the sharer's.
        let f = stats.r[0].herm().factor().unwrap();
        let z = f.solve_vec(&hh.column(0).into_owned());
        let rebuilt = stats.r[other].herm().mul_vec(&z);
        assert!((rebuilt - hh.column(other)).norm() < 1e-8 * hh.column(other).norm());
        let z2 = stats.despread_transform(p, &y.column(p).into_owned());
        assert!((z - &z2).norm() < 1e-8 * z2.norm());
    }

    #[test]
    fn uncorrelated_sharer_estimates_parallel() {
        let pl = plan(4, 1, 1);
        let r: Vec<CorrelationMatrix> = (0..4).map(|u| uncorrelated_r(1.0 / (1.0 + u as f64), 6).unwrap()).collect();
        let stats = BsStatistics::new(0, r, &pl, 0.1, 1.0).unwrap();
        let factors: Vec<ChannelFactor> = stats.r.iter().map(ChannelFactor::new).collect();
        let mut rng = stream(23, &[purpose::TEST]);
        let (_, y) = block(&stats, &factors, &mut rng);
        let hh = stats.estimate_block(Estimator::Mmse, &y).hhat;
        for u in 1..4 {
            let s = hh[(0, u)] / hh[(0, 0)];
            assert!((hh.column(u) - hh.column(0) * s).norm() < 1e-12);
        }
    }

    #[test]
    fn ew_mse_not_below_mmse_and_diagonal_coincidence() {
        let (stats, _) = setup();
        let d = stats.diagonal();
        assert!(d.is_diagonal());
        let mut rng = stream(24, &[purpose::TEST]);
        let y = crate::rng::cn_mat(&mut rng, stats.m(), stats.tau_p());
        let a = d.estimate_block(Estimator::Mmse, &y).hhat;
        let b = stats.estimate_block(Estimator::EwMmse, &y).hhat;
        assert!((a - b).norm() < 1e-13);
        for u in 0..stats.n_users() {
            let ew = stats.error_term(Estimator::EwMmse, u);
            let mm = d.error_term(Estimator::Mmse, u);
            assert!((ew.to_full() - mm.to_full()).norm() < 1e-14);
        }
        let c = stats.error_term(Estimator::Mmse, 0).to_full();
        assert!(*herm_eigenvalues(&c).last().unwrap() > -1e-12);
        assert!(c.trace().re <= stats.r[0].trace());
        assert!(frob2(&c) > 0.0);
    }
}
