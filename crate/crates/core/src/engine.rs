//! Monte Carlo evaluation of one drop, split into independent per-BS tasks.
//!
//! All powers are normalised by the UL noise-to-power ratio: a link with gain
//! β carries R scaled to β·ρ_ul/σ²_ul, pilots use ρ = 1 and the UL noise has
//! unit variance. DL results rescale the noise by (σ²_dl/ρ_dl)/(σ²_ul/ρ_ul).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::acquisition::{acquire_statistics, AcquisitionSpec};
use crate::combining::{duality_precoder, instantaneous_sinr, z_matrix, Scheme, StatisticalPrecomp};
use crate::error::{Error, Result};
use crate::estimation::{BsStatistics, Estimator};
use crate::linalg::CMat;
use crate::math::{exp, log2};
use crate::pilots::{build_pilot_book, default_groups, despread_all, synth_pilot_observation, BookKind, PilotPlan};
use crate::rng::{purpose, stream};
use crate::se::{dl_sinr, effective_sinr, prelog, Bound, DlAccumulator, InstAccumulator, UlAccumulator};
use crate::spatial::{local_scattering_r, uncorrelated_r, ChannelFactor, CorrelationMatrix, ScatteringParams};
use crate::topology::{drop_ues, large_scale_map, Fading, LargeScaleMap, NetworkScenario, UeDrop};

/// A combining scheme together with the estimator that feeds it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Evaluation {
    pub scheme: Scheme,
    pub estimator: Estimator,
}

impl Evaluation {
    pub fn new(scheme: Scheme, estimator: Estimator) -> Self {
        Evaluation { scheme, estimator }
    }

    /// The scheme with its own estimator, or MMSE when it has none.
    pub fn default_for(scheme: Scheme) -> Self {
        Evaluation { scheme, estimator: scheme.required_estimator().unwrap_or(Estimator::Mmse) }
    }
}

/// Rejects every (scheme, estimator, bound) triple that cannot be evaluated,
/// naming all offenders at once.
pub fn validate_combinations(evals: &[Evaluation], bounds: &[Bound]) -> Result<()> {
    let mut bad: Vec<String> = Vec::new();
    for e in evals {
        if let Some(req) = e.scheme.required_estimator() {
            if req != e.estimator {
                for b in bounds {
                    bad.push(format!(
                        "({}, {}, {}): {} is defined on {} estimates",
                        e.scheme.name(),
                        e.estimator.name(),
                        b.name(),
                        e.scheme.name(),
                        req.name()
                    ));
                }
                continue;
            }
        }
        if bounds.contains(&Bound::Inst) && e.estimator != Estimator::Mmse {
            bad.push(format!(
                "({}, {}, inst): the instantaneous bound needs MMSE estimates; use uatf instead",
                e.scheme.name(),
                e.estimator.name()
            ));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidCombination(bad.join("; ")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub evaluations: Vec<Evaluation>,
    pub bounds: Vec<Bound>,
    pub blocks: usize,
    pub dl: bool,
    /// BSs whose UEs are evaluated; all when `None`. DL needs every BS.
    pub cells: Option<Vec<usize>>,
    /// Cells use disjoint coherence blocks: no inter-cell UEs, prelog divided by L.
    pub time_split: bool,
    /// Replace the true statistics at each BS by acquired ones.
    pub acquisition: Option<AcquisitionSpec>,
    pub book: BookKind,
}

impl RunSpec {
    pub fn new(evaluations: Vec<Evaluation>, blocks: usize) -> Self {
        RunSpec {
            evaluations,
            bounds: vec![Bound::Uatf],
            blocks,
            dl: false,
            cells: None,
            time_split: false,
            acquisition: None,
            book: BookKind::Dft,
        }
    }

    pub fn validate(&self, l: usize) -> Result<()> {
        if self.blocks < 2 {
            return Err(Error::Config(format!("Monte Carlo bounds need at least 2 blocks, got {}", self.blocks)));
        }
        if self.evaluations.is_empty() || self.bounds.is_empty() {
            return Err(Error::Config("nothing to evaluate".into()));
        }
        validate_combinations(&self.evaluations, &self.bounds)?;
        if let Some(cells) = &self.cells {
            if cells.iter().any(|&c| c >= l) {
                return Err(Error::Config(format!("cell subset {cells:?} exceeds L = {l}")));
            }
            if self.dl {
                return Err(Error::Config("DL evaluation needs every BS; drop the cell subset".into()));
            }
        }
        if self.time_split && (self.dl || self.acquisition.is_some()) {
            return Err(Error::Config("time splitting is evaluated in the UL with true statistics only".into()));
        }
        Ok(())
    }

    pub fn active_cells(&self, l: usize) -> Vec<usize> {
        self.cells.clone().unwrap_or_else(|| (0..l).collect())
    }
}

/// UE positions, large-scale gains and the pilot plan of one drop.
#[derive(Clone, Debug)]
pub struct DropSetup {
    pub scenario: NetworkScenario,
    pub drop: u64,
    pub ues: UeDrop,
    pub map: LargeScaleMap,
    pub plan: PilotPlan,
    /// ρ_ul/σ²_ul, the factor applied to every gain.
    pub snr_scale: f64,
}

impl DropSetup {
    pub fn new(s: &NetworkScenario, drop: u64, book: BookKind) -> Result<Self> {
        s.validate()?;
        let ues = drop_ues(s, drop)?;
        let map = large_scale_map(s, &ues, drop)?;
        let f = s.reuse_f;
        if f * s.k > s.tau_c {
            return Err(Error::Protocol(format!("pilot length f*K = {} exceeds tau_c = {}", f * s.k, s.tau_c)));
        }
        let groups = match &s.group_of_cell {
            Some(g) => g.clone(),
            None => default_groups(s.l, f, s.is_grid())?,
        };
        let plan = PilotPlan::new(s.l, s.k, f, groups, build_pilot_book(f * s.k, 1.0, book)?)?;
        Ok(DropSetup { scenario: s.clone(), drop, ues, map, plan, snr_scale: 1.0 / s.ul_noise_ratio() })
    }

    /// Normalised gain of UE (l, i) at BS j.
    pub fn gain(&self, j: usize, l: usize, i: usize) -> f64 {
        self.map.beta(j, l, i) * self.snr_scale
    }

    /// Normalised gains of every UE at BS j, index l·K+i.
    pub fn gains(&self, j: usize) -> Vec<f64> {
        let k = self.scenario.k;
        (0..self.scenario.l * k).map(|u| self.gain(j, u / k, u % k)).collect()
    }

    /// Correlation matrix of the link from UE (l, i) to BS j. The scattering
    /// stream is keyed by the link, and gains are drawn after the angles, so
    /// matrices for growing M extend each other.
    pub fn link_r(&self, j: usize, l: usize, i: usize, m: usize) -> Result<CorrelationMatrix> {
        let beta = self.gain(j, l, i);
        match &self.scenario.fading {
            Fading::Uncorrelated => uncorrelated_r(beta, m),
            Fading::LocalScattering { clusters, cluster_spread_deg, asd_deg, gain_std } => {
                let mut rng = stream(self.scenario.seed, &[purpose::SCATTERING, self.drop, j as u64, l as u64, i as u64]);
                let deg = core::f64::consts::PI / 180.0;
                let p = ScatteringParams::draw(
                    self.map.angle(j, l, i),
                    *clusters,
                    cluster_spread_deg * deg,
                    asd_deg * deg,
                    *gain_std,
                    beta,
                    m,
                    &mut rng,
                );
                local_scattering_r(&p, m)
            }
        }
    }

    pub fn bs_statistics(&self, j: usize) -> Result<BsStatistics> {
        let (l_n, k) = (self.scenario.l, self.scenario.k);
        let m = self.scenario.m;
        let r = (0..l_n * k).map(|u| self.link_r(j, u / k, u % k, m)).collect::<Result<Vec<_>>>()?;
        BsStatistics::new(j, r, &self.plan, 1.0, 1.0)
    }

    /// Statistics of cell j on its own: one cell, f = 1, τ_p = K.
    fn own_cell_statistics(&self, j: usize, book: BookKind) -> Result<(BsStatistics, PilotPlan)> {
        let k = self.scenario.k;
        let m = self.scenario.m;
        let plan = PilotPlan::new(1, k, 1, vec![0], build_pilot_book(k, 1.0, book)?)?;
        let r = (0..k).map(|i| self.link_r(j, j, i, m)).collect::<Result<Vec<_>>>()?;
        Ok((BsStatistics::new(0, r, &plan, 1.0, 1.0)?, plan))
    }
}

/// Accumulated block statistics of one BS for every evaluation.
#[derive(Clone, Debug)]
pub struct BsOutcome {
    pub j: usize,
    pub ul: Vec<UlAccumulator>,
    pub inst: Vec<Option<InstAccumulator>>,
    pub dl: Vec<Option<DlAccumulator>>,
}

/// Runs `spec.blocks` coherence blocks at BS j: channel draws, full pilot
/// synthesis and despreading, estimation, combining and accumulation.
pub fn simulate_bs(setup: &DropSetup, j: usize, spec: &RunSpec) -> Result<BsOutcome> {
    let s = &setup.scenario;
    let k = s.k;
    let (truth, plan, jj) = if spec.time_split {
        let (st, p) = setup.own_cell_statistics(j, spec.book)?;
        (st, p, 0)
    } else {
        (setup.bs_statistics(j)?, setup.plan.clone(), j)
    };
    let used = match &spec.acquisition {
        Some(a) => {
            let mut rng = stream(s.seed, &[purpose::ACQUISITION, setup.drop, j as u64]);
            acquire_statistics(&truth, &plan, 1.0, 1.0, a, &mut rng)?
        }
        None => truth.clone(),
    };
    let n_users = truth.n_users();

    let estimators: BTreeSet<Estimator> = spec.evaluations.iter().map(|e| e.estimator).collect();
    let precomps: Vec<(Estimator, StatisticalPrecomp)> = estimators
        .iter()
        .map(|&est| {
            let schemes: Vec<Scheme> = spec.evaluations.iter().filter(|e| e.estimator == est).map(|e| e.scheme).collect();
            StatisticalPrecomp::new(&used, est, &schemes).map(|p| (est, p))
        })
        .collect::<Result<_>>()?;
    let want_inst = spec.bounds.contains(&Bound::Inst);
    let z_inst = if want_inst { Some(z_matrix(&used, Estimator::Mmse)) } else { None };
    let factors: Vec<ChannelFactor> = truth.r.iter().map(ChannelFactor::new).collect();

    let n_eval = spec.evaluations.len();
    let mut out = BsOutcome {
        j,
        ul: (0..n_eval).map(|_| UlAccumulator::new(jj, k, n_users)).collect(),
        inst: (0..n_eval).map(|_| want_inst.then(|| InstAccumulator::new(k))).collect(),
        dl: (0..n_eval).map(|_| spec.dl.then(|| DlAccumulator::new(jj, k, n_users))).collect(),
    };
    let m = truth.m();
    let mut h = CMat::zeros(m, n_users);
    for b in 0..spec.blocks {
        let mut rng = stream(s.seed, &[purpose::CHANNEL, setup.drop, j as u64, b as u64]);
        for (u, f) in factors.iter().enumerate() {
            f.sample_into(&mut rng, h.column_mut(u).as_mut_slice());
        }
        let y = synth_pilot_observation(&h, &plan, 1.0, &mut rng);
        let d = despread_all(&y, &plan);
        let hhat: Vec<(Estimator, CMat)> = estimators.iter().map(|&e| (e, used.estimate_block(e, &d).hhat)).collect();
        for (e, ev) in spec.evaluations.iter().enumerate() {
            let est_ix = estimators.iter().position(|&x| x == ev.estimator).expect("collected above");
            let hh = &hhat[est_ix].1;
            let v = precomps[est_ix].1.combine(ev.scheme, hh, jj, k)?;
            out.ul[e].add_block(&v, &h);
            if let (Some(acc), Some(z)) = (out.inst[e].as_mut(), z_inst.as_ref()) {
                for kk in 0..k {
                    acc.add(kk, instantaneous_sinr(&v.column(kk).into_owned(), hh, jj * k + kk, z));
                }
            }
            if let Some(acc) = out.dl[e].as_mut() {
                acc.add_block(&duality_precoder(&v)?, &h);
            }
        }
    }
    Ok(out)
}

/// What bound a reported SINR comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reported {
    Uatf,
    Inst,
    Hardening,
}

impl Reported {
    pub fn name(self) -> &'static str {
        match self {
            Reported::Uatf => "uatf",
            Reported::Inst => "inst",
            Reported::Hardening => "hardening",
        }
    }
}

/// One UE's SINR and SE under one evaluation and bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UeRecord {
    pub drop: u64,
    pub evaluation: Evaluation,
    pub bound: Reported,
    pub cell: usize,
    pub ue: usize,
    pub sinr: f64,
    pub stderr: f64,
    pub se: f64,
}

/// Turns per-BS outcomes of one drop into per-UE records. `overhead` is
/// deducted from the pilot length when computing the prelog.
pub fn assemble(setup: &DropSetup, spec: &RunSpec, outcomes: &[BsOutcome], overhead: f64) -> Result<Vec<UeRecord>> {
    let s = &setup.scenario;
    let k = s.k;
    let pl = if spec.time_split {
        prelog(s.tau_c, k) / s.l as f64
    } else {
        (prelog(s.tau_c, s.tau_p()) - overhead / s.tau_c as f64).max(0.0)
    };
    let mut recs = Vec::new();
    for (e, ev) in spec.evaluations.iter().enumerate() {
        for o in outcomes {
            for kk in 0..k {
                let g = o.ul[e].sinr(kk, 1.0);
                recs.push(UeRecord {
                    drop: setup.drop,
                    evaluation: *ev,
                    bound: Reported::Uatf,
                    cell: o.j,
                    ue: kk,
                    sinr: g.sinr,
                    stderr: g.stderr,
                    se: pl * log2(1.0 + g.sinr.max(0.0)),
                });
                if let Some(acc) = &o.inst[e] {
                    let (mean, se_mean) = acc.mean_log(kk);
                    let sinr = effective_sinr(mean);
                    recs.push(UeRecord {
                        drop: setup.drop,
                        evaluation: *ev,
                        bound: Reported::Inst,
                        cell: o.j,
                        ue: kk,
                        sinr,
                        stderr: core::f64::consts::LN_2 * exp(mean * core::f64::consts::LN_2) * se_mean,
                        se: pl * mean,
                    });
                }
            }
        }
        if spec.dl {
            let mut accs: Vec<DlAccumulator> = Vec::with_capacity(s.l);
            for l in 0..s.l {
                let o = outcomes
                    .iter()
                    .find(|o| o.j == l)
                    .ok_or_else(|| Error::Config(format!("DL assembly is missing BS {l}")))?;
                accs.push(o.dl[e].clone().ok_or_else(|| Error::Config("DL was not accumulated".into()))?);
            }
            let ratio = (s.dl_noise_mw() / s.dl_power_mw()) * setup.snr_scale;
            for (u, g) in dl_sinr(&accs, ratio)?.into_iter().enumerate() {
                recs.push(UeRecord {
                    drop: setup.drop,
                    evaluation: *ev,
                    bound: Reported::Hardening,
                    cell: u / k,
                    ue: u % k,
                    sinr: g.sinr,
                    stderr: g.stderr,
                    se: pl * log2(1.0 + g.sinr.max(0.0)),
                });
            }
        }
    }
    Ok(recs)
}

/// Sequential evaluation of one drop.
pub fn run_drop(s: &NetworkScenario, drop: u64, spec: &RunSpec) -> Result<Vec<UeRecord>> {
    spec.validate(s.l)?;
    let setup = DropSetup::new(s, drop, spec.book)?;
    let outcomes = spec.active_cells(s.l).into_iter().map(|j| simulate_bs(&setup, j, spec)).collect::<Result<Vec<_>>>()?;
    assemble(&setup, spec, &outcomes, 0.0)
}
