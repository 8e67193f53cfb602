//! Statistics-acquisition experiments: NMSE of Q estimates versus the number
//! of observations, and SE when acquired statistics replace the true ones.

use std::path::Path;

use mmimo_core::acquisition::{
    default_eta_grid, dft_q_estimate, nmse_diag, nmse_matrix, sample_from_truth, shrink, AcquisitionSpec, RMethod,
    ViaQNoise,
};
use mmimo_core::combining::Scheme;
use mmimo_core::engine::{DropSetup, Evaluation, Reported};
use mmimo_core::estimation::Estimator;
use mmimo_core::rng::{purpose, stream};
use mmimo_core::CMat;
use rayon::prelude::*;

use crate::config::{AcquiredSeSweep, ExperimentSpec, NmseSweep};
use crate::harness::run_single;
use crate::matio;
use crate::{LabError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NmseRow {
    pub method: &'static str,
    pub m: usize,
    pub n: usize,
    pub n_r: Option<usize>,
    pub eta: f64,
    pub nmse: f64,
    pub seed: u64,
}

/// Per (M, N): mean NMSE over drops and the own-cell UEs of `sweep.cell` for
/// the sample matrix, the shrunk matrix with η tuned on the mean NMSE, the
/// circulant projection and the diagonal alone.
pub fn nmse_experiment(spec: &ExperimentSpec, sweep: &NmseSweep) -> Result<Vec<NmseRow>> {
    spec.validate()?;
    let grid = default_eta_grid();
    let tasks: Vec<(usize, u64)> = sweep.ms.iter().flat_map(|&m| (0..spec.drops as u64).map(move |d| (m, d))).collect();
    // Per task: for every N, [sample, dft, diag, eta grid...] summed over UEs.
    let per_task: Vec<(usize, Vec<Vec<f64>>, usize)> = tasks
        .into_par_iter()
        .map(|(m, drop)| -> Result<(usize, Vec<Vec<f64>>, usize)> {
            let s = spec.point_scenario(m, spec.scenario.reuse_f);
            let setup = DropSetup::new(&s, drop, spec.book)?;
            let stats = setup.bs_statistics(sweep.cell)?;
            let mut sums = vec![vec![0.0; 3 + grid.len()]; sweep.ns.len()];
            for k in 0..s.k {
                let u = sweep.cell * s.k + k;
                let q = &stats.q[stats.pilot_of[u]];
                let truth = q.to_full();
                for (ni, &n) in sweep.ns.iter().enumerate() {
                    let mut rng = stream(spec.seed, &[purpose::ACQUISITION, drop, sweep.cell as u64, k as u64, n as u64, m as u64]);
                    let qhat = sample_from_truth(q, n, &mut rng)?;
                    let row = &mut sums[ni];
                    row[0] += nmse_matrix(&truth, &qhat)?;
                    row[1] += nmse_matrix(&truth, &dft_q_estimate(&qhat))?;
                    row[2] += nmse_diag(&truth, &qhat)?;
                    for (gi, &eta) in grid.iter().enumerate() {
                        row[3 + gi] += nmse_matrix(&truth, &shrink(&qhat, eta)?)?;
                    }
                }
            }
            Ok((m, sums, s.k))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &m in &sweep.ms {
        let mine: Vec<&(usize, Vec<Vec<f64>>, usize)> = per_task.iter().filter(|t| t.0 == m).collect();
        let count: usize = mine.iter().map(|t| t.2).sum();
        for (ni, &n) in sweep.ns.iter().enumerate() {
            let mean = |c: usize| mine.iter().map(|t| t.1[ni][c]).sum::<f64>() / count as f64;
            let row = |method, eta, nmse| NmseRow { method, m, n, n_r: None, eta, nmse, seed: spec.seed };
            rows.push(row("sample", 1.0, mean(0)));
            // Ties go to the smaller η, as in tune_eta.
            let (best, nmse) = (0..grid.len()).map(|g| (grid[g], mean(3 + g))).fold((f64::NAN, f64::INFINITY), |acc, x| {
                if x.1 < acc.1 {
                    x
                } else {
                    acc
                }
            });
            rows.push(row("regularized", best, nmse));
            rows.push(row("dft", 1.0, mean(1)));
            rows.push(row("diagonal", 1.0, mean(2)));
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquiredSeRow {
    /// "truth", "none" (LS estimates, no statistics) or the R method name.
    pub method: &'static str,
    pub evaluation: Evaluation,
    pub m: usize,
    pub n: Option<usize>,
    pub n_r: Option<usize>,
    pub diag_only: bool,
    /// Sum UL SE of the evaluated cell, averaged over drops.
    pub sum_se: f64,
    pub truth_sum_se: f64,
    pub seed: u64,
}

fn method_name(m: RMethod) -> &'static str {
    match m {
        RMethod::RDirect => "r-direct",
        RMethod::ViaQ => "via-q",
    }
}

fn cell_sums(spec: &ExperimentSpec) -> Result<Vec<(Evaluation, f64)>> {
    let rows = run_single(spec)?;
    Ok(spec
        .evaluations
        .iter()
        .map(|ev| {
            let total: f64 =
                rows.iter().filter(|r| r.record.evaluation == *ev && r.record.bound == Reported::Uatf).map(|r| r.record.se).sum();
            (*ev, total / spec.drops as f64)
        })
        .collect())
}

/// Full statistics feed M-MMSE with MMSE estimates, diagonal-only statistics
/// feed M-MMSE-EW. Benchmarks: true statistics for both, and M-MMSE with LS
/// estimates (no statistics at all).
pub fn acquired_se_experiment(spec: &ExperimentSpec, sweep: &AcquiredSeSweep) -> Result<Vec<AcquiredSeRow>> {
    spec.validate()?;
    let full = Evaluation::new(Scheme::Mmmse, Estimator::Mmse);
    let ew = Evaluation::new(Scheme::MmmseEw, Estimator::EwMmse);
    let ls = Evaluation::new(Scheme::Mmmse, Estimator::Ls);
    let base = ExperimentSpec {
        cells: Some(vec![sweep.cell]),
        dl: false,
        bounds: vec![mmimo_core::se::Bound::Uatf],
        time_split: false,
        acquisition: None,
        ..spec.clone()
    };
    let truth = cell_sums(&ExperimentSpec { evaluations: vec![full, ew, ls], ..base.clone() })?;
    let truth_of = |e: Evaluation| truth.iter().find(|t| t.0 == e).map(|t| t.1).expect("evaluated above");
    let n = match sweep.n {
        Some(n) => n,
        None => usize::try_from(spec.tau_s()?).map_err(|_| LabError::Config("coherence budget too large".into()))?,
    };
    let m = spec.scenario.m;
    let mut rows = vec![
        AcquiredSeRow { method: "truth", evaluation: full, m, n: None, n_r: None, diag_only: false, sum_se: truth_of(full), truth_sum_se: truth_of(full), seed: spec.seed },
        AcquiredSeRow { method: "truth", evaluation: ew, m, n: None, n_r: None, diag_only: true, sum_se: truth_of(ew), truth_sum_se: truth_of(ew), seed: spec.seed },
        AcquiredSeRow { method: "none", evaluation: ls, m, n: None, n_r: Some(0), diag_only: false, sum_se: truth_of(ls), truth_sum_se: truth_of(full), seed: spec.seed },
    ];
    for &method in &sweep.methods {
        for &n_r in &sweep.n_r {
            for (diag_only, ev) in [(false, full), (true, ew)] {
                let acquisition = AcquisitionSpec { method, n, n_r, diag_only, eta: sweep.eta, noise_mode: ViaQNoise::Difference };
                let sums = cell_sums(&ExperimentSpec { evaluations: vec![ev], acquisition: Some(acquisition), ..base.clone() })?;
                rows.push(AcquiredSeRow {
                    method: method_name(method),
                    evaluation: ev,
                    m,
                    n: (method == RMethod::ViaQ).then_some(n),
                    n_r: Some(n_r),
                    diag_only,
                    sum_se: sums[0].1,
                    truth_sum_se: truth_of(ev),
                    seed: spec.seed,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes every R^j_{li} of BS `j` in `drop` (at the scenario's own M) to
/// `dir` as `R_j{j}_l{l}_i{i}.csv` and `.bin`. Returns the number of matrices.
pub fn dump_statistics(spec: &ExperimentSpec, drop: u64, j: usize, dir: &Path) -> Result<usize> {
    let s = spec.point_scenario(spec.scenario.m, spec.scenario.reuse_f);
    if j >= s.l {
        return Err(LabError::Config(format!("BS {j} does not exist (L = {})", s.l)));
    }
    let setup = DropSetup::new(&s, drop, spec.book)?;
    std::fs::create_dir_all(dir)?;
    let mut count = 0;
    for l in 0..s.l {
        for i in 0..s.k {
            let r: CMat = setup.link_r(j, l, i, s.m)?.to_full();
            let stem = dir.join(format!("R_j{j}_l{l}_i{i}"));
            matio::write_csv(&stem.with_extension("csv"), &r)?;
            matio::write_bin(&stem.with_extension("bin"), &r)?;
            count += 1;
        }
    }
    Ok(count)
}
