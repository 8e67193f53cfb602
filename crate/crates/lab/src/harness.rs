//! Parallel evaluation of experiment specs. Tasks are (sweep point, drop)
//! pairs, each fanning out over its BSs; rayon's indexed collect keeps the
//! output order fixed, so results do not depend on the worker count.

use std::collections::BTreeSet;

use mmimo_core::engine::{assemble, simulate_bs, DropSetup, Evaluation, Reported, UeRecord};
use mmimo_core::topology::Fading;
use rayon::prelude::*;

use crate::config::ExperimentSpec;
use crate::{LabError, Result};

/// One per-UE result together with the sweep point it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct SeRow {
    pub scenario: String,
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub f: usize,
    pub seed: u64,
    pub record: UeRecord,
}

/// Runs `body` on a pool of `threads` workers (rayon's default when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(body()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| LabError::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(body))
        }
    }
}

fn run_points(spec: &ExperimentSpec, points: &[(usize, usize)]) -> Result<Vec<SeRow>> {
    spec.validate()?;
    let run = spec.run_spec();
    let overhead = spec.overhead_samples()?;
    let tasks: Vec<(usize, u64)> =
        (0..points.len()).flat_map(|p| (0..spec.drops as u64).map(move |d| (p, d))).collect();
    let chunks: Vec<Vec<SeRow>> = tasks
        .into_par_iter()
        .map(|(p, drop)| -> Result<Vec<SeRow>> {
            let (m, f) = points[p];
            let s = spec.point_scenario(m, f);
            let setup = DropSetup::new(&s, drop, run.book)?;
            let outcomes = run
                .active_cells(s.l)
                .into_par_iter()
                .map(|j| simulate_bs(&setup, j, &run))
                .collect::<mmimo_core::Result<Vec<_>>>()?;
            log::debug!("{}: M={m} f={f} drop {drop} done", spec.name);
            Ok(assemble(&setup, &run, &outcomes, overhead)?
                .into_iter()
                .map(|record| SeRow { scenario: spec.name.clone(), m, k: s.k, l: s.l, f, seed: spec.seed, record })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Every (M, f) point of the sweep axes.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SeRow>> {
    run_points(spec, &spec.points())
}

/// The scenario's own M and f only.
pub fn run_single(spec: &ExperimentSpec) -> Result<Vec<SeRow>> {
    run_points(spec, &[(spec.scenario.m, spec.scenario.reuse_f)])
}

/// Averages of one (point, evaluation, bound) group.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub m: usize,
    pub f: usize,
    pub evaluation: Evaluation,
    pub bound: Reported,
    /// Sum SE of a cell, averaged over evaluated cells and drops.
    pub sum_se_per_cell: f64,
    pub se_per_ue: f64,
    pub ues: usize,
}

pub fn summarize(rows: &[SeRow]) -> Vec<SummaryRow> {
    struct Group {
        key: (usize, usize, Evaluation, Reported),
        sum: f64,
        n: usize,
        cells: BTreeSet<(u64, usize)>,
    }
    let mut groups: Vec<Group> = Vec::new();
    for r in rows {
        let key = (r.m, r.f, r.record.evaluation, r.record.bound);
        let ix = match groups.iter().position(|g| g.key == key) {
            Some(i) => i,
            None => {
                groups.push(Group { key, sum: 0.0, n: 0, cells: BTreeSet::new() });
                groups.len() - 1
            }
        };
        let g = &mut groups[ix];
        g.sum += r.record.se;
        g.n += 1;
        g.cells.insert((r.record.drop, r.record.cell));
    }
    groups
        .into_iter()
        .map(|g| SummaryRow {
            m: g.key.0,
            f: g.key.1,
            evaluation: g.key.2,
            bound: g.key.3,
            sum_se_per_cell: g.sum / g.cells.len() as f64,
            se_per_ue: g.sum / g.n as f64,
            ues: g.n,
        })
        .collect()
}

/// Pooled per-UE SEs of one (fading, evaluation, bound) curve, sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfCurve {
    pub fading: &'static str,
    pub evaluation: Evaluation,
    pub bound: Reported,
    pub se: Vec<f64>,
}

impl CdfCurve {
    /// Empirical CDF at `x`.
    pub fn at(&self, x: f64) -> f64 {
        self.se.partition_point(|&v| v <= x) as f64 / self.se.len() as f64
    }
}

fn fading_name(f: &Fading) -> &'static str {
    match f {
        Fading::Uncorrelated => "uncorrelated",
        Fading::LocalScattering { .. } => "correlated",
    }
}

/// Per-UE SE distributions at the scenario's own point; with `both`, the
/// same drops are also evaluated under uncorrelated fading.
pub fn cdf_experiment(spec: &ExperimentSpec, both: bool) -> Result<Vec<CdfCurve>> {
    let mut variants = vec![spec.clone()];
    if both && !matches!(spec.scenario.fading, Fading::Uncorrelated) {
        let mut u = spec.clone();
        u.scenario.fading = Fading::Uncorrelated;
        variants.push(u);
    }
    let mut curves = Vec::new();
    for v in &variants {
        let rows = run_single(v)?;
        let fading = fading_name(&v.scenario.fading);
        for ev in &v.evaluations {
            for b in [Reported::Uatf, Reported::Inst, Reported::Hardening] {
                let mut se: Vec<f64> =
                    rows.iter().filter(|r| r.record.evaluation == *ev && r.record.bound == b).map(|r| r.record.se).collect();
                if se.is_empty() {
                    continue;
                }
                se.sort_by(f64::total_cmp);
                curves.push(CdfCurve { fading, evaluation: *ev, bound: b, se });
            }
        }
    }
    Ok(curves)
}
