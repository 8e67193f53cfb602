//! CSV emission. Every file starts with a `# mmimo <kind> v<version>` line;
//! floats use the shortest round-trip representation so identical runs give
//! identical bytes.

use std::io::Write;

use mmimo_core::complexity::ComplexityReport;

use crate::cov::{AcquiredSeRow, NmseRow};
use crate::harness::{CdfCurve, SeRow, SummaryRow};
use crate::Result;

pub const FORMAT_VERSION: u32 = 1;

pub const SE_HEADER: [&str; 15] =
    ["scenario", "M", "K", "L", "f", "scheme", "estimator", "bound", "cell", "ue", "sinr", "se", "stderr", "seed", "drop"];

fn writer<W: Write>(mut out: W, kind: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "# mmimo {kind} v{FORMAT_VERSION}")?;
    Ok(csv::Writer::from_writer(out))
}

fn f(x: f64) -> String {
    format!("{x}")
}

pub fn write_se<W: Write>(out: W, rows: &[SeRow]) -> Result<()> {
    let mut w = writer(out, "se-report")?;
    w.write_record(SE_HEADER)?;
    for r in rows {
        let e = &r.record;
        w.write_record([
            r.scenario.clone(),
            r.m.to_string(),
            r.k.to_string(),
            r.l.to_string(),
            r.f.to_string(),
            e.evaluation.scheme.name().into(),
            e.evaluation.estimator.name().into(),
            e.bound.name().into(),
            e.cell.to_string(),
            e.ue.to_string(),
            f(e.sinr),
            f(e.se),
            f(e.stderr),
            r.seed.to_string(),
            e.drop.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = writer(out, "se-summary")?;
    w.write_record(["M", "f", "scheme", "estimator", "bound", "sum_se_per_cell", "se_per_ue", "ues"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.f.to_string(),
            r.evaluation.scheme.name().into(),
            r.evaluation.estimator.name().into(),
            r.bound.name().into(),
            f(r.sum_se_per_cell),
            f(r.se_per_ue),
            r.ues.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf<W: Write>(out: W, curves: &[CdfCurve]) -> Result<()> {
    let mut w = writer(out, "se-cdf")?;
    w.write_record(["fading", "scheme", "estimator", "bound", "se", "cdf"])?;
    for c in curves {
        let n = c.se.len() as f64;
        for (i, &se) in c.se.iter().enumerate() {
            w.write_record([
                c.fading.to_string(),
                c.evaluation.scheme.name().into(),
                c.evaluation.estimator.name().into(),
                c.bound.name().into(),
                f(se),
                f((i + 1) as f64 / n),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_nmse<W: Write>(out: W, rows: &[NmseRow]) -> Result<()> {
    let mut w = writer(out, "acquisition-nmse")?;
    w.write_record(["method", "M", "N", "N_R", "eta", "nmse", "seed"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.n_r.map(|v| v.to_string()).unwrap_or_default(),
            f(r.eta),
            f(r.nmse),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_acquired_se<W: Write>(out: W, rows: &[AcquiredSeRow]) -> Result<()> {
    let mut w = writer(out, "acquisition-se")?;
    w.write_record(["method", "scheme", "estimator", "M", "N", "N_R", "diag_only", "sum_se", "truth_sum_se", "ratio", "seed"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.evaluation.scheme.name().into(),
            r.evaluation.estimator.name().into(),
            r.m.to_string(),
            r.n.map(|v| v.to_string()).unwrap_or_default(),
            r.n_r.map(|v| v.to_string()).unwrap_or_default(),
            r.diag_only.to_string(),
            f(r.sum_se),
            f(r.truth_sum_se),
            f(r.sum_se / r.truth_sum_se),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_complexity<W: Write>(out: W, rows: &[ComplexityReport]) -> Result<()> {
    let mut w = writer(out, "complexity")?;
    w.write_record(["scheme", "M", "K", "L", "tau_p", "f", "combining", "estimation", "precompute"])?;
    for r in rows {
        let p = r.params;
        w.write_record([
            r.scheme.name().to_string(),
            p.m.to_string(),
            p.k.to_string(),
            p.l.to_string(),
            p.tau_p.to_string(),
            p.f.to_string(),
            r.combining_mults.to_string(),
            r.estimation_mults.to_string(),
            r.precompute_mults.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text rendering of the complexity rows.
pub fn complexity_table(rows: &[ComplexityReport]) -> String {
    let mut s = format!("{:<10} {:>22} {:>22} {:>26}\n", "scheme", "combining/block", "estimation/block", "precompute/statistics");
    for r in rows {
        s += &format!("{:<10} {:>22} {:>22} {:>26}\n", r.scheme.name(), r.combining_mults, r.estimation_mults, r.precompute_mults);
    }
    s
}
