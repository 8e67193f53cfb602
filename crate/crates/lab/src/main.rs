use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmimo_core::combining::Scheme;
use mmimo_core::complexity::{count, ComplexityParams, TABLE_SCHEMES};
use mmimo_lab::config::{ExperimentFile, ExperimentSpec};
use mmimo_lab::harness::{self, summarize};
use mmimo_lab::{cov, output, presets, LabError, Result};

#[derive(Parser)]
#[command(name = "mmimo", version, about = "Multicell massive MIMO Monte Carlo experiments")]
struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Named experiment preset (see `mmimo presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drops: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
struct Axes {
    /// Antenna counts, comma separated.
    #[arg(long = "m", value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Pilot reuse factors, comma separated.
    #[arg(long = "f", value_delimiter = ',')]
    f: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CovKind {
    Nmse,
    Se,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the experiment at the scenario's own M and f.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        axes: Axes,
    },
    /// Evaluate every (M, f) point of the experiment's axes.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        axes: Axes,
    },
    /// Pooled per-UE SE samples for CDF plots.
    Cdf {
        #[command(flatten)]
        common: Common,
        /// Also evaluate the same drops under uncorrelated fading.
        #[arg(long)]
        both: bool,
    },
    /// Statistics-acquisition experiments, or a dump of the true correlation matrices.
    Cov {
        #[command(flatten)]
        common: Common,
        /// Which acquisition experiment to run (default: whichever the experiment defines).
        #[arg(long, value_enum)]
        kind: Option<CovKind>,
        /// Write R^j_{li} of BS --bs in drop --drop to this directory instead.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        bs: usize,
        #[arg(long, default_value_t = 0)]
        drop: u64,
    },
    /// Complex multiplications per coherence block and per statistics epoch.
    Complexity {
        #[arg(long = "m")]
        m: u64,
        #[arg(long = "k")]
        k: u64,
        #[arg(long = "l")]
        l: u64,
        #[arg(long = "f", default_value_t = 1)]
        f: u64,
        /// Defaults to f·K.
        #[arg(long)]
        tau_p: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List scenario and experiment presets.
    Presets,
}

fn load(common: &Common, axes: Option<&Axes>) -> Result<ExperimentSpec> {
    let mut file = match (&common.config, &common.preset) {
        (Some(path), _) => toml::from_str::<ExperimentFile>(&std::fs::read_to_string(path)?)?,
        (None, Some(p)) => ExperimentFile { preset: Some(p.clone()), ..Default::default() },
        (None, None) => return Err(LabError::Config("pass --preset or --config".into())),
    };
    file.seed = common.seed.or(file.seed);
    file.drops = common.drops.or(file.drops);
    file.blocks = common.blocks.or(file.blocks);
    let mut spec = ExperimentSpec::resolve(file)?;
    if let Some(a) = axes {
        if let Some(m) = &a.m {
            spec.m = m.clone();
            spec.scenario.m = m[0];
        }
        if let Some(f) = &a.f {
            spec.f = f.clone();
            spec.scenario.reuse_f = f[0];
        }
        spec.validate()?;
    }
    Ok(spec)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn report_summary(rows: &[harness::SeRow]) {
    eprintln!("{:>6} {:>3} {:>9} {:>8} {:>10} {:>16} {:>10}", "M", "f", "scheme", "est", "bound", "sum SE/cell", "SE/UE");
    for s in summarize(rows) {
        eprintln!(
            "{:>6} {:>3} {:>9} {:>8} {:>10} {:>16.3} {:>10.4}",
            s.m,
            s.f,
            s.evaluation.scheme.name(),
            s.evaluation.estimator.name(),
            s.bound.name(),
            s.sum_se_per_cell,
            s.se_per_ue
        );
    }
}

fn execute(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    let start = Instant::now();
    match cli.cmd {
        Cmd::Run { common, axes } => {
            let spec = load(&common, Some(&axes))?;
            let rows = harness::with_threads(threads, || harness::run_single(&spec))??;
            output::write_se(sink(&common.out)?, &rows)?;
            report_summary(&rows);
        }
        Cmd::Sweep { common, axes } => {
            let spec = load(&common, Some(&axes))?;
            let rows = harness::with_threads(threads, || harness::run_sweep(&spec))??;
            output::write_se(sink(&common.out)?, &rows)?;
            report_summary(&rows);
        }
        Cmd::Cdf { common, both } => {
            let spec = load(&common, None)?;
            let curves = harness::with_threads(threads, || harness::cdf_experiment(&spec, both))??;
            output::write_cdf(sink(&common.out)?, &curves)?;
        }
        Cmd::Cov { common, kind, dump, bs, drop } => {
            let spec = load(&common, None)?;
            if let Some(dir) = dump {
                let n = cov::dump_statistics(&spec, drop, bs, &dir)?;
                eprintln!("wrote {n} matrices to {}", dir.display());
            } else {
                let kind = kind
                    .or(spec.nmse.as_ref().map(|_| CovKind::Nmse))
                    .or(spec.acquired_se.as_ref().map(|_| CovKind::Se))
                    .ok_or_else(|| LabError::Config("the experiment defines neither [nmse] nor [acquired_se]".into()))?;
                match kind {
                    CovKind::Nmse => {
                        let sweep = spec.nmse.clone().ok_or_else(|| LabError::Config("no [nmse] section".into()))?;
                        let rows = harness::with_threads(threads, || cov::nmse_experiment(&spec, &sweep))??;
                        output::write_nmse(sink(&common.out)?, &rows)?;
                    }
                    CovKind::Se => {
                        let sweep =
                            spec.acquired_se.clone().ok_or_else(|| LabError::Config("no [acquired_se] section".into()))?;
                        let rows = harness::with_threads(threads, || cov::acquired_se_experiment(&spec, &sweep))??;
                        output::write_acquired_se(sink(&common.out)?, &rows)?;
                    }
                }
            }
        }
        Cmd::Complexity { m, k, l, f, tau_p, out } => {
            let params = ComplexityParams { m, k, l, f, tau_p: tau_p.unwrap_or(f * k) };
            let rows = TABLE_SCHEMES
                .iter()
                .filter(|&&s| s != Scheme::Obe || l % f == 0)
                .map(|&s| count(s, params))
                .collect::<mmimo_core::Result<Vec<_>>>()?;
            match &out {
                Some(_) => output::write_complexity(sink(&out)?, &rows)?,
                None => print!("{}", output::complexity_table(&rows)),
            }
        }
        Cmd::Presets => {
            println!("scenarios:");
            for s in presets::SCENARIOS {
                println!("  {s}");
            }
            println!("experiments:");
            for (name, about) in presets::EXPERIMENTS {
                println!("  {name:<22} {about}");
            }
        }
    }
    log::info!("finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
