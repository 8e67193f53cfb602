//! Named scenarios and experiments. Monte Carlo budgets are the reduced
//! 20 drops × 20 blocks unless a preset needs otherwise.

use mmimo_core::combining::Scheme;
use mmimo_core::engine::Evaluation;
use mmimo_core::estimation::Estimator;
use mmimo_core::se::Bound;
use mmimo_core::topology::{Fading, NetworkScenario};

use crate::config::{AcquiredSeSweep, ExperimentSpec, NmseSweep};
use crate::{LabError, Result};

pub const SCENARIOS: [&str; 3] = ["running-example", "running-example-uncorrelated", "four-cell-corners"];

pub const EXPERIMENTS: [(&str, &str); 11] = [
    ("running-example", "M=100, f=1: M-MMSE, S-MMSE, ZF and MR in UL and DL"),
    ("fig4-uncorrelated", "UL sum SE of MR and ZF versus M under uncorrelated fading"),
    ("correlated-vs-m", "UL and DL sum SE versus M under correlated fading"),
    ("table3", "UL and DL sum SE at M=100 for f = 1, 2, 4"),
    ("cdf", "per-UE UL SE samples at M=100, f=2"),
    ("estimators", "UL sum SE at M=100, f=2 with MMSE, EW-MMSE and LS estimates"),
    ("fourcell-asymptotic", "four-cell SE per UE versus M up to 1024"),
    ("fourcell-timesplit", "four-cell M-MMSE with cells on disjoint coherence blocks"),
    ("obe", "M-MMSE, OBE, S-MMSE and MR versus M"),
    ("acq-nmse", "NMSE of sample, regularised, DFT and diagonal estimates of Q versus N"),
    ("acq-se", "M-MMSE and M-MMSE-EW SE with acquired statistics versus N_R"),
];

const MAIN: [Scheme; 4] = [Scheme::Mmmse, Scheme::Smmse, Scheme::Zf, Scheme::Mr];

pub fn scenario(name: &str) -> Result<NetworkScenario> {
    match name {
        "running-example" => Ok(NetworkScenario::running_example()),
        "running-example-uncorrelated" => Ok(NetworkScenario {
            name: name.into(),
            fading: Fading::Uncorrelated,
            ..NetworkScenario::running_example()
        }),
        "four-cell-corners" => Ok(NetworkScenario::four_cell_corners()),
        _ => Err(LabError::Config(format!("unknown scenario preset '{name}' (known: {})", SCENARIOS.join(", ")))),
    }
}

fn with_m(mut s: NetworkScenario, m: usize) -> NetworkScenario {
    s.m = m;
    s
}

pub fn experiment(name: &str) -> Result<ExperimentSpec> {
    let re = NetworkScenario::running_example;
    let spec = match name {
        "running-example" => ExperimentSpec { dl: true, ..ExperimentSpec::basic(name, re(), &MAIN) },
        "fig4-uncorrelated" => ExperimentSpec {
            m: vec![10, 20, 30, 50, 75, 100, 150, 200, 250],
            ..ExperimentSpec::basic(name, with_m(scenario("running-example-uncorrelated")?, 10), &[Scheme::Mr, Scheme::Zf])
        },
        "correlated-vs-m" => ExperimentSpec {
            m: vec![10, 25, 50, 100, 150, 200],
            dl: true,
            ..ExperimentSpec::basic(name, with_m(re(), 10), &MAIN)
        },
        "table3" => ExperimentSpec { f: vec![1, 2, 4], dl: true, ..ExperimentSpec::basic(name, re(), &MAIN) },
        "cdf" => {
            let mut s = re();
            s.reuse_f = 2;
            ExperimentSpec::basic(name, s, &MAIN)
        }
        "estimators" => {
            let mut s = re();
            s.reuse_f = 2;
            let evaluations =
                MAIN.iter().flat_map(|&sc| Estimator::ALL.iter().map(move |&e| Evaluation::new(sc, e))).collect();
            ExperimentSpec { evaluations, ..ExperimentSpec::basic(name, s, &MAIN) }
        }
        "fourcell-asymptotic" => ExperimentSpec {
            m: vec![32, 64, 128, 256, 512, 1024],
            drops: 2,
            blocks: 50,
            cells: Some(vec![0]),
            ..ExperimentSpec::basic(
                name,
                with_m(NetworkScenario::four_cell_corners(), 32),
                &[Scheme::Mmmse, Scheme::Smmse, Scheme::Mr, Scheme::MmmseEw],
            )
        },
        "fourcell-timesplit" => ExperimentSpec {
            time_split: true,
            ..ExperimentSpec { evaluations: vec![Evaluation::default_for(Scheme::Mmmse)], ..experiment("fourcell-asymptotic")? }
        },
        "obe" => ExperimentSpec {
            m: vec![10, 25, 50, 100, 200],
            ..ExperimentSpec::basic(name, with_m(re(), 10), &[Scheme::Mmmse, Scheme::Obe, Scheme::Smmse, Scheme::Mr])
        },
        "acq-nmse" => ExperimentSpec {
            drops: 10,
            gain_variations: false,
            nmse: Some(NmseSweep {
                ms: vec![32, 64, 128],
                ns: vec![10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000],
                cell: 0,
            }),
            ..ExperimentSpec::basic(name, re(), &[Scheme::Mmmse])
        },
        "acq-se" => ExperimentSpec {
            drops: 5,
            blocks: 50,
            bounds: vec![Bound::Uatf],
            acquired_se: Some(AcquiredSeSweep {
                n_r: vec![10, 30, 100, 300, 1000, 3000],
                n: None,
                methods: vec![mmimo_core::acquisition::RMethod::RDirect, mmimo_core::acquisition::RMethod::ViaQ],
                cell: 0,
                eta: None,
            }),
            ..ExperimentSpec::basic(name, re(), &[Scheme::Mmmse, Scheme::MmmseEw])
        },
        _ => {
            let known: Vec<&str> = EXPERIMENTS.iter().map(|e| e.0).collect();
            return Err(LabError::Config(format!("unknown preset '{name}' (known: {})", known.join(", "))));
        }
    };
    let spec = ExperimentSpec { name: name.into(), ..spec };
    spec.validate()?;
    Ok(spec)
}
