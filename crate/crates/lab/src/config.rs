//! Experiment specifications: the TOML file layout, preset resolution and the
//! up-front validation of every sweep point.

use std::path::Path;

use mmimo_core::acquisition::{coherence_budget, AcquisitionSpec, RMethod};
use mmimo_core::combining::Scheme;
use mmimo_core::engine::{Evaluation, RunSpec};
use mmimo_core::estimation::Estimator;
use mmimo_core::pilots::BookKind;
use mmimo_core::se::Bound;
use mmimo_core::topology::{Fading, NetworkScenario};
use serde::Deserialize;

use crate::presets;
use crate::{LabError, Result};

/// NMSE-versus-N sweep of sample, regularised, DFT and diagonal estimates of Q.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmseSweep {
    pub ms: Vec<usize>,
    pub ns: Vec<usize>,
    #[serde(default)]
    pub cell: usize,
}

/// SE with acquired statistics as a function of the clean-pilot count N_R.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquiredSeSweep {
    pub n_r: Vec<usize>,
    /// Contaminated observations behind Q̂; defaults to the coherence budget τ_s.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<RMethod>,
    #[serde(default)]
    pub cell: usize,
    #[serde(default)]
    pub eta: Option<f64>,
}

fn default_methods() -> Vec<RMethod> {
    vec![RMethod::RDirect, RMethod::ViaQ]
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub scenario_preset: Option<String>,
    /// Any `NetworkScenario` keys; they override the preset scenario.
    pub scenario: Option<toml::Table>,
    pub seed: Option<u64>,
    pub drops: Option<usize>,
    pub blocks: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<Vec<usize>>,
    pub f: Option<Vec<usize>>,
    pub schemes: Option<Vec<Scheme>>,
    pub estimators: Option<Vec<Estimator>>,
    pub bounds: Option<Vec<Bound>>,
    pub dl: Option<bool>,
    pub cells: Option<Vec<usize>>,
    pub time_split: Option<bool>,
    pub overhead_aware: Option<bool>,
    pub gain_variations: Option<bool>,
    pub book: Option<BookKind>,
    pub bandwidth_hz: Option<f64>,
    pub stats_period_s: Option<f64>,
    pub acquisition: Option<AcquisitionSpec>,
    pub nmse: Option<NmseSweep>,
    pub acquired_se: Option<AcquiredSeSweep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: NetworkScenario,
    pub m: Vec<usize>,
    pub f: Vec<usize>,
    pub evaluations: Vec<Evaluation>,
    pub bounds: Vec<Bound>,
    pub dl: bool,
    pub drops: usize,
    pub blocks: usize,
    pub seed: u64,
    pub cells: Option<Vec<usize>>,
    pub time_split: bool,
    pub acquisition: Option<AcquisitionSpec>,
    /// Deduct clean-pilot overhead from the prelog.
    pub overhead_aware: bool,
    pub gain_variations: bool,
    pub book: BookKind,
    pub bandwidth_hz: f64,
    pub stats_period_s: f64,
    pub nmse: Option<NmseSweep>,
    pub acquired_se: Option<AcquiredSeSweep>,
}

impl ExperimentSpec {
    /// Single-point UL evaluation of `scenario` with the given schemes at their default estimators.
    pub fn basic(name: &str, scenario: NetworkScenario, schemes: &[Scheme]) -> Self {
        ExperimentSpec {
            name: name.into(),
            m: vec![scenario.m],
            f: vec![scenario.reuse_f],
            seed: scenario.seed,
            scenario,
            evaluations: schemes.iter().map(|&s| Evaluation::default_for(s)).collect(),
            bounds: vec![Bound::Uatf],
            dl: false,
            drops: 20,
            blocks: 20,
            cells: None,
            time_split: false,
            acquisition: None,
            overhead_aware: false,
            gain_variations: true,
            book: BookKind::Dft,
            bandwidth_hz: 20e6,
            stats_period_s: 0.5,
            nmse: None,
            acquired_se: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ExperimentFile = toml::from_str(text)?;
        Self::resolve(file)
    }

    /// Applies a parsed file on top of its experiment preset (or a bare
    /// scenario preset) and validates the result.
    pub fn resolve(file: ExperimentFile) -> Result<Self> {
        let mut spec = match (&file.preset, &file.scenario_preset) {
            (Some(p), _) => presets::experiment(p)?,
            (None, Some(s)) => ExperimentSpec::basic(s, presets::scenario(s)?, &[Scheme::Mmmse, Scheme::Smmse, Scheme::Zf, Scheme::Mr]),
            (None, None) => {
                return Err(LabError::Config("a config needs `preset` or `scenario_preset`".into()));
            }
        };
        if let Some(s) = &file.scenario_preset {
            if file.preset.is_some() {
                spec.scenario = presets::scenario(s)?;
            }
        }
        if let Some(over) = file.scenario {
            let (m, f, seed) = (over.contains_key("M"), over.contains_key("reuse_f"), over.contains_key("seed"));
            spec.scenario = merge_scenario(&spec.scenario, over)?;
            if m {
                spec.m = vec![spec.scenario.m];
            }
            if f {
                spec.f = vec![spec.scenario.reuse_f];
            }
            if seed {
                spec.seed = spec.scenario.seed;
            }
        }
        if let Some(n) = file.name {
            spec.name = n;
        }
        if let Some(v) = file.seed {
            spec.seed = v;
        }
        if let Some(v) = file.drops {
            spec.drops = v;
        }
        if let Some(v) = file.blocks {
            spec.blocks = v;
        }
        if let Some(v) = file.m {
            spec.m = v;
        }
        if let Some(v) = file.f {
            spec.f = v;
        }
        match (file.schemes, file.estimators) {
            (Some(s), Some(e)) => {
                spec.evaluations = s.iter().flat_map(|&sc| e.iter().map(move |&es| Evaluation::new(sc, es))).collect();
            }
            (Some(s), None) => spec.evaluations = s.iter().map(|&sc| Evaluation::default_for(sc)).collect(),
            (None, Some(e)) => {
                let schemes: Vec<Scheme> = spec.evaluations.iter().map(|ev| ev.scheme).collect();
                spec.evaluations = schemes.iter().flat_map(|&sc| e.iter().map(move |&es| Evaluation::new(sc, es))).collect();
            }
            (None, None) => {}
        }
        if let Some(v) = file.bounds {
            spec.bounds = v;
        }
        if let Some(v) = file.dl {
            spec.dl = v;
        }
        if let Some(v) = file.cells {
            spec.cells = Some(v);
        }
        if let Some(v) = file.time_split {
            spec.time_split = v;
        }
        if let Some(v) = file.overhead_aware {
            spec.overhead_aware = v;
        }
        if let Some(v) = file.gain_variations {
            spec.gain_variations = v;
        }
        if let Some(v) = file.book {
            spec.book = v;
        }
        if let Some(v) = file.bandwidth_hz {
            spec.bandwidth_hz = v;
        }
        if let Some(v) = file.stats_period_s {
            spec.stats_period_s = v;
        }
        if file.acquisition.is_some() {
            spec.acquisition = file.acquisition;
        }
        if file.nmse.is_some() {
            spec.nmse = file.nmse;
        }
        if file.acquired_se.is_some() {
            spec.acquired_se = file.acquired_se;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Scenario of one sweep point, with the experiment seed and gain switch applied.
    pub fn point_scenario(&self, m: usize, f: usize) -> NetworkScenario {
        let mut s = self.scenario.clone();
        s.m = m;
        s.reuse_f = f;
        s.seed = self.seed;
        if !self.gain_variations {
            if let Fading::LocalScattering { gain_std, .. } = &mut s.fading {
                *gain_std = 0.0;
            }
        }
        s
    }

    pub fn points(&self) -> Vec<(usize, usize)> {
        self.m.iter().flat_map(|&m| self.f.iter().map(move |&f| (m, f))).collect()
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            evaluations: self.evaluations.clone(),
            bounds: self.bounds.clone(),
            blocks: self.blocks,
            dl: self.dl,
            cells: self.cells.clone(),
            time_split: self.time_split,
            acquisition: self.acquisition,
            book: self.book,
        }
    }

    /// Coherence blocks over which the statistics stay fixed.
    pub fn tau_s(&self) -> Result<u64> {
        Ok(coherence_budget(self.bandwidth_hz, self.stats_period_s, self.scenario.tau_c)?)
    }

    /// Extra pilot samples per coherence block spent on clean pilots.
    pub fn overhead_samples(&self) -> Result<f64> {
        match (&self.acquisition, self.overhead_aware) {
            (Some(a), true) => {
                let tau_s = self.tau_s()?;
                let users = self.scenario.l * self.scenario.k;
                Ok(if tau_s == 0 { 0.0 } else { (a.n_r * users) as f64 / tau_s as f64 })
            }
            _ => Ok(0.0),
        }
    }

    /// Rejects the experiment before any computation if any sweep point,
    /// evaluation triple or acquisition setting is unusable.
    pub fn validate(&self) -> Result<()> {
        if self.drops == 0 {
            return Err(LabError::Config("drops must be at least 1".into()));
        }
        if self.m.is_empty() || self.f.is_empty() {
            return Err(LabError::Config("the M and f axes must not be empty".into()));
        }
        let run = self.run_spec();
        run.validate(self.scenario.l)?;
        for (m, f) in self.points() {
            let s = self.point_scenario(m, f);
            s.validate()?;
            if f * s.k > s.tau_c {
                return Err(mmimo_core::Error::Protocol(format!("f·K = {} exceeds tau_c = {} at f = {f}", f * s.k, s.tau_c)).into());
            }
        }
        if let Some(a) = &self.acquisition {
            if a.n_r == 0 || (a.method == RMethod::ViaQ && a.n == 0) {
                return Err(LabError::Config("acquired statistics need N ≥ 1 and N_R ≥ 1".into()));
            }
            if let Some(eta) = a.eta {
                if !(0.0..=1.0).contains(&eta) {
                    return Err(LabError::Config(format!("eta = {eta} is outside [0, 1]")));
                }
            }
        }
        if let Some(n) = &self.nmse {
            if n.ms.is_empty() || n.ns.is_empty() || n.ns.contains(&0) || n.ms.contains(&0) {
                return Err(LabError::Config("nmse sweep needs non-empty positive M and N lists".into()));
            }
            if n.cell >= self.scenario.l {
                return Err(LabError::Config(format!("nmse cell {} exceeds L = {}", n.cell, self.scenario.l)));
            }
        }
        if let Some(a) = &self.acquired_se {
            if a.n_r.is_empty() || a.n_r.contains(&0) || a.n == Some(0) {
                return Err(LabError::Config("acquired_se needs positive N and N_R values".into()));
            }
            if a.cell >= self.scenario.l {
                return Err(LabError::Config(format!("acquired_se cell {} exceeds L = {}", a.cell, self.scenario.l)));
            }
        }
        Ok(())
    }
}

/// Overrides top-level keys of `base` with `over`, then re-reads the scenario.
pub fn merge_scenario(base: &NetworkScenario, over: toml::Table) -> Result<NetworkScenario> {
    let mut table = toml::Table::try_from(base).map_err(|e| LabError::Config(format!("cannot serialise scenario: {e}")))?;
    for (k, v) in over {
        table.insert(k, v);
    }
    let s: NetworkScenario = toml::Value::Table(table).try_into()?;
    s.validate()?;
    Ok(s)
}
