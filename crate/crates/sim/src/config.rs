//! Experiment configuration and study presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cellfree_core::ep::EpConfig;
use cellfree_core::model::{PilotKind, ScenarioParams, SystemDims};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    EpMod,
    EpLegacy,
    MmsePilotCsi,
    MmsePerfectCsi,
    GenieMmse,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::EpMod,
        Algorithm::EpLegacy,
        Algorithm::MmsePilotCsi,
        Algorithm::MmsePerfectCsi,
        Algorithm::GenieMmse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::EpMod => "ep_mod",
            Algorithm::EpLegacy => "ep_legacy",
            Algorithm::MmsePilotCsi => "mmse_pilot_csi",
            Algorithm::MmsePerfectCsi => "mmse_perfect_csi",
            Algorithm::GenieMmse => "genie_mmse",
        }
    }

    /// Whether the algorithm produces a channel estimate.
    pub fn has_nmse(self) -> bool {
        self != Algorithm::MmsePerfectCsi
    }

    /// Whether the algorithm detects data.
    pub fn has_ser(self) -> bool {
        self != Algorithm::GenieMmse
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| SimError::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    #[default]
    SerVsPower,
    NmseVsPower,
    NmseVsIter,
    CdfSer,
    CdfNmse,
    CdfCk,
    SerVsCk,
}

/// What a study needs to simulate. Studies of the same kind share rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    PowerSweep,
    Trace,
    FixedPower,
    MetricOnly,
}

/// Defaults a study applies to every field the config leaves unset.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub powers_dbm: Vec<f64>,
    pub data_lens: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub desk_trials: (usize, usize),
    pub full_trials: (usize, usize),
}

impl Study {
    pub const ALL: [Study; 7] = [
        Study::SerVsPower,
        Study::NmseVsPower,
        Study::NmseVsIter,
        Study::CdfSer,
        Study::CdfNmse,
        Study::CdfCk,
        Study::SerVsCk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::SerVsPower => "ser_vs_power",
            Study::NmseVsPower => "nmse_vs_power",
            Study::NmseVsIter => "nmse_vs_iter",
            Study::CdfSer => "cdf_ser",
            Study::CdfNmse => "cdf_nmse",
            Study::CdfCk => "cdf_ck",
            Study::SerVsCk => "ser_vs_ck",
        }
    }

    pub fn kind(self) -> RunKind {
        match self {
            Study::SerVsPower | Study::NmseVsPower => RunKind::PowerSweep,
            Study::NmseVsIter => RunKind::Trace,
            Study::CdfSer | Study::CdfNmse | Study::SerVsCk => RunKind::FixedPower,
            Study::CdfCk => RunKind::MetricOnly,
        }
    }

    pub fn preset(self) -> Preset {
        let sweep: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64).collect();
        match self.kind() {
            RunKind::PowerSweep => Preset {
                powers_dbm: sweep,
                data_lens: vec![10, 30],
                algorithms: Algorithm::ALL.to_vec(),
                desk_trials: (200, 1),
                full_trials: (10_000, 1),
            },
            RunKind::Trace => Preset {
                powers_dbm: vec![16.0],
                data_lens: vec![10],
                algorithms: vec![Algorithm::EpMod, Algorithm::EpLegacy],
                desk_trials: (200, 1),
                full_trials: (10_000, 1),
            },
            RunKind::FixedPower => Preset {
                powers_dbm: vec![16.0],
                data_lens: vec![30],
                algorithms: if self == Study::SerVsCk {
                    vec![Algorithm::EpMod]
                } else {
                    Algorithm::ALL.to_vec()
                },
                desk_trials: (100, 100),
                full_trials: (1000, 1000),
            },
            RunKind::MetricOnly => Preset {
                powers_dbm: vec![16.0],
                data_lens: vec![30],
                algorithms: Vec::new(),
                desk_trials: (10_000, 1),
                full_trials: (100_000, 1),
            },
        }
    }

    /// Whether rows produced for `other` can feed this study's series.
    pub fn accepts(self, other: Study) -> bool {
        self == Study::CdfCk || self.kind() == other.kind()
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| SimError::Config(format!("unknown study `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub antennas: usize,
    pub ues: usize,
    pub pilot_len: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { antennas: 1, ues: 8, pilot_len: 4 }
    }
}

/// Everything `run_experiment` needs. Unset optional fields fall back to
/// the study preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub system: SystemConfig,
    pub scenario: ScenarioParams,
    pub noise_dbm: f64,
    pub qam_order: usize,
    pub pilots: Vec<PilotKind>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub powers_dbm: Option<Vec<f64>>,
    pub data_lens: Option<Vec<usize>>,
    pub drops: Option<usize>,
    pub realizations: Option<usize>,
    pub full_scale: bool,
    pub ep: EpConfig,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            study: Study::default(),
            seed: 1,
            output_dir: PathBuf::from("results"),
            system: SystemConfig::default(),
            scenario: ScenarioParams::default(),
            noise_dbm: -96.0,
            qam_order: 4,
            pilots: vec![PilotKind::Hadamard, PilotKind::Dft],
            algorithms: None,
            powers_dbm: None,
            data_lens: None,
            drops: None,
            realizations: None,
            full_scale: false,
            ep: EpConfig::default(),
            threads: None,
        }
    }
}

/// A fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub study: Study,
    pub seed: u64,
    pub system: SystemConfig,
    pub aps: usize,
    pub scenario: ScenarioParams,
    pub noise_dbm: f64,
    pub qam_order: usize,
    pub pilots: Vec<PilotKind>,
    pub algorithms: Vec<Algorithm>,
    pub powers_dbm: Vec<f64>,
    pub data_lens: Vec<usize>,
    pub drops: usize,
    pub realizations: usize,
    pub ep: EpConfig,
    pub threads: Option<usize>,
}

impl Plan {
    pub fn dims(&self, data_len: usize) -> Result<SystemDims> {
        Ok(SystemDims::new(self.aps, self.system.antennas, self.system.ues, self.system.pilot_len, data_len)?)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies the study preset and validates the result.
    pub fn resolve(&self) -> Result<Plan> {
        let preset = self.study.preset();
        let (desk_d, desk_r) = if self.full_scale { preset.full_trials } else { preset.desk_trials };
        let mut ep = self.ep;
        if self.study.kind() == RunKind::Trace {
            ep.trace_nmse = true;
            ep.max_iter = ep.max_iter.max(40);
        }
        let plan = Plan {
            study: self.study,
            seed: self.seed,
            system: self.system,
            aps: self.scenario.layout.ap_grid.len(),
            scenario: self.scenario.clone(),
            noise_dbm: self.noise_dbm,
            qam_order: self.qam_order,
            pilots: dedup(self.pilots.clone()),
            algorithms: dedup(self.algorithms.clone().unwrap_or(preset.algorithms)),
            powers_dbm: self.powers_dbm.clone().unwrap_or(preset.powers_dbm),
            data_lens: dedup(self.data_lens.clone().unwrap_or(preset.data_lens)),
            drops: self.drops.unwrap_or(desk_d),
            // c_k depends on the large-scale fading only.
            realizations: if self.study.kind() == RunKind::MetricOnly {
                1
            } else {
                self.realizations.unwrap_or(desk_r)
            },
            ep,
            threads: self.threads,
        };
        validate(&plan)?;
        Ok(plan)
    }
}

fn dedup<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v.dedup();
    v
}

fn validate(plan: &Plan) -> Result<()> {
    let fail = |msg: String| Err(SimError::Config(msg));
    if plan.drops == 0 || plan.realizations == 0 {
        return fail("trial counts must be at least 1".into());
    }
    if plan.study.kind() != RunKind::MetricOnly && plan.algorithms.is_empty() {
        return fail("algorithm list is empty".into());
    }
    if plan.pilots.is_empty() {
        return fail("pilot list is empty".into());
    }
    if plan.powers_dbm.is_empty() || plan.powers_dbm.iter().any(|p| !p.is_finite()) {
        return fail("power sweep must be a nonempty list of finite values".into());
    }
    if plan.data_lens.is_empty() || plan.data_lens.contains(&0) {
        return fail("data lengths must be positive".into());
    }
    if !plan.noise_dbm.is_finite() {
        return fail("noise power must be finite".into());
    }
    if plan.threads == Some(0) {
        return fail("thread count must be positive".into());
    }
    for &td in &plan.data_lens {
        plan.dims(td)?;
    }
    Ok(())
}

/// Parses `a:b:step` into the inclusive list `a, a + step, ..., b`.
pub fn parse_power_sweep(s: &str) -> Result<Vec<f64>> {
    let bad = || SimError::Config(format!("power sweep `{s}` is not of the form a:b:step"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + step * i as f64).collect())
}

/// Parses `D×R`, `DxR` or a bare drop count `D`.
pub fn parse_trials(s: &str) -> Result<(usize, usize)> {
    let bad = || SimError::Config(format!("trial count `{s}` is not of the form DxR"));
    let parts: Vec<&str> = s.split(['x', 'X', '×']).collect();
    let num = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
    match parts[..] {
        [d] => Ok((num(d)?, 1)),
        [d, r] => Ok((num(d)?, num(r)?)),
        _ => Err(bad()),
    }
}
