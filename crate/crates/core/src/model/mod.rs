//! Scenario generation and received-signal synthesis.

mod channel;
mod constellation;
mod frame;
mod geometry;
mod pilots;

pub use channel::{compute_channel_stats, sample_shadowing, AntennaCorrelation, ChannelStats, PathLossParams};
pub use constellation::Constellation;
pub use frame::{complex_normal, sample_frame, Frame};
pub use geometry::{ap_positions, sample_geometry, ApGrid, Area, Geometry, LayoutParams};
pub use pilots::{make_dft_pilots, make_hadamard_pilots, make_pilots, PilotKind};

use alloc::format;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Network and coherence-block sizes.
///
/// `pilot_len` or `data_len` may be zero (pure-prior or pilot-only blocks),
/// but the block itself is never empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemDims {
    pub aps: usize,
    pub antennas: usize,
    pub ues: usize,
    pub pilot_len: usize,
    pub data_len: usize,
}

impl SystemDims {
    pub fn new(aps: usize, antennas: usize, ues: usize, pilot_len: usize, data_len: usize) -> Result<Self> {
        let d = Self { aps, antennas, ues, pilot_len, data_len };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.aps == 0 || self.antennas == 0 || self.ues == 0 {
            return Err(Error::InvalidDims(format!(
                "L={}, N={}, K={} must all be positive",
                self.aps, self.antennas, self.ues
            )));
        }
        if self.block_len() == 0 {
            return Err(Error::InvalidDims("empty coherence block".into()));
        }
        Ok(())
    }

    /// `T = T_p + T_d`.
    pub fn block_len(&self) -> usize {
        self.pilot_len + self.data_len
    }

    /// The contaminated regime needs fewer pilot slots than UEs.
    pub fn require_contaminated(&self) -> Result<()> {
        if self.pilot_len >= self.ues {
            return Err(Error::InvalidDims(format!(
                "pilot length {} is not smaller than UE count {}",
                self.pilot_len, self.ues
            )));
        }
        Ok(())
    }
}

/// Everything the scenario generator needs besides the dimensions.
#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ScenarioParams {
    pub layout: LayoutParams,
    pub path_loss: PathLossParams,
    pub antenna_correlation: AntennaCorrelation,
}

/// A UE drop: geometry, large-scale statistics, pilots, alphabet and noise.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub dims: SystemDims,
    pub geometry: Geometry,
    pub stats: ChannelStats,
    pub pilots: CMatrix,
    pub constellation: Constellation,
    pub noise_power: f64,
}

impl Scenario {
    /// Samples the geometry (UE positions first) and then the shadowing.
    #[allow(clippy::too_many_arguments)]
    pub fn sample<R: Rng + ?Sized>(
        dims: SystemDims,
        params: &ScenarioParams,
        pilot_kind: PilotKind,
        constellation: Constellation,
        noise_power: f64,
        rng: &mut R,
    ) -> Result<Self> {
        dims.validate()?;
        if params.layout.ap_grid.len() != dims.aps {
            return Err(Error::InvalidDims(format!(
                "AP grid has {} APs but L = {}",
                params.layout.ap_grid.len(),
                dims.aps
            )));
        }
        let geometry = sample_geometry(&params.layout, dims.ues, rng);
        let stats = compute_channel_stats(&geometry, &params.path_loss, dims.antennas, &params.antenna_correlation, rng)?;
        let pilots = make_pilots(pilot_kind, &dims, &constellation)?;
        Ok(Self { dims, geometry, stats, pilots, constellation, noise_power })
    }

    pub fn sample_frame<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Frame> {
        sample_frame(&self.dims, &self.stats, &self.pilots, &self.constellation, self.noise_power, rng)
    }
}
