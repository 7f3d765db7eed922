use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use super::{Constellation, SystemDims};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PilotKind {
    /// Orthogonal Hadamard rows reused round-robin across UEs.
    Hadamard,
    /// First `T_p` columns of the `K x K` DFT matrix.
    Dft,
}

impl PilotKind {
    pub fn name(self) -> &'static str {
        match self {
            PilotKind::Hadamard => "hadamard",
            PilotKind::Dft => "dft",
        }
    }
}

impl core::str::FromStr for PilotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hadamard" => Ok(PilotKind::Hadamard),
            "dft" => Ok(PilotKind::Dft),
            other => Err(Error::InvalidParameter(alloc::format!("unknown pilot type `{other}`"))),
        }
    }
}

pub fn make_pilots(kind: PilotKind, dims: &SystemDims, constellation: &Constellation) -> Result<CMatrix> {
    match kind {
        PilotKind::Hadamard => make_hadamard_pilots(dims, constellation),
        PilotKind::Dft => make_dft_pilots(dims, constellation),
    }
}

/// Sylvester Hadamard pilots. UE `k` uses row `k mod T_p`; every entry has
/// power `sigma_x^2`.
pub fn make_hadamard_pilots(dims: &SystemDims, constellation: &Constellation) -> Result<CMatrix> {
    let tp = dims.pilot_len;
    if tp == 0 || !tp.is_power_of_two() {
        return Err(Error::PilotLengthNotPowerOfTwo(tp));
    }
    if tp > dims.ues {
        return Err(Error::PilotLongerThanUes { pilot_len: tp, ues: dims.ues });
    }
    let amp = constellation.power().sqrt();
    Ok(CMatrix::from_fn(dims.ues, tp, |k, t| {
        // H[i][j] = (-1)^{popcount(i & j)} for the Sylvester construction
        let sign = if ((k % tp) & t).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        C64::new(sign * amp, 0.0)
    }))
}

/// Truncated DFT pilots, entry `(k, t) = sqrt(sigma_x^2) exp(-j 2 pi k t / K)`.
pub fn make_dft_pilots(dims: &SystemDims, constellation: &Constellation) -> Result<CMatrix> {
    let (k_count, tp) = (dims.ues, dims.pilot_len);
    if tp > k_count {
        return Err(Error::PilotLongerThanUes { pilot_len: tp, ues: k_count });
    }
    let amp = constellation.power().sqrt();
    Ok(CMatrix::from_fn(k_count, tp, |k, t| {
        // reduce the exponent modulo K before scaling to keep the phase exact
        let phase = -2.0 * PI * ((k * t) % k_count) as f64 / k_count as f64;
        C64::from_polar(amp, phase)
    }))
}
