//! Large-scale fading: distance-based path loss with spatially correlated
//! lognormal shadowing, and the per-link spatial correlation matrices.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Geometry;
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, CMatrix, C64};
use crate::units::db_to_linear;

/// Urban-microcell path loss `constant_db - slope_db * log10(d)` with shadowing.
/// The shadowing covariance between two UEs at the same AP is
/// `shadow_std_db^2 * 2^(-separation / decorrelation_m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PathLossParams {
    pub constant_db: f64,
    pub slope_db: f64,
    pub shadow_std_db: f64,
    pub decorrelation_m: f64,
    /// Correlation of the shadowing of one UE towards different APs.
    pub ap_shadow_correlation: f64,
    /// Lower clamp on the horizontal distance.
    pub min_distance_m: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            constant_db: -30.5,
            slope_db: 36.7,
            shadow_std_db: 4.0,
            decorrelation_m: 9.0,
            ap_shadow_correlation: 0.0,
            min_distance_m: 1.0,
        }
    }
}

impl PathLossParams {
    /// Deterministic path loss in dB for a 2-D distance and AP height.
    pub fn path_loss_db(&self, ground_distance: f64, ap_height: f64) -> f64 {
        let d2 = ground_distance.max(self.min_distance_m);
        let d3 = d2.hypot(ap_height);
        self.constant_db - self.slope_db * d3.log10()
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ap_shadow_correlation) {
            return Err(Error::InvalidParameter(format!(
                "ap_shadow_correlation {} outside [0, 1]",
                self.ap_shadow_correlation
            )));
        }
        if !(self.shadow_std_db >= 0.0) || !(self.decorrelation_m > 0.0) || !(self.min_distance_m > 0.0) {
            return Err(Error::InvalidParameter("path loss parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Spatial correlation across the antennas of one AP, normalized to unit
/// mean diagonal so that `xi = tr(Xi) / N`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "model", rename_all = "lowercase"))]
pub enum AntennaCorrelation {
    #[default]
    Uncorrelated,
    /// `R[i][j] = coefficient^|i - j|`.
    Exponential { coefficient: f64 },
}

impl AntennaCorrelation {
    pub fn matrix(&self, antennas: usize) -> CMatrix {
        match *self {
            AntennaCorrelation::Uncorrelated => CMatrix::identity(antennas),
            AntennaCorrelation::Exponential { coefficient } => CMatrix::from_fn(antennas, antennas, |i, j| {
                C64::new(coefficient.powi((i as i32 - j as i32).abs()), 0.0)
            }),
        }
    }
}

/// Second-order channel statistics for every AP-UE pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub(crate) aps: usize,
    pub(crate) ues: usize,
    pub(crate) antennas: usize,
    pub(crate) lsfc: Vec<f64>,
    pub(crate) correlation: Vec<CMatrix>,
}

impl ChannelStats {
    /// `Xi_{l,k} = xi_{l,k} R` with a common normalized antenna correlation.
    pub fn from_lsfc(
        aps: usize,
        ues: usize,
        antennas: usize,
        lsfc: Vec<f64>,
        antenna_correlation: &AntennaCorrelation,
    ) -> Result<Self> {
        if lsfc.len() != aps * ues {
            return Err(Error::DimensionMismatch {
                what: "LSFC table",
                expected: (aps, ues),
                found: (lsfc.len(), 1),
            });
        }
        if lsfc.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("LSFCs must be positive and finite".into()));
        }
        let r = antenna_correlation.matrix(antennas);
        let tr = r.trace().re / antennas as f64;
        if (tr - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("antenna correlation must have unit diagonal mean".into()));
        }
        psd_factor(&r)?;
        let correlation = lsfc.iter().map(|&x| r.scale_real(x)).collect();
        Ok(Self { aps, ues, antennas, lsfc, correlation })
    }

    /// User-supplied correlation matrices, row-major over `(l, k)`.
    pub fn from_matrices(aps: usize, ues: usize, matrices: Vec<CMatrix>) -> Result<Self> {
        if matrices.len() != aps * ues || matrices.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "correlation matrices",
                expected: (aps, ues),
                found: (matrices.len(), 1),
            });
        }
        let antennas = matrices[0].rows();
        let mut lsfc = Vec::with_capacity(matrices.len());
        for m in &matrices {
            if m.rows() != antennas || m.cols() != antennas {
                return Err(Error::DimensionMismatch {
                    what: "correlation matrix",
                    expected: (antennas, antennas),
                    found: (m.rows(), m.cols()),
                });
            }
            if m.sub(&m.adjoint()).norm_sqr().sqrt() > 1e-12 * m.norm_sqr().sqrt() {
                return Err(Error::InvalidParameter("correlation matrix is not Hermitian".into()));
            }
            psd_factor(m)?;
            let xi = m.trace().re / antennas as f64;
            if !(xi > 0.0) {
                return Err(Error::InvalidParameter("correlation matrix has zero trace".into()));
            }
            lsfc.push(xi);
        }
        Ok(Self { aps, ues, antennas, lsfc, correlation: matrices })
    }

    pub fn aps(&self) -> usize {
        self.aps
    }

    pub fn ues(&self) -> usize {
        self.ues
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// `xi_{l,k}`, linear power gain.
    pub fn lsfc(&self, l: usize, k: usize) -> f64 {
        self.lsfc[l * self.ues + k]
    }

    pub fn lsfc_table(&self) -> &[f64] {
        &self.lsfc
    }

    pub fn correlation(&self, l: usize, k: usize) -> &CMatrix {
        &self.correlation[l * self.ues + k]
    }

    /// `blkdiag(Xi_{l,1}, ..., Xi_{l,K})`.
    pub fn ap_block(&self, l: usize) -> CMatrix {
        let n = self.antennas;
        let mut out = CMatrix::zeros(n * self.ues, n * self.ues);
        for k in 0..self.ues {
            out.set_block(k * n, k * n, self.correlation(l, k));
        }
        out
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Shadowing draw in dB for every `(l, k)`, row-major.
pub fn sample_shadowing<R: Rng + ?Sized>(geom: &Geometry, params: &PathLossParams, rng: &mut R) -> Result<Vec<f64>> {
    params.validate()?;
    let (aps, ues) = (geom.aps.len(), geom.ues.len());
    let kernel = CMatrix::from_fn(ues, ues, |i, j| {
        let d = geom.ue_distance(i, j);
        C64::new(2f64.powf(-d / params.decorrelation_m), 0.0)
    });
    let factor = psd_factor(&kernel)?;
    let draw = |rng: &mut R| -> Vec<f64> {
        let w: Vec<f64> = (0..ues).map(|_| standard_normal(rng)).collect();
        (0..ues)
            .map(|i| (0..=i).map(|j| factor[(i, j)].re * w[j]).sum::<f64>() * params.shadow_std_db)
            .collect()
    };
    let rho = params.ap_shadow_correlation;
    let common = draw(rng);
    let mut out = Vec::with_capacity(aps * ues);
    for _ in 0..aps {
        let own = draw(rng);
        for k in 0..ues {
            out.push(rho.sqrt() * common[k] + (1.0 - rho).sqrt() * own[k]);
        }
    }
    Ok(out)
}

/// LSFCs from path loss plus shadowing, and the correlation matrices built
/// from them.
pub fn compute_channel_stats<R: Rng + ?Sized>(
    geom: &Geometry,
    params: &PathLossParams,
    antennas: usize,
    antenna_correlation: &AntennaCorrelation,
    rng: &mut R,
) -> Result<ChannelStats> {
    let (aps, ues) = (geom.aps.len(), geom.ues.len());
    let shadow = sample_shadowing(geom, params, rng)?;
    let mut lsfc = Vec::with_capacity(aps * ues);
    for l in 0..aps {
        for k in 0..ues {
            let pl = params.path_loss_db(geom.ground_distance(l, k), geom.aps[l][2]);
            lsfc.push(db_to_linear(pl + shadow[l * ues + k]));
        }
    }
    ChannelStats::from_lsfc(aps, ues, antennas, lsfc, antenna_correlation)
}
