//! Linear MMSE baselines: per-AP channel estimation from known symbols
//! (pilot-based or genie-aided) and a centralized linear MMSE detector.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, Cholesky};
use crate::model::{ChannelStats, Constellation, Frame};

/// Conditional means and error covariances of every `h_{l,k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MmseEstimate {
    aps: usize,
    ues: usize,
    antennas: usize,
    means: Vec<CVector>,
    covs: Vec<CMatrix>,
}

impl MmseEstimate {
    /// Row-major over `(l, k)`.
    pub fn from_parts(aps: usize, ues: usize, means: Vec<CVector>, covs: Vec<CMatrix>) -> Result<Self> {
        if means.len() != aps * ues || covs.len() != aps * ues || means.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "MMSE estimate",
                expected: (aps, ues),
                found: (means.len(), covs.len()),
            });
        }
        let antennas = means[0].len();
        Ok(Self { aps, ues, antennas, means, covs })
    }

    /// The channel prior itself: zero mean, covariance `Xi_{l,k}`.
    pub fn prior(stats: &ChannelStats) -> Self {
        let (aps, ues, n) = (stats.aps(), stats.ues(), stats.antennas());
        let mut means = Vec::with_capacity(aps * ues);
        let mut covs = Vec::with_capacity(aps * ues);
        for l in 0..aps {
            for k in 0..ues {
                means.push(CVector::zeros(n));
                covs.push(stats.correlation(l, k).clone());
            }
        }
        Self { aps, ues, antennas: n, means, covs }
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

    pub fn mean(&self, l: usize, k: usize) -> &CVector {
        &self.means[l * self.ues + k]
    }

    pub fn cov(&self, l: usize, k: usize) -> &CMatrix {
        &self.covs[l * self.ues + k]
    }

    /// Stacked `LN x K` channel estimate.
    pub fn channel_matrix(&self) -> CMatrix {
        let n = self.antennas;
        let mut h = CMatrix::zeros(self.aps * n, self.ues);
        for l in 0..self.aps {
            for k in 0..self.ues {
                let m = self.mean(l, k);
                for i in 0..n {
                    h[(l * n + i, k)] = m[i];
                }
            }
        }
        h
    }
}

/// LMMSE estimate of `vec(H_l)` from `Y_l = H_l S + N` for known symbols `S`
/// (`K x T'`), returned per UE.
///
/// With `S~ = S^T ⊗ I_N` and `Xi_l = blkdiag(Xi_{l,k})`:
/// `mu = Xi_l S~^H (S~ Xi_l S~^H + sigma^2 I)^{-1} vec(Y_l)` and
/// `C = Xi_l - Xi_l S~^H (S~ Xi_l S~^H + sigma^2 I)^{-1} S~ Xi_l`.
pub fn lmmse_ap(
    received: &CMatrix,
    symbols: &CMatrix,
    stats: &ChannelStats,
    l: usize,
    noise_power: f64,
) -> Result<(Vec<CVector>, Vec<CMatrix>)> {
    let (n, k) = (stats.antennas(), stats.ues());
    let t = symbols.cols();
    if symbols.rows() != k {
        return Err(Error::DimensionMismatch {
            what: "symbol matrix",
            expected: (k, t),
            found: (symbols.rows(), symbols.cols()),
        });
    }
    if received.rows() != n || received.cols() != t {
        return Err(Error::DimensionMismatch {
            what: "received block",
            expected: (n, t),
            found: (received.rows(), received.cols()),
        });
    }
    if !(noise_power >= 0.0) {
        return Err(Error::InvalidParameter("noise power must be non-negative".into()));
    }
    if t == 0 {
        let means = (0..k).map(|_| CVector::zeros(n)).collect();
        let covs = (0..k).map(|kk| stats.correlation(l, kk).clone()).collect();
        return Ok((means, covs));
    }

    let xi = stats.ap_block(l);
    let s_tilde = symbols.transpose().kron(&CMatrix::identity(n));
    let xi_sh = xi.mul(&s_tilde.adjoint());
    let gram = s_tilde.mul(&xi_sh).add_diag(noise_power);
    let chol = Cholesky::new(&gram).map_err(|_| Error::Singular("LMMSE channel estimate"))?;

    // vec() stacks columns: entry (i, tau) -> tau * N + i
    let y = CVector::from_fn(n * t, |idx| received[(idx % n, idx / n)]);
    let mean = xi_sh.mul_vec(&chol.solve_vec(&y));
    let cov = xi.sub(&xi_sh.mul(&chol.solve(&xi_sh.adjoint()))).hermitian_part();

    let means = (0..k).map(|kk| CVector::from_fn(n, |i| mean[kk * n + i])).collect();
    let covs = (0..k).map(|kk| cov.block(kk * n, kk * n, n, n)).collect();
    Ok((means, covs))
}

/// Per-AP LMMSE from the pilot block of AP `l`.
pub fn pilot_mmse_ap(
    received_pilots: &CMatrix,
    pilots: &CMatrix,
    stats: &ChannelStats,
    l: usize,
    noise_power: f64,
) -> Result<(Vec<CVector>, Vec<CMatrix>)> {
    lmmse_ap(received_pilots, pilots, stats, l, noise_power)
}

fn collect(stats: &ChannelStats, mut per_ap: impl FnMut(usize) -> Result<(Vec<CVector>, Vec<CMatrix>)>) -> Result<MmseEstimate> {
    let (aps, ues) = (stats.aps(), stats.ues());
    let mut means = Vec::with_capacity(aps * ues);
    let mut covs = Vec::with_capacity(aps * ues);
    for l in 0..aps {
        let (m, c) = per_ap(l)?;
        means.extend(m);
        covs.extend(c);
    }
    MmseEstimate::from_parts(aps, ues, means, covs)
}

/// Pilot-based MMSE estimate at every AP.
pub fn pilot_mmse(frame: &Frame, stats: &ChannelStats) -> Result<MmseEstimate> {
    collect(stats, |l| pilot_mmse_ap(&frame.received_pilots_at(l), &frame.pilots, stats, l, frame.noise_power))
}

/// Genie-aided MMSE: the same estimator fed with every transmitted symbol.
pub fn genie_mmse(frame: &Frame, stats: &ChannelStats) -> Result<MmseEstimate> {
    let symbols = frame.symbols();
    collect(stats, |l| lmmse_ap(&frame.received_at(l), &symbols, stats, l, frame.noise_power))
}

/// Centralized linear MMSE detection with hard decisions.
///
/// Per slot, `x = (H^H H + sigma_n^2 / sigma_x^2 I)^{-1} H^H y`, then each
/// entry is mapped to the nearest symbol. Returns constellation indices,
/// row-major `K x T_d`.
pub fn mmse_detect(
    received_data: &CMatrix,
    channel_est: &CMatrix,
    noise_power: f64,
    constellation: &Constellation,
) -> Result<Vec<usize>> {
    let k = channel_est.cols();
    let td = received_data.cols();
    if received_data.rows() != channel_est.rows() {
        return Err(Error::DimensionMismatch {
            what: "received data",
            expected: (channel_est.rows(), td),
            found: (received_data.rows(), td),
        });
    }
    let hh = channel_est.adjoint();
    let gram = hh.mul(channel_est).add_diag(noise_power / constellation.power());
    let chol = Cholesky::new(&gram).map_err(|_| Error::Singular("MMSE detector"))?;
    let equalized = chol.solve(&hh.mul(received_data));
    let mut out = Vec::with_capacity(k * td);
    for kk in 0..k {
        for t in 0..td {
            out.push(constellation.nearest(equalized[(kk, t)]));
        }
    }
    Ok(out)
}
