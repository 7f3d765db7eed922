use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChannelStats, Constellation, SystemDims};
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, CMatrix, CVector, C64};

/// One coherence block: transmitted symbols, channel and received signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub dims: SystemDims,
    /// `K x T_p`.
    pub pilots: CMatrix,
    /// `K x T_d`.
    pub data: CMatrix,
    /// Constellation index of every data symbol, row-major `K x T_d`.
    pub data_indices: Vec<usize>,
    /// `LN x K`; rows `l*N .. (l+1)*N` belong to AP `l`.
    pub channel: CMatrix,
    /// `LN x T`.
    pub received: CMatrix,
    pub noise_power: f64,
}

/// `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

impl Frame {
    /// Assembles `Y = H [X_p X_d] + noise`.
    pub fn from_parts(
        dims: SystemDims,
        channel: CMatrix,
        pilots: CMatrix,
        data_indices: Vec<usize>,
        constellation: &Constellation,
        noise: Option<&CMatrix>,
        noise_power: f64,
    ) -> Result<Self> {
        let (ln, k, tp, td) = (dims.aps * dims.antennas, dims.ues, dims.pilot_len, dims.data_len);
        check_shape("channel", &channel, ln, k)?;
        check_shape("pilots", &pilots, k, tp)?;
        if data_indices.len() != k * td {
            return Err(Error::DimensionMismatch {
                what: "data indices",
                expected: (k, td),
                found: (data_indices.len(), 1),
            });
        }
        if data_indices.iter().any(|&i| i >= constellation.len()) {
            return Err(Error::InvalidParameter("data index outside constellation".into()));
        }
        let data = CMatrix::from_fn(k, td, |kk, t| constellation.symbol(data_indices[kk * td + t]));
        let symbols = CMatrix::from_fn(k, tp + td, |kk, t| if t < tp { pilots[(kk, t)] } else { data[(kk, t - tp)] });
        let mut received = channel.mul(&symbols);
        if let Some(n) = noise {
            check_shape("noise", n, ln, tp + td)?;
            received.add_assign(n);
        }
        Ok(Self { dims, pilots, data, data_indices, channel, received, noise_power })
    }

    /// Full `K x T` symbol matrix `[X_p X_d]`.
    pub fn symbols(&self) -> CMatrix {
        let tp = self.dims.pilot_len;
        CMatrix::from_fn(self.dims.ues, self.dims.block_len(), |k, t| {
            if t < tp {
                self.pilots[(k, t)]
            } else {
                self.data[(k, t - tp)]
            }
        })
    }

    /// `h_{l,k}`.
    pub fn channel_vec(&self, l: usize, k: usize) -> CVector {
        let n = self.dims.antennas;
        CVector::from_fn(n, |i| self.channel[(l * n + i, k)])
    }

    /// `y_{l,t}`.
    pub fn received_vec(&self, l: usize, t: usize) -> CVector {
        let n = self.dims.antennas;
        CVector::from_fn(n, |i| self.received[(l * n + i, t)])
    }

    /// `N x T` received block of AP `l`.
    pub fn received_at(&self, l: usize) -> CMatrix {
        let n = self.dims.antennas;
        self.received.block(l * n, 0, n, self.dims.block_len())
    }

    /// `N x T_p` received pilot block of AP `l`.
    pub fn received_pilots_at(&self, l: usize) -> CMatrix {
        let n = self.dims.antennas;
        self.received.block(l * n, 0, n, self.dims.pilot_len)
    }

    /// `LN x T_d` received data block.
    pub fn received_data(&self) -> CMatrix {
        let d = &self.dims;
        self.received.block(0, d.pilot_len, d.aps * d.antennas, d.data_len)
    }
}

fn check_shape(what: &'static str, m: &CMatrix, rows: usize, cols: usize) -> Result<()> {
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::DimensionMismatch {
            what,
            expected: (rows, cols),
            found: (m.rows(), m.cols()),
        });
    }
    Ok(())
}

/// Draws one block: `h_{l,k} ~ CN(0, Xi_{l,k})` independently, data uniform
/// over the constellation, noise `CN(0, sigma_n^2)`. Draw order is channel
/// (AP-major), then data (UE-major), then noise (row-major).
pub fn sample_frame<R: Rng + ?Sized>(
    dims: &SystemDims,
    stats: &ChannelStats,
    pilots: &CMatrix,
    constellation: &Constellation,
    noise_power: f64,
    rng: &mut R,
) -> Result<Frame> {
    let (n, k, l) = (dims.antennas, dims.ues, dims.aps);
    if stats.aps() != l || stats.ues() != k || stats.antennas() != n {
        return Err(Error::DimensionMismatch {
            what: "channel statistics",
            expected: (l, k),
            found: (stats.aps(), stats.ues()),
        });
    }
    if !(noise_power >= 0.0) {
        return Err(Error::InvalidParameter("noise power must be non-negative".into()));
    }
    let mut channel = CMatrix::zeros(l * n, k);
    for ap in 0..l {
        for ue in 0..k {
            let g = psd_factor(stats.correlation(ap, ue))?;
            let w = CVector::from_fn(n, |_| complex_normal(rng));
            let h = g.mul_vec(&w);
            for i in 0..n {
                channel[(ap * n + i, ue)] = h[i];
            }
        }
    }
    let m = constellation.len();
    let data_indices: Vec<usize> = (0..k * dims.data_len).map(|_| rng.random_range(0..m)).collect();
    let std = noise_power.sqrt();
    let noise = CMatrix::from_fn(l * n, dims.block_len(), |_, _| complex_normal(rng) * std);
    Frame::from_parts(*dims, channel, pilots.clone(), data_indices, constellation, Some(&noise), noise_power)
}
