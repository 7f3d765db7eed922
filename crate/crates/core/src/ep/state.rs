use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::belief::{CategoricalBelief, GaussianBelief, Moments};
use super::updates::{self, collapse_data, collapse_pilot, exclusive_sums, guarded_quotient, Marginal};
use crate::baseline::MmseEstimate;
use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, CMatrix, CVector, C64};
use crate::model::{Constellation, SystemDims};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EpConfig {
    pub max_iter: usize,
    /// Weight of the new value in `eta * new + (1 - eta) * old`.
    pub damping: f64,
    /// Restrict the channel-side updates to data slots (pilot symbols enter
    /// only through the prior).
    pub legacy_mode: bool,
    /// Relative variance floor; the absolute floor is `variance_floor * sigma_x^2`.
    pub variance_floor: f64,
    pub prob_floor: f64,
    /// Record the channel NMSE against the frame's true channel after every
    /// iteration.
    pub trace_nmse: bool,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            max_iter: 20,
            damping: 0.5,
            legacy_mode: false,
            variance_floor: 1e-12,
            prob_floor: 1e-12,
            trace_nmse: false,
        }
    }
}

impl EpConfig {
    pub fn validate(&self, alphabet: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.damping) {
            return Err(Error::InvalidParameter(format!("damping {} outside [0, 1]", self.damping)));
        }
        if !(self.variance_floor >= 0.0) || !(self.prob_floor >= 0.0) || self.prob_floor * alphabet as f64 >= 1.0 {
            return Err(Error::InvalidParameter("invalid floors".into()));
        }
        Ok(())
    }
}

/// All edge messages of the factor graph for one coherence block.
///
/// Gaussian messages are indexed by `(l, k, t)` over the whole block;
/// categorical messages only exist for data slots and are indexed by
/// `(l, k, t - T_p)`. A committed message is also the last valid one, so a
/// rejected update simply leaves the stored message in place.
#[derive(Clone, Debug)]
pub struct EpState {
    pub(super) dims: SystemDims,
    pub(super) config: EpConfig,
    pub(super) symbols: Vec<C64>,
    pub(super) pilots: CMatrix,
    pub(super) received: CMatrix,
    pub(super) noise_power: f64,
    pub(super) variance_floor: f64,

    pub(super) prior: Vec<GaussianBelief>,
    pub(super) y_to_z: Vec<GaussianBelief>,
    pub(super) z_to_z: Vec<GaussianBelief>,
    pub(super) z_to_h: Vec<GaussianBelief>,
    pub(super) h_to_z: Vec<GaussianBelief>,
    pub(super) z_to_x: Vec<CategoricalBelief>,
    pub(super) x_to_z: Vec<CategoricalBelief>,

    pub(super) iteration: usize,
    pub(super) guard_rejections: usize,
}

impl EpState {
    /// Message initialization: the channel prior on `Psi_h -> h` and every
    /// `h -> Psi_z`; the induced `z` statistics on `Psi_z -> z`; everything
    /// else uninformative or uniform.
    pub fn new(
        dims: SystemDims,
        prior: &MmseEstimate,
        pilots: &CMatrix,
        received: &CMatrix,
        constellation: &Constellation,
        noise_power: f64,
        config: EpConfig,
    ) -> Result<Self> {
        dims.validate()?;
        config.validate(constellation.len())?;
        let (l_n, n, k_n, tp, t_n) = (dims.aps, dims.antennas, dims.ues, dims.pilot_len, dims.block_len());
        if prior.aps() != l_n || prior.ues() != k_n || prior.antennas() != n {
            return Err(Error::DimensionMismatch {
                what: "channel prior",
                expected: (l_n, k_n),
                found: (prior.aps(), prior.ues()),
            });
        }
        if pilots.rows() != k_n || pilots.cols() != tp {
            return Err(Error::DimensionMismatch {
                what: "pilots",
                expected: (k_n, tp),
                found: (pilots.rows(), pilots.cols()),
            });
        }
        if received.rows() != l_n * n || received.cols() != t_n {
            return Err(Error::DimensionMismatch {
                what: "received signal",
                expected: (l_n * n, t_n),
                found: (received.rows(), received.cols()),
            });
        }
        if pilots.as_slice().iter().any(|p| p.norm_sqr() == 0.0) {
            return Err(Error::InvalidParameter("pilot symbols must be non-zero".into()));
        }
        let sx2 = constellation.power();
        let variance_floor = config.variance_floor * sx2;
        let noise = noise_power.max(variance_floor);
        if !(noise > 0.0) {
            return Err(Error::InvalidParameter("effective noise power must be positive".into()));
        }

        let mut prior_msgs = Vec::with_capacity(l_n * k_n);
        let mut z_to_z = Vec::with_capacity(l_n * k_n * t_n);
        let mut h_to_z = Vec::with_capacity(l_n * k_n * t_n);
        for l in 0..l_n {
            for k in 0..k_n {
                let mu = prior.mean(l, k).clone();
                let mut cov = prior.cov(l, k).hermitian_part();
                if !is_positive_definite(&cov) {
                    let scale = (cov.trace().re + mu.norm_sqr()) / n as f64;
                    let floor = if scale > 0.0 { config.variance_floor * scale } else { variance_floor.max(f64::MIN_POSITIVE) };
                    cov = cov.add_diag(floor);
                }
                let p = GaussianBelief::from_moments(mu.clone(), cov.clone())?;
                let second = cov.add(&mu.outer(&mu)).scale_real(sx2);
                for t in 0..t_n {
                    h_to_z.push(p.clone());
                    let zz = if t < tp {
                        let x = pilots[(k, t)];
                        GaussianBelief::from_moments(mu.scale(x), cov.scale_real(x.norm_sqr()))?
                    } else {
                        GaussianBelief::from_moments(CVector::zeros(n), second.clone())?
                    };
                    z_to_z.push(zz);
                }
                prior_msgs.push(p);
            }
        }
        let m = constellation.len();
        let data_edges = l_n * k_n * dims.data_len;
        Ok(Self {
            dims,
            config,
            symbols: constellation.symbols().to_vec(),
            pilots: pilots.clone(),
            received: received.clone(),
            noise_power: noise,
            variance_floor,
            prior: prior_msgs,
            y_to_z: alloc::vec![GaussianBelief::uninformative(n); l_n * k_n * t_n],
            z_to_z,
            z_to_h: alloc::vec![GaussianBelief::uninformative(n); l_n * k_n * t_n],
            h_to_z,
            z_to_x: alloc::vec![CategoricalBelief::uniform(m); data_edges],
            x_to_z: alloc::vec![CategoricalBelief::uniform(m); data_edges],
            iteration: 0,
            guard_rejections: 0,
        })
    }

    #[inline]
    fn edge(&self, l: usize, k: usize, t: usize) -> usize {
        (l * self.dims.ues + k) * self.dims.block_len() + t
    }

    #[inline]
    fn data_edge(&self, l: usize, k: usize, d: usize) -> usize {
        (l * self.dims.ues + k) * self.dims.data_len + d
    }

    /// Slots whose channel-side messages are updated.
    fn active_slots(&self) -> core::ops::Range<usize> {
        if self.config.legacy_mode {
            self.dims.pilot_len..self.dims.block_len()
        } else {
            0..self.dims.block_len()
        }
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn config(&self) -> &EpConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Cumulative count of updates rejected by the positive-definiteness guard.
    pub fn guard_rejections(&self) -> usize {
        self.guard_rejections
    }

    /// Effective (floored) noise power.
    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn prior_msg(&self, l: usize, k: usize) -> &GaussianBelief {
        &self.prior[l * self.dims.ues + k]
    }

    pub fn y_to_z_msg(&self, l: usize, k: usize, t: usize) -> &GaussianBelief {
        &self.y_to_z[self.edge(l, k, t)]
    }

    pub fn z_to_z_msg(&self, l: usize, k: usize, t: usize) -> &GaussianBelief {
        &self.z_to_z[self.edge(l, k, t)]
    }

    pub fn z_to_h_msg(&self, l: usize, k: usize, t: usize) -> &GaussianBelief {
        &self.z_to_h[self.edge(l, k, t)]
    }

    pub fn h_to_z_msg(&self, l: usize, k: usize, t: usize) -> &GaussianBelief {
        &self.h_to_z[self.edge(l, k, t)]
    }

    /// `t` is the absolute slot index and must be a data slot.
    pub fn z_to_x_msg(&self, l: usize, k: usize, t: usize) -> &CategoricalBelief {
        &self.z_to_x[self.data_edge(l, k, t - self.dims.pilot_len)]
    }

    pub fn x_to_z_msg(&self, l: usize, k: usize, t: usize) -> &CategoricalBelief {
        &self.x_to_z[self.data_edge(l, k, t - self.dims.pilot_len)]
    }

    fn received_vec(&self, l: usize, t: usize) -> CVector {
        let n = self.dims.antennas;
        CVector::from_fn(n, |i| self.received[(l * n + i, t)])
    }

    fn non_finite(&self, phase: &'static str) -> Error {
        Error::NonFinite { iteration: self.iteration + 1, phase }
    }

    /// Interference cancellation at every AP and active slot.
    pub fn update_y_to_z(&mut self) -> Result<()> {
        let (l_n, k_n, n) = (self.dims.aps, self.dims.ues, self.dims.antennas);
        let eta = self.config.damping;
        let mut means = Vec::with_capacity(k_n);
        let mut covs = Vec::with_capacity(k_n);
        for l in 0..l_n {
            for t in self.active_slots() {
                means.clear();
                covs.clear();
                for k in 0..k_n {
                    let m = self.z_to_z[self.edge(l, k, t)].moments().ok_or_else(|| self.non_finite("y->z"))?;
                    means.push(m.mean.clone());
                    covs.push(m.cov.clone());
                }
                let ex_mean = exclusive_sums(&means, CVector::zeros(n), |a, b| a.add(b));
                let ex_cov = exclusive_sums(&covs, CMatrix::zeros(n, n), |a, b| a.add(b));
                let y = self.received_vec(l, t);
                for k in 0..k_n {
                    let mo = updates::y_to_z(&y, &ex_mean[k], &ex_cov[k], self.noise_power);
                    let new = GaussianBelief::from_moments(mo.mean, mo.cov).map_err(|_| self.non_finite("y->z"))?;
                    let e = self.edge(l, k, t);
                    let committed = new.damped(&self.y_to_z[e], eta);
                    if !committed.is_finite() {
                        return Err(self.non_finite("y->z"));
                    }
                    self.y_to_z[e] = committed;
                }
            }
        }
        Ok(())
    }

    /// Local symbol beliefs at every AP.
    pub fn update_z_to_x(&mut self) -> Result<()> {
        let (l_n, k_n, tp, td) = (self.dims.aps, self.dims.ues, self.dims.pilot_len, self.dims.data_len);
        let eta = self.config.damping;
        for l in 0..l_n {
            for k in 0..k_n {
                for d in 0..td {
                    let e = self.edge(l, k, tp + d);
                    let (new, _) = updates::z_to_x(
                        &self.y_to_z[e],
                        &self.h_to_z[e],
                        &self.symbols,
                        self.variance_floor,
                        self.config.prob_floor,
                    );
                    let de = self.data_edge(l, k, d);
                    let committed = new.damped(&self.z_to_x[de], eta);
                    if !committed.is_finite() {
                        return Err(self.non_finite("z->x"));
                    }
                    self.z_to_x[de] = committed;
                }
            }
        }
        Ok(())
    }

    /// CPU-side aggregation of the local symbol beliefs.
    pub fn update_x_to_z(&mut self) -> Result<()> {
        let (l_n, k_n, td) = (self.dims.aps, self.dims.ues, self.dims.data_len);
        for k in 0..k_n {
            for d in 0..td {
                let incoming: Vec<&CategoricalBelief> = (0..l_n).map(|l| &self.z_to_x[self.data_edge(l, k, d)]).collect();
                let out = updates::x_to_z(&incoming, self.config.prob_floor);
                for (l, msg) in out.into_iter().enumerate() {
                    if !msg.is_finite() {
                        return Err(self.non_finite("x->z"));
                    }
                    let de = self.data_edge(l, k, d);
                    self.x_to_z[de] = msg;
                }
            }
        }
        Ok(())
    }

    fn mixture_log_weights(&self, e: usize, de: usize) -> Vec<f64> {
        let (_, lt) = updates::z_to_x(&self.y_to_z[e], &self.h_to_z[e], &self.symbols, self.variance_floor, 0.0);
        self.x_to_z[de].probs().iter().zip(lt).map(|(p, t)| p.ln() + t).collect()
    }

    fn project(&self, l: usize, k: usize, t: usize, marginal: Marginal) -> Result<Moments> {
        let e = self.edge(l, k, t);
        let tp = self.dims.pilot_len;
        if t < tp {
            collapse_pilot(&self.y_to_z[e], &self.h_to_z[e], self.pilots[(k, t)], marginal)
        } else {
            let lw = self.mixture_log_weights(e, self.data_edge(l, k, t - tp));
            collapse_data(&self.y_to_z[e], &self.h_to_z[e], &self.symbols, &lw, marginal)
        }
    }

    /// Channel refinement from every active slot, guarded.
    pub fn update_z_to_h(&mut self) -> Result<()> {
        let (l_n, k_n) = (self.dims.aps, self.dims.ues);
        let eta = self.config.damping;
        for l in 0..l_n {
            for k in 0..k_n {
                for t in self.active_slots() {
                    let e = self.edge(l, k, t);
                    let proj = self.project(l, k, t, Marginal::Channel);
                    match guarded_quotient(&proj, &self.h_to_z[e]) {
                        Some(new) => {
                            let committed = new.damped(&self.z_to_h[e], eta);
                            if !committed.is_finite() {
                                return Err(self.non_finite("z->h"));
                            }
                            self.z_to_h[e] = committed;
                        }
                        None => self.guard_rejections += 1,
                    }
                }
            }
        }
        Ok(())
    }

    /// Channel beliefs towards each slot: prior times all other slots.
    pub fn update_h_to_z(&mut self) -> Result<()> {
        let (l_n, k_n, n) = (self.dims.aps, self.dims.ues, self.dims.antennas);
        let slots = self.active_slots();
        let mut naturals = Vec::with_capacity(slots.len());
        for l in 0..l_n {
            for k in 0..k_n {
                naturals.clear();
                for t in slots.clone() {
                    let m = &self.z_to_h[self.edge(l, k, t)];
                    naturals.push((m.shift().clone(), m.precision().clone()));
                }
                let ex = exclusive_sums(&naturals, (CVector::zeros(n), CMatrix::zeros(n, n)), |a, b| {
                    (a.0.add(&b.0), a.1.add(&b.1))
                });
                let prior = &self.prior[l * k_n + k];
                for (i, t) in slots.clone().enumerate() {
                    let msg = GaussianBelief::from_natural(prior.shift().add(&ex[i].0), prior.precision().add(&ex[i].1));
                    if !msg.is_proper() || !msg.is_finite() {
                        return Err(self.non_finite("h->z"));
                    }
                    let e = self.edge(l, k, t);
                    self.h_to_z[e] = msg;
                }
            }
        }
        Ok(())
    }

    /// Refined product beliefs used by the next interference cancellation,
    /// guarded.
    pub fn update_z_to_z(&mut self) -> Result<()> {
        let (l_n, k_n) = (self.dims.aps, self.dims.ues);
        let eta = self.config.damping;
        for l in 0..l_n {
            for k in 0..k_n {
                for t in self.active_slots() {
                    let e = self.edge(l, k, t);
                    let proj = self.project(l, k, t, Marginal::Product);
                    match guarded_quotient(&proj, &self.y_to_z[e]) {
                        Some(new) => {
                            let committed = new.damped(&self.z_to_z[e], eta);
                            if !committed.is_finite() || !committed.is_proper() {
                                return Err(self.non_finite("z->z"));
                            }
                            self.z_to_z[e] = committed;
                        }
                        None => self.guard_rejections += 1,
                    }
                }
            }
        }
        Ok(())
    }

    /// One sweep in the fixed phase order.
    pub fn iterate(&mut self) -> Result<()> {
        self.update_y_to_z()?;
        self.update_z_to_x()?;
        self.update_x_to_z()?;
        self.update_z_to_h()?;
        self.update_h_to_z()?;
        self.update_z_to_z()?;
        self.iteration += 1;
        Ok(())
    }

    /// Channel posterior of `h_{l,k}`: prior times every slot's message.
    pub fn channel_posterior(&self, l: usize, k: usize) -> GaussianBelief {
        let mut b = self.prior[l * self.dims.ues + k].clone();
        let mut shift = b.shift().clone();
        let mut precision = b.precision().clone();
        for t in 0..self.dims.block_len() {
            let m = &self.z_to_h[self.edge(l, k, t)];
            shift.add_assign(m.shift());
            precision.add_assign(m.precision());
        }
        b = GaussianBelief::from_natural(shift, precision);
        b
    }

    /// Stacked `LN x K` channel estimate `Lambda^{-1} gamma`.
    pub fn channel_estimate(&self) -> Result<CMatrix> {
        let (l_n, k_n, n) = (self.dims.aps, self.dims.ues, self.dims.antennas);
        let mut h = CMatrix::zeros(l_n * n, k_n);
        for l in 0..l_n {
            for k in 0..k_n {
                let post = self.channel_posterior(l, k);
                let mean = post.mean().ok_or_else(|| self.non_finite("estimate"))?;
                for i in 0..n {
                    h[(l * n + i, k)] = mean[i];
                }
            }
        }
        Ok(h)
    }

    /// Posterior over the symbol of UE `k` in absolute slot `t`: the product
    /// of every AP's local belief, normalized.
    pub fn symbol_posterior(&self, k: usize, t: usize) -> CategoricalBelief {
        let m = self.symbols.len();
        let d = t - self.dims.pilot_len;
        let mut lw = alloc::vec![0.0; m];
        for l in 0..self.dims.aps {
            for (acc, p) in lw.iter_mut().zip(self.z_to_x[self.data_edge(l, k, d)].probs()) {
                *acc += p.ln();
            }
        }
        CategoricalBelief::from_log_weights(&lw, 0.0)
    }
}
