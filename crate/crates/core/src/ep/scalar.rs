//! Single-antenna engine.
//!
//! With `N = 1` every Gaussian message is a complex mean with a real
//! variance, so the generic small-matrix code is replaced by plain scalar
//! arithmetic. The schedule, damping, floors and guard are the same as in
//! [`EpState`]; the generic engine serves as the reference in tests.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::state::EpState;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::model::SystemDims;

/// Natural parameters `(gamma, lambda)` of a scalar complex Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Nat {
    g: C64,
    lam: f64,
}

const LN_PI: f64 = 1.144_729_885_849_400_2;

const UNINFORMATIVE: Nat = Nat { g: C64 { re: 0.0, im: 0.0 }, lam: 0.0 };

impl Nat {
    /// `None` unless the variance is positive and finite.
    #[inline]
    fn from_moments(mean: C64, var: f64) -> Option<Self> {
        if var > 0.0 && var.is_finite() {
            Some(Self { g: mean / var, lam: 1.0 / var })
        } else {
            None
        }
    }

    #[inline]
    fn proper(self) -> bool {
        self.lam > 0.0
    }

    /// Mean and variance; only meaningful when proper.
    #[inline]
    fn moments(self) -> (C64, f64) {
        (self.g / self.lam, 1.0 / self.lam)
    }

    #[inline]
    fn finite(self) -> bool {
        self.g.re.is_finite() && self.g.im.is_finite() && self.lam.is_finite()
    }

    #[inline]
    fn damped(self, old: Self, eta: f64) -> Self {
        if eta == 1.0 {
            return self;
        }
        Self {
            g: self.g * eta + old.g * (1.0 - eta),
            lam: eta * self.lam + (1.0 - eta) * old.lam,
        }
    }
}

/// Normalizes `exp(lw)` in place with a max shift, then applies the floor.
fn normalize_log(lw: &mut [f64], floor: f64) {
    let m = lw.len() as f64;
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        let mut total = 0.0;
        for v in lw.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in lw.iter_mut() {
            *v /= total;
        }
    } else {
        lw.fill(1.0 / m);
    }
    if floor > 0.0 {
        let scale = 1.0 - m * floor;
        for v in lw.iter_mut() {
            *v = floor + scale * *v;
        }
    }
}

fn damp_probs(new: &mut [f64], old: &[f64], eta: f64) {
    if eta == 1.0 {
        return;
    }
    let mut total = 0.0;
    for (n, o) in new.iter_mut().zip(old) {
        *n = eta * *n + (1.0 - eta) * o;
        total += *n;
    }
    for n in new.iter_mut() {
        *n /= total;
    }
}

fn exclusive<T: Copy>(items: &[T], zero: T, add: impl Fn(T, T) -> T, out: &mut Vec<T>) {
    let n = items.len();
    out.clear();
    out.resize(n, zero);
    let mut prefix = zero;
    for i in 0..n {
        out[i] = prefix;
        prefix = add(prefix, items[i]);
    }
    let mut suffix = zero;
    for i in (0..n).rev() {
        out[i] = add(out[i], suffix);
        suffix = add(suffix, items[i]);
    }
}

pub(super) struct ScalarEngine {
    dims: SystemDims,
    eta: f64,
    legacy: bool,
    prob_floor: f64,
    variance_floor: f64,
    noise: f64,
    symbols: Vec<C64>,
    pilots: CMatrix,
    received: CMatrix,
    prior: Vec<Nat>,
    yz: Vec<Nat>,
    zz: Vec<Nat>,
    zh: Vec<Nat>,
    hz: Vec<Nat>,
    /// Flat `(data edge, symbol)`.
    zx: Vec<f64>,
    xz: Vec<f64>,
    iteration: usize,
    guard_rejections: usize,
}

fn to_nat(b: &super::GaussianBelief) -> Nat {
    Nat { g: b.shift()[0], lam: b.precision()[(0, 0)].re }
}

impl ScalarEngine {
    /// Takes over an initialized single-antenna state.
    pub(super) fn from_state(s: &EpState) -> Self {
        debug_assert_eq!(s.dims.antennas, 1);
        let m = s.symbols.len();
        let flat = |v: &[super::CategoricalBelief]| -> Vec<f64> {
            let mut out = Vec::with_capacity(v.len() * m);
            for c in v {
                out.extend_from_slice(c.probs());
            }
            out
        };
        Self {
            dims: s.dims,
            eta: s.config.damping,
            legacy: s.config.legacy_mode,
            prob_floor: s.config.prob_floor,
            variance_floor: s.variance_floor,
            noise: s.noise_power,
            symbols: s.symbols.clone(),
            pilots: s.pilots.clone(),
            received: s.received.clone(),
            prior: s.prior.iter().map(to_nat).collect(),
            yz: s.y_to_z.iter().map(to_nat).collect(),
            zz: s.z_to_z.iter().map(to_nat).collect(),
            zh: s.z_to_h.iter().map(to_nat).collect(),
            hz: s.h_to_z.iter().map(to_nat).collect(),
            zx: flat(&s.z_to_x),
            xz: flat(&s.x_to_z),
            iteration: s.iteration,
            guard_rejections: s.guard_rejections,
        }
    }

    pub(super) fn guard_rejections(&self) -> usize {
        self.guard_rejections
    }

    #[inline]
    fn edge(&self, l: usize, k: usize, t: usize) -> usize {
        (l * self.dims.ues + k) * self.dims.block_len() + t
    }

    #[inline]
    fn data_edge(&self, l: usize, k: usize, d: usize) -> usize {
        (l * self.dims.ues + k) * self.dims.data_len + d
    }

    fn active_slots(&self) -> core::ops::Range<usize> {
        if self.legacy {
            self.dims.pilot_len..self.dims.block_len()
        } else {
            0..self.dims.block_len()
        }
    }

    fn non_finite(&self, phase: &'static str) -> Error {
        Error::NonFinite { iteration: self.iteration + 1, phase }
    }

    fn y_to_z(&mut self) -> Result<()> {
        let (l_n, k_n) = (self.dims.aps, self.dims.ues);
        let mut means = Vec::with_capacity(k_n);
        let mut vars = Vec::with_capacity(k_n);
        let mut ex_m = Vec::with_capacity(k_n);
        let mut ex_v = Vec::with_capacity(k_n);
        for l in 0..l_n {
            for t in self.active_slots() {
                means.clear();
                vars.clear();
                for k in 0..k_n {
                    let z = self.zz[self.edge(l, k, t)];
                    if !z.proper() {
                        return Err(self.non_finite("y->z"));
                    }
                    let (m, v) = z.moments();
                    means.push(m);
                    vars.push(v);
                }
                exclusive(&means, C64::new(0.0, 0.0), |a, b| a + b, &mut ex_m);
                exclusive(&vars, 0.0, |a, b| a + b, &mut ex_v);
                let y = self.received[(l, t)];
                for k in 0..k_n {
                    let new = Nat::from_moments(y - ex_m[k], ex_v[k] + self.noise).ok_or_else(|| self.non_finite("y->z"))?;
                    let e = self.edge(l, k, t);
                    let committed = new.damped(self.yz[e], self.eta);
                    if !committed.finite() {
                        return Err(self.non_finite("y->z"));
                    }
                    self.yz[e] = committed;
                }
            }
        }
        Ok(())
    }

    /// `ln theta(x)` per symbol into `out`; all zeros if either message is
    /// uninformative.
    fn log_theta(&self, e: usize, floor: f64, out: &mut [f64]) {
        let (y, h) = (self.yz[e], self.hz[e]);
        if !y.proper() || !h.proper() {
            out.fill(0.0);
            return;
        }
        let (my, vy) = y.moments();
        let (mh, vh) = h.moments();
        // Constant-modulus alphabets share one log-determinant.
        let mut cached = (f64::NAN, 0.0, 0.0);
        for (o, &x) in out.iter_mut().zip(&self.symbols) {
            let p = x.norm_sqr();
            if p != cached.0 {
                let mut v = vy + vh * p;
                if !(v > 0.0) {
                    v += floor;
                }
                cached = (p, v, if v > 0.0 { LN_PI + v.ln() } else { 0.0 });
            }
            let (_, v, offset) = cached;
            *o = if v > 0.0 {
                -offset - (my - mh * x).norm_sqr() / v
            } else {
                f64::NEG_INFINITY
            };
        }
    }

    fn z_to_x(&mut self) -> Result<()> {
        let (l_n, k_n, tp, td) = (self.dims.aps, self.dims.ues, self.dims.pilot_len, self.dims.data_len);
        let m = self.symbols.len();
        let mut lw = alloc::vec![0.0; m];
        for l in 0..l_n {
            for k in 0..k_n {
                for d in 0..td {
                    let e = self.edge(l, k, tp + d);
                    self.log_theta(e, self.variance_floor, &mut lw);
                    normalize_log(&mut lw, self.prob_floor);
                    let de = self.data_edge(l, k, d) * m;
                    damp_probs(&mut lw, &self.zx[de..de + m], self.eta);
                    if lw.iter().any(|p| !p.is_finite()) {
                        return Err(self.non_finite("z->x"));
                    }
                    self.zx[de..de + m].copy_from_slice(&lw);
                }
            }
        }
        Ok(())
    }

    fn x_to_z(&mut self) -> Result<()> {
        let (l_n, k_n, td) = (self.dims.aps, self.dims.ues, self.dims.data_len);
        let m = self.symbols.len();
        let mut prefix = alloc::vec![0.0; l_n * m];
        for k in 0..k_n {
            for d in 0..td {
                let mut run = alloc::vec![0.0; m];
                for l in 0..l_n {
                    prefix[l * m..(l + 1) * m].copy_from_slice(&run);
                    let de = self.data_edge(l, k, d) * m;
                    for i in 0..m {
                        run[i] += self.zx[de + i].ln();
                    }
                }
                run.fill(0.0);
                for l in (0..l_n).rev() {
                    let de = self.data_edge(l, k, d) * m;
                    let out = &mut prefix[l * m..(l + 1) * m];
                    for i in 0..m {
                        out[i] += run[i];
                        run[i] += self.zx[de + i].ln();
                    }
                    normalize_log(out, self.prob_floor);
                    if out.iter().any(|p| !p.is_finite()) {
                        return Err(self.non_finite("x->z"));
                    }
                    self.xz[de..de + m].copy_from_slice(out);
                }
            }
        }
        Ok(())
    }

    /// Moments of `a(x)`, or `None` if its precision is not positive.
    #[inline]
    fn a_moments(y: Nat, h: Nat, x: C64) -> Option<(C64, f64)> {
        let inv_p = 1.0 / x.norm_sqr();
        let lam = y.lam + h.lam * inv_p;
        if !(lam > 0.0) {
            return None;
        }
        let g = y.g + h.g * (x * inv_p);
        Some((g / lam, 1.0 / lam))
    }

    /// Projected mean and variance of the channel (`channel = true`) or the
    /// product marginal.
    fn project(&self, l: usize, k: usize, t: usize, channel: bool, lw: &mut [f64]) -> Option<(C64, f64)> {
        let e = self.edge(l, k, t);
        let (y, h) = (self.yz[e], self.hz[e]);
        let tp = self.dims.pilot_len;
        if t < tp {
            let x = self.pilots[(k, t)];
            let (m, v) = Self::a_moments(y, h, x)?;
            return Some(if channel { (m / x, v / x.norm_sqr()) } else { (m, v) });
        }
        let m_len = self.symbols.len();
        self.log_theta(e, self.variance_floor, lw);
        let de = self.data_edge(l, k, t - tp) * m_len;
        for (i, w) in lw.iter_mut().enumerate() {
            *w += self.xz[de + i].ln();
        }
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        let mut total = 0.0;
        for w in lw.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        let mut mean = C64::new(0.0, 0.0);
        let mut second = 0.0;
        for (i, &x) in self.symbols.iter().enumerate() {
            let wi = lw[i] / total;
            if wi == 0.0 {
                continue;
            }
            let (ma, va) = Self::a_moments(y, h, x)?;
            let (m, v) = if channel { (ma * x.inv(), va / x.norm_sqr()) } else { (ma, va) };
            second += (v + m.norm_sqr()) * wi;
            mean += m * wi;
        }
        Some((mean, second - mean.norm_sqr()))
    }

    /// `b / incoming` when both the projection and the quotient are proper.
    #[inline]
    fn guarded(proj: Option<(C64, f64)>, incoming: Nat) -> Option<Nat> {
        let (m, v) = proj?;
        let b = Nat::from_moments(m, v)?;
        let out = Nat { g: b.g - incoming.g, lam: b.lam - incoming.lam };
        (out.proper() && out.finite()).then_some(out)
    }

    fn z_to_h(&mut self) -> Result<()> {
        let (l_n, k_n) = (self.dims.aps, self.dims.ues);
        let mut lw = alloc::vec![0.0; self.symbols.len()];
        for l in 0..l_n {
            for k in 0..k_n {
                for t in self.active_slots() {
                    let e = self.edge(l, k, t);
                    let proj = self.project(l, k, t, true, &mut lw);
                    match Self::guarded(proj, self.hz[e]) {
                        Some(new) => {
                            let committed = new.damped(self.zh[e], self.eta);
                            if !committed.finite() {
                                return Err(self.non_finite("z->h"));
                            }
                            self.zh[e] = committed;
                        }
                        None => self.guard_rejections += 1,
                    }
                }
            }
        }
        Ok(())
    }

    fn h_to_z(&mut self) -> Result<()> {
        let (l_n, k_n) = (self.dims.aps, self.dims.ues);
        let slots = self.active_slots();
        let mut items = Vec::with_capacity(slots.len());
        let mut ex = Vec::with_capacity(slots.len());
        for l in 0..l_n {
            for k in 0..k_n {
                items.clear();
                for t in slots.clone() {
                    items.push(self.zh[self.edge(l, k, t)]);
                }
                exclusive(&items, UNINFORMATIVE, |a, b| Nat { g: a.g + b.g, lam: a.lam + b.lam }, &mut ex);
                let p = self.prior[l * k_n + k];
                for (i, t) in slots.clone().enumerate() {
                    let msg = Nat { g: p.g + ex[i].g, lam: p.lam + ex[i].lam };
                    if !msg.proper() || !msg.finite() {
                        return Err(self.non_finite("h->z"));
                    }
                    let e = self.edge(l, k, t);
                    self.hz[e] = msg;
                }
            }
        }
        Ok(())
    }

    fn z_to_z(&mut self) -> Result<()> {
        let (l_n, k_n) = (self.dims.aps, self.dims.ues);
        let mut lw = alloc::vec![0.0; self.symbols.len()];
        for l in 0..l_n {
            for k in 0..k_n {
                for t in self.active_slots() {
                    let e = self.edge(l, k, t);
                    let proj = self.project(l, k, t, false, &mut lw);
                    match Self::guarded(proj, self.yz[e]) {
                        Some(new) => {
                            let committed = new.damped(self.zz[e], self.eta);
                            if !committed.finite() || !committed.proper() {
                                return Err(self.non_finite("z->z"));
                            }
                            self.zz[e] = committed;
                        }
                        None => self.guard_rejections += 1,
                    }
                }
            }
        }
        Ok(())
    }

    pub(super) fn iterate(&mut self) -> Result<()> {
        self.y_to_z()?;
        self.z_to_x()?;
        self.x_to_z()?;
        self.z_to_h()?;
        self.h_to_z()?;
        self.z_to_z()?;
        self.iteration += 1;
        Ok(())
    }

    pub(super) fn channel_estimate(&self) -> Result<CMatrix> {
        let (l_n, k_n) = (self.dims.aps, self.dims.ues);
        let mut h = CMatrix::zeros(l_n, k_n);
        for l in 0..l_n {
            for k in 0..k_n {
                let mut post = self.prior[l * k_n + k];
                for t in 0..self.dims.block_len() {
                    let m = self.zh[self.edge(l, k, t)];
                    post.g += m.g;
                    post.lam += m.lam;
                }
                if !post.proper() || !post.finite() {
                    return Err(self.non_finite("estimate"));
                }
                h[(l, k)] = post.g / post.lam;
            }
        }
        Ok(h)
    }

    /// Normalized product over all APs of the local symbol beliefs,
    /// row-major `K x T_d`, each of length `M`.
    pub(super) fn symbol_posteriors(&self) -> Vec<super::CategoricalBelief> {
        let (l_n, k_n, td) = (self.dims.aps, self.dims.ues, self.dims.data_len);
        let m = self.symbols.len();
        let mut out = Vec::with_capacity(k_n * td);
        let mut lw = alloc::vec![0.0; m];
        for k in 0..k_n {
            for d in 0..td {
                lw.fill(0.0);
                for l in 0..l_n {
                    let de = self.data_edge(l, k, d) * m;
                    for i in 0..m {
                        lw[i] += self.zx[de + i].ln();
                    }
                }
                out.push(super::CategoricalBelief::from_log_weights(&lw, 0.0));
            }
        }
        out
    }
}
