//! Performance metrics: channel NMSE, symbol error rate, the per-UE pilot
//! contamination metric, empirical CDFs and metric-binned averages.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};
use crate::model::ChannelStats;

/// Per-UE pilot contamination
/// `c_k = min_l [(diag(xi_l)^{-1} + X_p X_p^H / sigma_n^2)^{-1}]_{kk} / xi_{l,k}`.
///
/// Uses the scalar LSFCs, i.e. the antenna-averaged `tr(Xi_{l,k}) / N`.
pub fn pc_metric(stats: &ChannelStats, pilots: &CMatrix, noise_power: f64) -> Result<Vec<f64>> {
    let (aps, ues) = (stats.aps(), stats.ues());
    if pilots.rows() != ues {
        return Err(Error::DimensionMismatch {
            what: "pilot matrix",
            expected: (ues, pilots.cols()),
            found: (pilots.rows(), pilots.cols()),
        });
    }
    if !(noise_power > 0.0) {
        return Err(Error::InvalidParameter("PC metric needs positive noise power".into()));
    }
    let gram = pilots.mul(&pilots.adjoint()).scale_real(1.0 / noise_power);
    let mut c = alloc::vec![f64::INFINITY; ues];
    for l in 0..aps {
        let mut a = gram.clone();
        for k in 0..ues {
            a[(k, k)].re += 1.0 / stats.lsfc(l, k);
        }
        let inv = Cholesky::with_tolerance(&a, 0.0)
            .map_err(|_| Error::Singular("PC metric"))?
            .inverse();
        for k in 0..ues {
            c[k] = c[k].min(inv[(k, k)].re / stats.lsfc(l, k));
        }
    }
    Ok(c)
}

fn check_same_shape(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            what: "channel estimate",
            expected: (a.rows(), a.cols()),
            found: (b.rows(), b.cols()),
        });
    }
    Ok(())
}

/// `||H - H_hat||_F^2 / ||H||_F^2` for one realization.
pub fn nmse(h: &CMatrix, h_hat: &CMatrix) -> Result<f64> {
    check_same_shape(h, h_hat)?;
    let denom = h.norm_sqr();
    if denom == 0.0 {
        return Err(Error::ZeroNormChannel);
    }
    Ok(h.sub(h_hat).norm_sqr() / denom)
}

/// Column-wise NMSE: UE `k` is column `k` of the stacked `LN x K` channel.
pub fn nmse_per_ue(h: &CMatrix, h_hat: &CMatrix) -> Result<Vec<f64>> {
    check_same_shape(h, h_hat)?;
    (0..h.cols())
        .map(|k| {
            let (mut num, mut den) = (0.0, 0.0);
            for r in 0..h.rows() {
                num += (h[(r, k)] - h_hat[(r, k)]).norm_sqr();
                den += h[(r, k)].norm_sqr();
            }
            if den == 0.0 {
                Err(Error::ZeroNormChannel)
            } else {
                Ok(num / den)
            }
        })
        .collect()
}

/// Fraction of mismatched symbols.
pub fn ser(truth: &[usize], detected: &[usize]) -> Result<f64> {
    if truth.len() != detected.len() {
        return Err(Error::DimensionMismatch {
            what: "symbol decisions",
            expected: (truth.len(), 1),
            found: (detected.len(), 1),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let errors = truth.iter().zip(detected).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth.len() as f64)
}

/// Per-UE symbol error rate for row-major `K x T_d` decisions.
pub fn ser_per_ue(truth: &[usize], detected: &[usize], ues: usize) -> Result<Vec<f64>> {
    if truth.len() != detected.len() || ues == 0 || truth.len() % ues != 0 {
        return Err(Error::DimensionMismatch {
            what: "symbol decisions",
            expected: (ues, truth.len() / ues.max(1)),
            found: (detected.len(), 1),
        });
    }
    let td = truth.len() / ues;
    (0..ues)
        .map(|k| ser(&truth[k * td..(k + 1) * td], &detected[k * td..(k + 1) * td]))
        .collect()
}

/// Right-continuous empirical CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidParameter("NaN sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { sorted })
    }

    /// `P(X <= x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|v| *v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// Smallest sample `v` with `eval(v) >= q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.sorted[idx]
    }

    pub fn support(&self) -> &[f64] {
        &self.sorted
    }

    /// Step points `(x_i, F(x_i))` at each distinct sample.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in self.sorted.iter().enumerate() {
            let f = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = f,
                _ => out.push((x, f)),
            }
        }
        out
    }
}

pub fn ecdf(samples: &[f64]) -> Result<Ecdf> {
    Ecdf::new(samples)
}

/// `bins` logarithmically spaced bins over `[lo, hi]`, as `bins + 1` edges.
pub fn log_bin_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi > lo) || bins == 0 {
        return Err(Error::InvalidParameter("log bins need 0 < lo < hi and bins > 0".into()));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..=bins)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == bins {
                hi
            } else {
                (a + (b - a) * i as f64 / bins as f64).exp()
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinStat {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
    /// Geometric center for positive edges, arithmetic otherwise.
    pub center: f64,
    pub mean: f64,
    pub count: usize,
}

/// Mean of `value` over pairs whose `metric` falls in `[edge_i, edge_{i+1})`
/// (the last bin is closed). Empty bins are omitted.
pub fn bin_by_metric(pairs: &[(f64, f64)], edges: &[f64]) -> Result<Vec<BinStat>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
    }
    let bins = edges.len() - 1;
    let mut sums = alloc::vec![0.0; bins];
    let mut counts = alloc::vec![0usize; bins];
    for &(metric, value) in pairs {
        if metric.is_nan() || metric < edges[0] || metric > edges[bins] {
            continue;
        }
        let i = (edges.partition_point(|e| *e <= metric)).clamp(1, bins) - 1;
        sums[i] += value;
        counts[i] += 1;
    }
    Ok((0..bins)
        .filter(|&i| counts[i] > 0)
        .map(|i| {
            let (lower, upper) = (edges[i], edges[i + 1]);
            let center = if lower > 0.0 { (lower * upper).sqrt() } else { 0.5 * (lower + upper) };
            BinStat { index: i, lower, upper, center, mean: sums[i] / counts[i] as f64, count: counts[i] }
        })
        .collect())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("spearman needs two equal-length series of length >= 2".into()));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
