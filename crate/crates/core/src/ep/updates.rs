//! Per-edge message kernels of the bilinear factor `z = h x`.
//!
//! Each kernel is a pure function of its incoming messages; scheduling,
//! damping and the positive-definiteness guard live in [`super::state`].

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use smallvec::SmallVec;

use super::belief::{CategoricalBelief, GaussianBelief, Moments};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, Cholesky, C64};

pub(crate) type LogWeights = SmallVec<[f64; 4]>;

/// Interference cancellation towards one UE:
/// `mu = y - sum_{k' != k} mu_k'` and `C = sigma^2 I + sum_{k' != k} C_k'`.
///
/// `others_mean` and `others_cov` are the exclusive sums over the other UEs.
pub fn y_to_z(y: &CVector, others_mean: &CVector, others_cov: &CMatrix, noise_power: f64) -> Moments {
    Moments {
        mean: y.sub(others_mean),
        cov: others_cov.add_diag(noise_power),
    }
}

/// Sums over all items except item `i`, for every `i`, built from prefix and
/// suffix sums so no subtraction (and no cancellation) is involved.
pub fn exclusive_sums<T: Clone>(items: &[T], zero: T, add: impl Fn(&T, &T) -> T) -> Vec<T> {
    let n = items.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(zero.clone());
    for it in items {
        let next = add(prefix.last().unwrap(), it);
        prefix.push(next);
    }
    let mut out = alloc::vec![zero.clone(); n];
    let mut suffix = zero;
    for i in (0..n).rev() {
        out[i] = add(&prefix[i], &suffix);
        suffix = add(&suffix, &items[i]);
    }
    out
}

/// `ln CN(0 | mu_y - mu_h x, C_y + C_h |x|^2)`.
///
/// A non-positive-definite evaluation covariance gets `floor * I` added once.
pub fn log_theta(y_msg: &Moments, h_msg: &Moments, x: C64, floor: f64) -> f64 {
    let n = y_msg.mean.len();
    let diff = y_msg.mean.sub(&h_msg.mean.scale(x));
    let cov = y_msg.cov.add(&h_msg.cov.scale_real(x.norm_sqr()));
    let chol = match Cholesky::new(&cov) {
        Ok(c) => c,
        Err(_) => match Cholesky::with_tolerance(&cov.add_diag(floor), 0.0) {
            Ok(c) => c,
            Err(_) => return f64::NEG_INFINITY,
        },
    };
    -(n as f64) * PI.ln() - chol.log_det() - chol.quad_form(&diff)
}

/// Local symbol belief of one AP: `p(x) ∝ theta(x)`. Returns the belief and
/// the unnormalized `ln theta` per symbol.
///
/// An uninformative interference-cancelled message carries no evidence, so
/// the output is uniform.
pub fn z_to_x(
    y_msg: &GaussianBelief,
    h_msg: &GaussianBelief,
    symbols: &[C64],
    variance_floor: f64,
    prob_floor: f64,
) -> (CategoricalBelief, Vec<f64>) {
    match (y_msg.moments(), h_msg.moments()) {
        (Some(ym), Some(hm)) => {
            let lt: Vec<f64> = symbols.iter().map(|&x| log_theta(ym, hm, x, variance_floor)).collect();
            (CategoricalBelief::from_log_weights(&lt, prob_floor), lt)
        }
        _ => (
            CategoricalBelief::from_weights(&alloc::vec![1.0; symbols.len()], prob_floor),
            alloc::vec![0.0; symbols.len()],
        ),
    }
}

/// Extrinsic symbol beliefs for every AP: the product of all other APs'
/// messages, computed in the log domain.
pub fn x_to_z(incoming: &[&CategoricalBelief], prob_floor: f64) -> Vec<CategoricalBelief> {
    let m = incoming.first().map_or(0, |c| c.len());
    let logs: Vec<LogWeights> = incoming
        .iter()
        .map(|c| c.probs().iter().map(|p| p.ln()).collect())
        .collect();
    let zero: LogWeights = smallvec::smallvec![0.0; m];
    exclusive_sums(&logs, zero, |a, b| a.iter().zip(b.iter()).map(|(x, y)| x + y).collect())
        .into_iter()
        .map(|lw| CategoricalBelief::from_log_weights(&lw, prob_floor))
        .collect()
}

/// Posterior of `z` given symbol `x`: natural parameters
/// `Lambda_a = Lambda_y + Lambda_h / |x|^2`, `gamma_a = gamma_y + gamma_h x / |x|^2`.
pub fn a_moments(y_msg: &GaussianBelief, h_msg: &GaussianBelief, x: C64) -> Result<Moments> {
    let inv_p = 1.0 / x.norm_sqr();
    let precision = y_msg.precision().add(&h_msg.precision().scale_real(inv_p));
    let shift = y_msg.shift().add(&h_msg.shift().scale(x * inv_p));
    let chol = Cholesky::new(&precision)?;
    Ok(Moments {
        mean: chol.solve_vec(&shift),
        cov: chol.inverse(),
    })
}

/// Which marginal of the tilted distribution to project.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marginal {
    /// `h = z / x`, used for the factor-to-channel message.
    Channel,
    /// `z`, used for the factor-to-product message.
    Product,
}

/// Pilot branch: the tilted distribution is a single Gaussian at the known
/// symbol.
pub fn collapse_pilot(y_msg: &GaussianBelief, h_msg: &GaussianBelief, pilot: C64, marginal: Marginal) -> Result<Moments> {
    let a = a_moments(y_msg, h_msg, pilot)?;
    Ok(match marginal {
        Marginal::Channel => Moments {
            mean: a.mean.scale(pilot.inv()),
            cov: a.cov.scale_real(1.0 / pilot.norm_sqr()),
        },
        Marginal::Product => a,
    })
}

/// Data branch: moment matching of the Gaussian mixture
/// `sum_x w(x) a(x)` with `w(x) ∝ m_{x->z}(x) theta(x)`.
///
/// `log_weights[i] = ln m_{x->z}(x_i) + ln theta(x_i)`; normalization is done
/// here with a max shift.
pub fn collapse_data(
    y_msg: &GaussianBelief,
    h_msg: &GaussianBelief,
    symbols: &[C64],
    log_weights: &[f64],
    marginal: Marginal,
) -> Result<Moments> {
    let n = y_msg.dim();
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NotPositiveDefinite);
    }
    let w: LogWeights = log_weights.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();

    let mut mean = CVector::zeros(n);
    let mut second = CMatrix::zeros(n, n);
    for (i, &x) in symbols.iter().enumerate() {
        let wi = w[i] / total;
        if wi == 0.0 {
            continue;
        }
        let a = a_moments(y_msg, h_msg, x)?;
        let (m, c) = match marginal {
            Marginal::Channel => (a.mean.scale(x.inv()), a.cov.scale_real(1.0 / x.norm_sqr())),
            Marginal::Product => (a.mean, a.cov),
        };
        second.add_assign(&c.add(&m.outer(&m)).scale_real(wi));
        mean.add_assign(&m.scale_real(wi));
    }
    let cov = second.sub(&mean.outer(&mean)).hermitian_part();
    Ok(Moments { mean, cov })
}

/// Outgoing message `b / incoming` in natural parameters, or `None` if the
/// projection or the quotient is not positive definite.
pub fn guarded_quotient(projected: &Result<Moments>, incoming: &GaussianBelief) -> Option<GaussianBelief> {
    let m = projected.as_ref().ok()?;
    let b = GaussianBelief::from_moments(m.mean.clone(), m.cov.clone()).ok()?;
    let out = b.quotient(incoming);
    if out.is_proper() && out.is_finite() {
        Some(out)
    } else {
        None
    }
}
