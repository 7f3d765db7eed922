#[allow(unused_imports)]
use num_traits::Float;
use smallvec::SmallVec;

use crate::error::Result;
use crate::linalg::{CMatrix, CVector, Cholesky};

/// Mean and covariance of a proper complex Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: CVector,
    pub cov: CMatrix,
}

/// Complex Gaussian message kept in both parameterizations.
///
/// The natural form `(gamma = C^{-1} mu, Lambda = C^{-1})` is authoritative.
/// The moment form exists only when `Lambda` is positive definite; an
/// uninformative message (`Lambda = 0`, `gamma = 0`) has none.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    shift: CVector,
    precision: CMatrix,
    moments: Option<Moments>,
}

impl GaussianBelief {
    pub fn uninformative(dim: usize) -> Self {
        Self {
            shift: CVector::zeros(dim),
            precision: CMatrix::zeros(dim, dim),
            moments: None,
        }
    }

    /// Fails if `cov` is not Hermitian positive definite.
    pub fn from_moments(mean: CVector, cov: CMatrix) -> Result<Self> {
        let chol = Cholesky::new(&cov)?;
        let precision = chol.inverse();
        let shift = chol.solve_vec(&mean);
        Ok(Self {
            shift,
            precision,
            moments: Some(Moments { mean, cov: cov.hermitian_part() }),
        })
    }

    pub fn from_natural(shift: CVector, precision: CMatrix) -> Self {
        let precision = precision.hermitian_part();
        let moments = if precision.is_zero() {
            None
        } else {
            Cholesky::new(&precision).ok().map(|chol| Moments {
                mean: chol.solve_vec(&shift),
                cov: chol.inverse(),
            })
        };
        Self { shift, precision, moments }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// `gamma = C^{-1} mu`.
    pub fn shift(&self) -> &CVector {
        &self.shift
    }

    /// `Lambda = C^{-1}`.
    pub fn precision(&self) -> &CMatrix {
        &self.precision
    }

    pub fn moments(&self) -> Option<&Moments> {
        self.moments.as_ref()
    }

    pub fn mean(&self) -> Option<&CVector> {
        self.moments.as_ref().map(|m| &m.mean)
    }

    pub fn cov(&self) -> Option<&CMatrix> {
        self.moments.as_ref().map(|m| &m.cov)
    }

    pub fn is_uninformative(&self) -> bool {
        self.precision.is_zero() && self.shift.norm_sqr() == 0.0
    }

    /// Has a positive definite precision (and hence a moment form).
    pub fn is_proper(&self) -> bool {
        self.moments.is_some()
    }

    pub fn is_finite(&self) -> bool {
        self.shift.is_finite()
            && self.precision.is_finite()
            && self.moments.as_ref().is_none_or(|m| m.mean.is_finite() && m.cov.is_finite())
    }

    /// Product of densities: natural parameters add.
    pub fn product(&self, other: &Self) -> Self {
        Self::from_natural(self.shift.add(&other.shift), self.precision.add(&other.precision))
    }

    /// Quotient of densities: natural parameters subtract.
    pub fn quotient(&self, other: &Self) -> Self {
        Self::from_natural(self.shift.sub(&other.shift), self.precision.sub(&other.precision))
    }

    /// `eta * self + (1 - eta) * old` in natural parameters.
    pub fn damped(&self, old: &Self, eta: f64) -> Self {
        if eta == 1.0 {
            return self.clone();
        }
        let shift = self.shift.scale_real(eta).add(&old.shift.scale_real(1.0 - eta));
        let precision = self.precision.scale_real(eta).add(&old.precision.scale_real(1.0 - eta));
        Self::from_natural(shift, precision)
    }
}

type Probs = SmallVec<[f64; 4]>;

/// Probability vector over the constellation.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalBelief {
    probs: Probs,
}

impl CategoricalBelief {
    pub fn uniform(m: usize) -> Self {
        Self {
            probs: smallvec::smallvec![1.0 / m as f64; m],
        }
    }

    /// Normalizes nonnegative weights and applies the floor.
    pub fn from_weights(weights: &[f64], floor: f64) -> Self {
        let total: f64 = weights.iter().sum();
        let m = weights.len();
        let probs = if total > 0.0 && total.is_finite() {
            weights.iter().map(|w| w / total).collect()
        } else {
            smallvec::smallvec![1.0 / m as f64; m]
        };
        let mut out = Self { probs };
        out.apply_floor(floor);
        out
    }

    /// Normalizes `exp(log_weights)` with a max shift, then applies the floor.
    pub fn from_log_weights(log_weights: &[f64], floor: f64) -> Self {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            let mut out = Self::uniform(log_weights.len());
            out.apply_floor(floor);
            return out;
        }
        let w: Probs = log_weights.iter().map(|v| (v - max).exp()).collect();
        Self::from_weights(&w, floor)
    }

    /// `p <- floor + (1 - M floor) p`, which keeps the sum at one.
    fn apply_floor(&mut self, floor: f64) {
        if floor <= 0.0 {
            return;
        }
        let m = self.probs.len() as f64;
        let scale = 1.0 - m * floor;
        for p in self.probs.iter_mut() {
            *p = floor + scale * *p;
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Convex blend with the previous message, renormalized.
    pub fn damped(&self, old: &Self, eta: f64) -> Self {
        if eta == 1.0 {
            return self.clone();
        }
        let mixed: Probs = self
            .probs
            .iter()
            .zip(old.probs.iter())
            .map(|(n, o)| eta * n + (1.0 - eta) * o)
            .collect();
        let total: f64 = mixed.iter().sum();
        Self {
            probs: mixed.iter().map(|p| p / total).collect(),
        }
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.probs.iter().all(|p| p.is_finite())
    }
}
