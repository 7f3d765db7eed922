use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Transmit alphabet with its average symbol power in watts.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    symbols: Vec<C64>,
    power: f64,
}

impl Constellation {
    /// Square M-QAM scaled to average power `power`. Index order is row-major
    /// over the in-phase/quadrature grid, starting at the most negative
    /// in-phase level and the most positive quadrature level.
    pub fn qam(order: usize, power: f64) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if order < 4 || side * side != order {
            return Err(Error::InvalidConstellation(format!(
                "QAM order {order} is not a square of at least 4"
            )));
        }
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::InvalidConstellation(format!("power {power} must be positive")));
        }
        let levels: Vec<f64> = (0..side).map(|i| 2.0 * i as f64 - (side as f64 - 1.0)).collect();
        // mean |x|^2 of the unscaled grid is 2 (M - 1) / 3
        let scale = (power * 3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let mut symbols = Vec::with_capacity(order);
        for q in levels.iter().rev() {
            for i in levels.iter() {
                symbols.push(C64::new(i * scale, q * scale));
            }
        }
        Ok(Self { symbols, power })
    }

    /// 4-QAM, `(±1 ± j) sqrt(power / 2)`.
    pub fn qpsk(power: f64) -> Result<Self> {
        Self::qam(4, power)
    }

    /// Arbitrary alphabet; the power is the empirical mean of `|x|^2`.
    pub fn from_points(points: Vec<C64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConstellation("no symbols".into()));
        }
        if points.iter().any(|p| p.norm_sqr() == 0.0 || !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::InvalidConstellation("symbols must be finite and non-zero".into()));
        }
        for (i, a) in points.iter().enumerate() {
            if points[i + 1..].iter().any(|b| b == a) {
                return Err(Error::InvalidConstellation("duplicate symbol".into()));
            }
        }
        let power = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
        Ok(Self { symbols: points, power })
    }

    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> C64 {
        self.symbols[index]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Average symbol power `E|x|^2` in watts.
    pub fn power(&self) -> f64 {
        self.power
    }

    /// Index of the closest symbol in Euclidean distance; ties go to the
    /// lowest index.
    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.symbols.iter().enumerate() {
            let d = (z - s).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Same alphabet rescaled to a new average power.
    pub fn with_power(&self, power: f64) -> Result<Self> {
        if !(power > 0.0) {
            return Err(Error::InvalidConstellation(format!("power {power} must be positive")));
        }
        let s = (power / self.power).sqrt();
        Ok(Self {
            symbols: self.symbols.iter().map(|x| x * s).collect(),
            power,
        })
    }
}
