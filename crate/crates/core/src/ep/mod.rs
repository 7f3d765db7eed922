//! Bilinear expectation propagation for joint channel estimation and data
//! detection.
//!
//! The factor graph has one product factor `z_{l,k,t} = h_{l,k} x_{k,t}` per
//! AP, UE and slot, one likelihood factor per AP and slot, and a Gaussian
//! channel prior per AP and UE. In the default mode the pilot slots take part
//! in the iterations with their known symbols; [`EpConfig::legacy_mode`]
//! restricts the channel-side updates to the data slots.

mod belief;
mod scalar;
mod state;
pub mod updates;

use alloc::vec::Vec;

pub use belief::{CategoricalBelief, GaussianBelief, Moments};
pub use state::{EpConfig, EpState};

use crate::baseline::MmseEstimate;
use crate::error::Result;
use crate::linalg::CMatrix;
use crate::metrics;
use crate::model::{Constellation, Frame};

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationStats {
    /// 1-based.
    pub iteration: usize,
    /// Channel NMSE after this iteration, when tracing is enabled.
    pub nmse: Option<f64>,
    /// Mean entropy (nats) of the symbol posteriors.
    pub mean_entropy: f64,
    /// Updates rejected by the positive-definiteness guard in this iteration.
    pub guard_rejections: usize,
}

#[derive(Clone, Debug)]
pub struct EpOutput {
    /// `LN x K` channel estimate.
    pub channel: CMatrix,
    /// Detected constellation indices, row-major `K x T_d`.
    pub detected: Vec<usize>,
    /// Symbol posteriors, row-major `K x T_d`.
    pub symbol_posteriors: Vec<CategoricalBelief>,
    pub iterations: Vec<IterationStats>,
}

impl EpOutput {
    pub fn guard_rejections(&self) -> usize {
        self.iterations.iter().map(|s| s.guard_rejections).sum()
    }
}

fn symbol_posteriors(state: &EpState) -> Vec<CategoricalBelief> {
    let d = state.dims();
    let mut out = Vec::with_capacity(d.ues * d.data_len);
    for k in 0..d.ues {
        for t in d.pilot_len..d.block_len() {
            out.push(state.symbol_posterior(k, t));
        }
    }
    out
}

/// Runs `config.max_iter` iterations on `frame`, starting from `prior`.
///
/// The prior is usually the pilot-based MMSE estimate. Single-antenna
/// systems use a scalar specialization of the same schedule. A non-finite
/// message aborts the run with [`crate::Error::NonFinite`].
pub fn run(frame: &Frame, prior: &MmseEstimate, constellation: &Constellation, config: &EpConfig) -> Result<EpOutput> {
    let state = init(frame, prior, constellation, config)?;
    if frame.dims.antennas == 1 {
        let mut engine = scalar::ScalarEngine::from_state(&state);
        drive(
            frame,
            config,
            &mut engine,
            |e| e.iterate(),
            |e| e.guard_rejections(),
            |e| e.channel_estimate(),
            |e| e.symbol_posteriors(),
        )
    } else {
        run_state(frame, config, state)
    }
}

/// [`run`] without the single-antenna specialization.
pub fn run_generic(frame: &Frame, prior: &MmseEstimate, constellation: &Constellation, config: &EpConfig) -> Result<EpOutput> {
    let state = init(frame, prior, constellation, config)?;
    run_state(frame, config, state)
}

fn init(frame: &Frame, prior: &MmseEstimate, constellation: &Constellation, config: &EpConfig) -> Result<EpState> {
    EpState::new(
        frame.dims,
        prior,
        &frame.pilots,
        &frame.received,
        constellation,
        frame.noise_power,
        *config,
    )
}

fn run_state(frame: &Frame, config: &EpConfig, mut state: EpState) -> Result<EpOutput> {
    drive(
        frame,
        config,
        &mut state,
        |s| s.iterate(),
        |s| s.guard_rejections(),
        |s| s.channel_estimate(),
        symbol_posteriors,
    )
}

fn drive<E>(
    frame: &Frame,
    config: &EpConfig,
    engine: &mut E,
    iterate: impl Fn(&mut E) -> Result<()>,
    rejections: impl Fn(&E) -> usize,
    channel: impl Fn(&E) -> Result<CMatrix>,
    posteriors: impl Fn(&E) -> Vec<CategoricalBelief>,
) -> Result<EpOutput> {
    let mut iterations = Vec::with_capacity(config.max_iter);
    for i in 0..config.max_iter {
        let before = rejections(engine);
        iterate(engine)?;
        let nmse = if config.trace_nmse {
            Some(metrics::nmse(&frame.channel, &channel(engine)?)?)
        } else {
            None
        };
        let posts = posteriors(engine);
        let mean_entropy = if posts.is_empty() {
            0.0
        } else {
            posts.iter().map(|p| p.entropy()).sum::<f64>() / posts.len() as f64
        };
        iterations.push(IterationStats {
            iteration: i + 1,
            nmse,
            mean_entropy,
            guard_rejections: rejections(engine) - before,
        });
    }
    let symbol_posteriors = posteriors(engine);
    Ok(EpOutput {
        channel: channel(engine)?,
        detected: symbol_posteriors.iter().map(|p| p.argmax()).collect(),
        symbol_posteriors,
        iterations,
    })
}
