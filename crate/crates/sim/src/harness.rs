//! Monte Carlo driver.
//!
//! The unit of parallel work is one (drop, realization) pair. Within a pair
//! every pilot type, data length, power and algorithm reuses the same two
//! seeds, so curves are compared on common random numbers.

use std::fs;
use std::path::{Path, PathBuf};

use cellfree_core::baseline::{genie_mmse, mmse_detect, pilot_mmse, MmseEstimate};
use cellfree_core::ep::{self, EpConfig};
use cellfree_core::metrics::{nmse, nmse_per_ue, pc_metric, ser, ser_per_ue};
use cellfree_core::model::{Constellation, Frame, PilotKind, Scenario};
use cellfree_core::units::dbm_to_watts;
use cellfree_core::{CMatrix, Error as CoreError};
use rayon::prelude::*;

use crate::config::{Algorithm, ExperimentConfig, Plan, RunKind};
use crate::error::{Result, SimError};
use crate::record::{write_records_file, write_traces_file, Results, TraceRecord, TrialKey, TrialRecord};
use crate::seed::TrialSeeds;

pub const RESULTS_FILE: &str = "results.csv";
pub const TRACE_FILE: &str = "trace.csv";

/// Resolves `config`, runs every trial and writes the CSV files into
/// `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Results> {
    let plan = config.resolve()?;
    let results = simulate(&plan)?;
    write_results(&results, &config.output_dir)?;
    Ok(results)
}

/// Runs every trial of `plan` in memory. The returned records are in
/// canonical order, independent of the number of worker threads.
pub fn simulate(plan: &Plan) -> Result<Results> {
    let jobs: Vec<(usize, usize)> = (0..plan.drops)
        .flat_map(|d| (0..plan.realizations).map(move |r| (d, r)))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(drop, realization)| run_job(plan, drop, realization))
            .collect::<Result<Vec<Results>>>()
    };
    let parts = match plan.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut out = Results::default();
    for p in parts {
        out.records.extend(p.records);
        out.traces.extend(p.traces);
    }
    out.sort();
    Ok(out)
}

/// Writes `results.csv` (and `trace.csv` when traces exist) into `dir`.
pub fn write_results(results: &Results, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let main = dir.join(RESULTS_FILE);
    write_records_file(&main, &results.records)?;
    let mut written = vec![main];
    if !results.traces.is_empty() {
        let trace = dir.join(TRACE_FILE);
        write_traces_file(&trace, &results.traces)?;
        written.push(trace);
    }
    Ok(written)
}

/// Recomputes the rows of one trial from the labels and seeds stored with
/// it. Only `key.seeds` is used for randomness; `drop` and `realization`
/// are copied into the output labels.
pub fn reproduce_trial(plan: &Plan, key: &TrialKey) -> Result<Results> {
    let algorithms: Vec<Algorithm> = key.algorithm.into_iter().collect();
    let mut out = Results::default();
    evaluate(plan, &algorithms, key, &mut out)?;
    out.sort();
    Ok(out)
}

fn run_job(plan: &Plan, drop: usize, realization: usize) -> Result<Results> {
    let seeds = TrialSeeds::derive(plan.seed, drop, realization);
    let mut out = Results::default();
    for &pilot in &plan.pilots {
        for &data_len in &plan.data_lens {
            for &power_dbm in &plan.powers_dbm {
                let key = TrialKey {
                    study: plan.study,
                    algorithm: None,
                    pilot,
                    data_len,
                    power_dbm,
                    drop,
                    realization,
                    seeds,
                };
                evaluate(plan, &plan.algorithms, &key, &mut out)?;
            }
        }
    }
    Ok(out)
}

/// The drop and frame for one label combination.
pub fn build_trial(plan: &Plan, pilot: PilotKind, data_len: usize, power_dbm: f64, seeds: TrialSeeds) -> Result<(Scenario, Frame)> {
    let scenario = build_scenario(plan, pilot, data_len, power_dbm, seeds)?;
    let frame = scenario.sample_frame(&mut seeds.frame_rng())?;
    Ok((scenario, frame))
}

fn build_scenario(plan: &Plan, pilot: PilotKind, data_len: usize, power_dbm: f64, seeds: TrialSeeds) -> Result<Scenario> {
    let constellation = Constellation::qam(plan.qam_order, dbm_to_watts(power_dbm))?;
    Ok(Scenario::sample(
        plan.dims(data_len)?,
        &plan.scenario,
        pilot,
        constellation,
        dbm_to_watts(plan.noise_dbm),
        &mut seeds.geometry_rng(),
    )?)
}

fn evaluate(plan: &Plan, algorithms: &[Algorithm], base: &TrialKey, out: &mut Results) -> Result<()> {
    let scenario = build_scenario(plan, base.pilot, base.data_len, base.power_dbm, base.seeds)?;
    let ck = pc_metric(&scenario.stats, &scenario.pilots, scenario.noise_power)?;
    if plan.study.kind() == RunKind::MetricOnly {
        for (k, &c) in ck.iter().enumerate() {
            out.records.push(TrialRecord {
                key: *base,
                ue: Some(k),
                nmse: None,
                ser: None,
                ck: Some(c),
                diverged: false,
            });
        }
        return Ok(());
    }
    let frame = scenario.sample_frame(&mut base.seeds.frame_rng())?;
    let mut pilot_est: Option<MmseEstimate> = None;
    for &alg in algorithms {
        let key = TrialKey { algorithm: Some(alg), ..*base };
        if pilot_est.is_none() && matches!(alg, Algorithm::EpMod | Algorithm::EpLegacy | Algorithm::MmsePilotCsi) {
            pilot_est = Some(pilot_mmse(&frame, &scenario.stats)?);
        }
        let outcome = match alg {
            Algorithm::EpMod | Algorithm::EpLegacy => {
                let config = EpConfig { legacy_mode: alg == Algorithm::EpLegacy, ..plan.ep };
                run_ep(&frame, pilot_est.as_ref().expect("computed above"), &scenario.constellation, &config)?
            }
            Algorithm::MmsePilotCsi => {
                let est = pilot_est.as_ref().expect("computed above").channel_matrix();
                let detected = mmse_detect(&frame.received_data(), &est, frame.noise_power, &scenario.constellation)?;
                Outcome::Done { channel: Some(est), detected: Some(detected), trace: None }
            }
            Algorithm::MmsePerfectCsi => {
                let detected =
                    mmse_detect(&frame.received_data(), &frame.channel, frame.noise_power, &scenario.constellation)?;
                Outcome::Done { channel: None, detected: Some(detected), trace: None }
            }
            Algorithm::GenieMmse => Outcome::Done {
                channel: Some(genie_mmse(&frame, &scenario.stats)?.channel_matrix()),
                detected: None,
                trace: None,
            },
        };
        push_rows(&frame, key, &ck, outcome, out)?;
    }
    Ok(())
}

enum Outcome {
    Done {
        channel: Option<CMatrix>,
        detected: Option<Vec<usize>>,
        trace: Option<Vec<f64>>,
    },
    Diverged,
}

fn run_ep(frame: &Frame, prior: &MmseEstimate, constellation: &Constellation, config: &EpConfig) -> Result<Outcome> {
    match ep::run(frame, prior, constellation, config) {
        Ok(o) => {
            let trace = if config.trace_nmse {
                let mut t = vec![nmse(&frame.channel, &prior.channel_matrix())?];
                t.extend(o.iterations.iter().filter_map(|s| s.nmse));
                Some(t)
            } else {
                None
            };
            Ok(Outcome::Done { channel: Some(o.channel), detected: Some(o.detected), trace })
        }
        Err(CoreError::NonFinite { .. }) => Ok(Outcome::Diverged),
        Err(e) => Err(e.into()),
    }
}

fn push_rows(frame: &Frame, key: TrialKey, ck: &[f64], outcome: Outcome, out: &mut Results) -> Result<()> {
    let ues = frame.dims.ues;
    let (channel, detected, trace) = match outcome {
        Outcome::Done { channel, detected, trace } => (channel, detected, trace),
        Outcome::Diverged => {
            out.records.push(TrialRecord { key, ue: None, nmse: None, ser: None, ck: None, diverged: true });
            for (k, &c) in ck.iter().enumerate() {
                out.records.push(TrialRecord { key, ue: Some(k), nmse: None, ser: None, ck: Some(c), diverged: true });
            }
            return Ok(());
        }
    };
    let (nmse_all, nmse_ue) = match &channel {
        Some(h) => (Some(nmse(&frame.channel, h)?), Some(nmse_per_ue(&frame.channel, h)?)),
        None => (None, None),
    };
    let (ser_all, ser_ue) = match &detected {
        Some(d) => (Some(ser(&frame.data_indices, d)?), Some(ser_per_ue(&frame.data_indices, d, ues)?)),
        None => (None, None),
    };
    out.records.push(TrialRecord { key, ue: None, nmse: nmse_all, ser: ser_all, ck: None, diverged: false });
    for k in 0..ues {
        out.records.push(TrialRecord {
            key,
            ue: Some(k),
            nmse: nmse_ue.as_ref().map(|v| v[k]),
            ser: ser_ue.as_ref().map(|v| v[k]),
            ck: Some(ck[k]),
            diverged: false,
        });
    }
    if let Some(nmse) = trace {
        out.traces.push(TraceRecord { key, nmse });
    }
    Ok(())
}
