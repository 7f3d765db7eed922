//! Plot-ready series, one CSV file per curve.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use cellfree_core::metrics::{bin_by_metric, ecdf, log_bin_edges};
use cellfree_core::model::PilotKind;

use crate::config::{Algorithm, RunKind, Study};
use crate::error::{Result, SimError};
use crate::record::{Results, TrialRecord};

/// Bins of the SER-versus-contamination study.
pub const CK_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    /// File stem, `algorithm_pilot_TdN` (plus `_PdBm` when the study holds
    /// several powers).
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Sample mean and its standard error (zero for fewer than two samples).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct CurveKey {
    algorithm: Option<Algorithm>,
    pilot: PilotKind,
    data_len: usize,
}

/// Power as an ordered map key.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
struct Power(f64);

impl Eq for Power {}

impl Ord for Power {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn curve_name(curve: &CurveKey, power: Option<f64>) -> String {
    let mut name = match curve.algorithm {
        Some(a) => format!("{}_{}_Td{}", a.name(), curve.pilot.name(), curve.data_len),
        None => format!("ck_{}", curve.pilot.name()),
    };
    if let Some(p) = power {
        name.push_str(&format!("_{p}dBm"));
    }
    name
}

/// Checks that every combination of the labels present is populated.
fn check_complete(groups: &BTreeMap<(CurveKey, Power), Vec<&TrialRecord>>) -> Result<()> {
    let curves: BTreeSet<CurveKey> = groups.keys().map(|k| k.0).collect();
    let algs: BTreeSet<_> = curves.iter().map(|c| c.algorithm).collect();
    let pilots: BTreeSet<_> = curves.iter().map(|c| c.pilot).collect();
    let tds: BTreeSet<_> = curves.iter().map(|c| c.data_len).collect();
    let powers: BTreeSet<Power> = groups.keys().map(|k| k.1).collect();
    let mut missing = Vec::new();
    for &algorithm in &algs {
        for &pilot in &pilots {
            for &data_len in &tds {
                for &p in &powers {
                    let curve = CurveKey { algorithm, pilot, data_len };
                    if !groups.contains_key(&(curve, p)) {
                        missing.push(format!(
                            "algorithm={} pilot={} Td={} power_dbm={}",
                            algorithm.map_or("none", Algorithm::name),
                            pilot.name(),
                            data_len,
                            p.0
                        ));
                    }
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(SimError::MissingSeries(missing))
    }
}

/// Groups the rows relevant to `study` by curve and power.
fn group<'a>(
    results: &'a Results,
    study: Study,
    keep: impl Fn(&TrialRecord) -> bool,
) -> Result<BTreeMap<(CurveKey, Power), Vec<&'a TrialRecord>>> {
    let mut groups: BTreeMap<(CurveKey, Power), Vec<&TrialRecord>> = BTreeMap::new();
    for r in results.records.iter().filter(|r| study.accepts(r.key.study) && keep(r)) {
        let k = &r.key;
        let curve = CurveKey { algorithm: k.algorithm, pilot: k.pilot, data_len: k.data_len };
        groups.entry((curve, Power(k.power_dbm))).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(SimError::EmptyResults(study.name().into()));
    }
    check_complete(&groups)?;
    Ok(groups)
}

fn metric(r: &TrialRecord, study: Study) -> Option<f64> {
    match study {
        Study::SerVsPower | Study::CdfSer | Study::SerVsCk => r.ser,
        Study::NmseVsPower | Study::CdfNmse | Study::NmseVsIter => r.nmse,
        Study::CdfCk => r.ck,
    }
}

fn applies(alg: Option<Algorithm>, study: Study) -> bool {
    match (study, alg) {
        (Study::CdfCk, _) => true,
        (_, None) => false,
        (Study::SerVsPower | Study::CdfSer | Study::SerVsCk, Some(a)) => a.has_ser(),
        (Study::NmseVsPower | Study::CdfNmse, Some(a)) => a.has_nmse(),
        (Study::NmseVsIter, Some(a)) => matches!(a, Algorithm::EpMod | Algorithm::EpLegacy),
    }
}

/// Computes the curves of `study` from `results`.
pub fn build_series(results: &Results, study: Study) -> Result<Vec<Series>> {
    match study {
        Study::SerVsPower | Study::NmseVsPower => power_curves(results, study),
        Study::NmseVsIter => iteration_curves(results, study),
        Study::CdfSer | Study::CdfNmse => ue_cdfs(results, study),
        Study::CdfCk => ck_cdfs(results),
        Study::SerVsCk => ser_vs_ck(results),
    }
}

/// Writes the curves of `study` into `dir`, one `<name>.csv` per curve.
pub fn emit_plot_series(results: &Results, study: Study, dir: &Path) -> Result<Vec<PathBuf>> {
    let series = build_series(results, study)?;
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let mut paths = Vec::with_capacity(series.len());
    for s in &series {
        let path = dir.join(format!("{}.csv", s.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&s.columns)?;
        for row in &s.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| SimError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

fn power_curves(results: &Results, study: Study) -> Result<Vec<Series>> {
    let groups = group(results, study, |r| r.ue.is_none() && applies(r.key.algorithm, study))?;
    let nmse = study == Study::NmseVsPower;
    let mut curves: BTreeMap<CurveKey, Vec<Vec<f64>>> = BTreeMap::new();
    for ((curve, power), rows) in &groups {
        let values: Vec<f64> = rows.iter().filter(|r| !r.diverged).filter_map(|r| metric(r, study)).collect();
        let diverged = rows.iter().filter(|r| r.diverged).count();
        let (mean, se) = mean_stderr(&values);
        let mut row = vec![power.0, mean];
        if nmse {
            row.push(db(mean));
        }
        row.extend([se, values.len() as f64, diverged as f64]);
        curves.entry(*curve).or_default().push(row);
    }
    let columns = if nmse {
        vec!["power_dbm", "mean", "mean_db", "stderr", "count", "diverged"]
    } else {
        vec!["power_dbm", "mean", "stderr", "count", "diverged"]
    };
    Ok(curves
        .into_iter()
        .map(|(c, rows)| Series { name: curve_name(&c, None), columns: columns.clone(), rows })
        .collect())
}

fn power_suffix(powers: &BTreeSet<Power>, p: Power) -> Option<f64> {
    (powers.len() > 1).then_some(p.0)
}

fn iteration_curves(results: &Results, study: Study) -> Result<Vec<Series>> {
    let mut groups: BTreeMap<(CurveKey, Power), Vec<&Vec<f64>>> = BTreeMap::new();
    for t in results.traces.iter().filter(|t| study.accepts(t.key.study)) {
        let k = &t.key;
        let curve = CurveKey { algorithm: k.algorithm, pilot: k.pilot, data_len: k.data_len };
        groups.entry((curve, Power(k.power_dbm))).or_default().push(&t.nmse);
    }
    if groups.is_empty() {
        return Err(SimError::EmptyResults(study.name().into()));
    }
    let powers: BTreeSet<Power> = groups.keys().map(|k| k.1).collect();
    let mut out = Vec::new();
    for ((curve, power), traces) in &groups {
        let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
        let rows = (0..len)
            .map(|i| {
                let values: Vec<f64> = traces.iter().filter_map(|t| t.get(i).copied()).collect();
                let (mean, se) = mean_stderr(&values);
                vec![i as f64, mean, db(mean), se, values.len() as f64]
            })
            .collect();
        out.push(Series {
            name: curve_name(curve, power_suffix(&powers, *power)),
            columns: vec!["iteration", "mean", "mean_db", "stderr", "count"],
            rows,
        });
    }
    Ok(out)
}

/// Per-(drop, UE) averages over realizations, in drop-then-UE order.
fn per_ue_means(rows: &[&TrialRecord], value: impl Fn(&TrialRecord) -> Option<f64>) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<(usize, usize), (f64, f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.diverged) {
        let (Some(ue), Some(v)) = (r.ue, value(r)) else { continue };
        let e = acc.entry((r.key.drop, ue)).or_insert((r.ck.unwrap_or(f64::NAN), 0.0, 0));
        e.1 += v;
        e.2 += 1;
    }
    acc.into_values().map(|(ck, sum, n)| (ck, sum / n as f64)).collect()
}

fn cdf_rows(samples: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(ecdf(samples)?.steps().into_iter().map(|(x, f)| vec![x, f]).collect())
}

fn ue_cdfs(results: &Results, study: Study) -> Result<Vec<Series>> {
    let groups = group(results, study, |r| r.ue.is_some() && applies(r.key.algorithm, study))?;
    let powers: BTreeSet<Power> = groups.keys().map(|k| k.1).collect();
    let mut out = Vec::new();
    for ((curve, power), rows) in &groups {
        let samples: Vec<f64> = per_ue_means(rows, |r| metric(r, study)).into_iter().map(|p| p.1).collect();
        if samples.is_empty() {
            continue;
        }
        out.push(Series {
            name: curve_name(curve, power_suffix(&powers, *power)),
            columns: vec!["value", "cdf"],
            rows: cdf_rows(&samples)?,
        });
    }
    Ok(out)
}

fn ck_cdfs(results: &Results) -> Result<Vec<Series>> {
    // The metric depends only on the drop, the pilots and the power.
    let mut samples: BTreeMap<(PilotKind, Power), BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    for r in results.records.iter().filter(|r| r.ue.is_some()) {
        if let (Some(ue), Some(ck)) = (r.ue, r.ck) {
            samples
                .entry((r.key.pilot, Power(r.key.power_dbm)))
                .or_default()
                .entry((r.key.drop, ue))
                .or_insert(ck);
        }
    }
    if samples.is_empty() {
        return Err(SimError::EmptyResults(Study::CdfCk.name().into()));
    }
    let pilots: BTreeSet<PilotKind> = samples.keys().map(|k| k.0).collect();
    let powers: BTreeSet<Power> = samples.keys().map(|k| k.1).collect();
    let missing: Vec<String> = pilots
        .iter()
        .flat_map(|&pl| powers.iter().map(move |&p| (pl, p)))
        .filter(|k| !samples.contains_key(k))
        .map(|(pl, p)| format!("pilot={} power_dbm={}", pl.name(), p.0))
        .collect();
    if !missing.is_empty() {
        return Err(SimError::MissingSeries(missing));
    }
    samples
        .iter()
        .map(|((pilot, power), per_ue)| {
            let values: Vec<f64> = per_ue.values().copied().collect();
            let curve = CurveKey { algorithm: None, pilot: *pilot, data_len: 0 };
            Ok(Series {
                name: curve_name(&curve, power_suffix(&powers, *power)),
                columns: vec!["ck", "cdf"],
                rows: cdf_rows(&values)?,
            })
        })
        .collect()
}

/// `(c_k, mean SER_k)` per (drop, UE), averaged over realizations.
pub fn ser_ck_pairs(rows: &[&TrialRecord]) -> Vec<(f64, f64)> {
    per_ue_means(rows, |r| r.ser).into_iter().filter(|p| p.0 > 0.0).collect()
}

fn ser_vs_ck(results: &Results) -> Result<Vec<Series>> {
    let study = Study::SerVsCk;
    let groups = group(results, study, |r| r.ue.is_some() && applies(r.key.algorithm, study))?;
    let powers: BTreeSet<Power> = groups.keys().map(|k| k.1).collect();
    let mut out = Vec::new();
    for ((curve, power), rows) in &groups {
        let pairs = ser_ck_pairs(rows);
        if pairs.is_empty() {
            continue;
        }
        let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
        let hi = if hi > lo { hi } else { lo * (1.0 + 1e-9) };
        let bins = bin_by_metric(&pairs, &log_bin_edges(lo, hi, CK_BINS)?)?;
        out.push(Series {
            name: curve_name(curve, power_suffix(&powers, *power)),
            columns: vec!["ck_center", "ck_lower", "ck_upper", "mean_ser", "count"],
            rows: bins
                .into_iter()
                .map(|b| vec![b.center, b.lower, b.upper, b.mean, b.count as f64])
                .collect(),
        });
    }
    Ok(out)
}

/// Studies whose inputs a run of `kind` produces.
pub fn studies_for(kind: RunKind) -> Vec<Study> {
    let mut v: Vec<Study> = Study::ALL.into_iter().filter(|s| s.kind() == kind).collect();
    if kind != RunKind::MetricOnly && kind != RunKind::Trace {
        v.push(Study::CdfCk);
    }
    v
}
