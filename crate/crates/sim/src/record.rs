//! Per-trial records and their flat CSV form.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use cellfree_core::model::PilotKind;

use crate::config::{Algorithm, Study};
use crate::error::{Result, SimError};
use crate::seed::TrialSeeds;

pub const CSV_HEADER: [&str; 14] = [
    "study",
    "algorithm",
    "pilot",
    "Td",
    "power_dbm",
    "drop",
    "realization",
    "ue",
    "nmse",
    "ser",
    "ck",
    "diverged",
    "seed_hi",
    "seed_lo",
];

pub const TRACE_HEADER: [&str; 11] = [
    "study",
    "algorithm",
    "pilot",
    "Td",
    "power_dbm",
    "drop",
    "realization",
    "iteration",
    "nmse",
    "seed_hi",
    "seed_lo",
];

/// Written in the `algorithm` column of rows that involve no receiver.
pub const NO_ALGORITHM: &str = "none";
/// Written in the `ue` column of whole-frame rows.
pub const ALL_UES: &str = "all";

/// Labels shared by every row of one (algorithm, pilot, `T_d`, power, drop,
/// realization) trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialKey {
    pub study: Study,
    pub algorithm: Option<Algorithm>,
    pub pilot: PilotKind,
    pub data_len: usize,
    pub power_dbm: f64,
    pub drop: usize,
    pub realization: usize,
    pub seeds: TrialSeeds,
}

impl TrialKey {
    fn cmp_labels(&self, other: &Self) -> Ordering {
        self.study
            .cmp(&other.study)
            .then(self.algorithm.cmp(&other.algorithm))
            .then(self.pilot.cmp(&other.pilot))
            .then(self.data_len.cmp(&other.data_len))
            .then(self.power_dbm.total_cmp(&other.power_dbm))
            .then(self.drop.cmp(&other.drop))
            .then(self.realization.cmp(&other.realization))
    }

    fn algorithm_name(&self) -> &'static str {
        self.algorithm.map_or(NO_ALGORITHM, Algorithm::name)
    }
}

/// One CSV row. `ue == None` is the whole-frame row; a metric that does not
/// apply to the algorithm (or to a diverged trial) is `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub key: TrialKey,
    pub ue: Option<usize>,
    pub nmse: Option<f64>,
    pub ser: Option<f64>,
    pub ck: Option<f64>,
    pub diverged: bool,
}

impl TrialRecord {
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.key.cmp_labels(&other.key).then(self.ue.cmp(&other.ue))
    }

    fn fields(&self) -> [String; 14] {
        let k = &self.key;
        [
            k.study.name().to_string(),
            k.algorithm_name().to_string(),
            k.pilot.name().to_string(),
            k.data_len.to_string(),
            k.power_dbm.to_string(),
            k.drop.to_string(),
            k.realization.to_string(),
            self.ue.map_or_else(|| ALL_UES.to_string(), |u| u.to_string()),
            opt(self.nmse),
            opt(self.ser),
            opt(self.ck),
            u8::from(self.diverged).to_string(),
            k.seeds.hi.to_string(),
            k.seeds.lo.to_string(),
        ]
    }
}

/// Channel NMSE after each iteration; entry 0 is the initial estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub key: TrialKey,
    pub nmse: Vec<f64>,
}

/// Output of one experiment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Results {
    pub records: Vec<TrialRecord>,
    pub traces: Vec<TraceRecord>,
}

impl Results {
    pub fn sort(&mut self) {
        self.records.sort_by(TrialRecord::canonical_cmp);
        self.traces.sort_by(|a, b| a.key.cmp_labels(&b.key));
    }

    /// Trials flagged as diverged, counted once per trial.
    pub fn diverged_trials(&self) -> usize {
        self.records.iter().filter(|r| r.ue.is_none() && r.diverged).count()
    }
}

fn opt(v: Option<f64>) -> String {
    // `Display` for f64 prints the shortest string that parses back exactly.
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(|e| SimError::io("CSV output", e))?;
    Ok(())
}

pub fn write_traces<W: Write>(out: W, traces: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for t in traces {
        let k = &t.key;
        for (i, v) in t.nmse.iter().enumerate() {
            w.write_record([
                k.study.name().to_string(),
                k.algorithm_name().to_string(),
                k.pilot.name().to_string(),
                k.data_len.to_string(),
                k.power_dbm.to_string(),
                k.drop.to_string(),
                k.realization.to_string(),
                i.to_string(),
                v.to_string(),
                k.seeds.hi.to_string(),
                k.seeds.lo.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| SimError::io("CSV output", e))?;
    Ok(())
}

pub fn write_records_file(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| SimError::io(path, e))?;
    write_records(std::io::BufWriter::new(f), records)
}

pub fn write_traces_file(path: &Path, traces: &[TraceRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| SimError::io(path, e))?;
    write_traces(std::io::BufWriter::new(f), traces)
}

struct Fields<'a> {
    row: &'a csv::StringRecord,
    line: usize,
}

impl Fields<'_> {
    fn err(&self, reason: String) -> SimError {
        SimError::Record { line: self.line, reason }
    }

    fn get(&self, i: usize) -> &str {
        self.row.get(i).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, i: usize, name: &str) -> Result<T> {
        self.get(i)
            .parse()
            .map_err(|_| self.err(format!("bad {name} `{}`", self.get(i))))
    }

    fn opt_f64(&self, i: usize, name: &str) -> Result<Option<f64>> {
        if self.get(i).is_empty() {
            Ok(None)
        } else {
            self.parse(i, name).map(Some)
        }
    }

    fn key(&self, seed_col: usize) -> Result<TrialKey> {
        let algorithm = match self.get(1) {
            NO_ALGORITHM => None,
            a => Some(a.parse().map_err(|_| self.err(format!("bad algorithm `{a}`")))?),
        };
        Ok(TrialKey {
            study: self.get(0).parse().map_err(|_| self.err(format!("bad study `{}`", self.get(0))))?,
            algorithm,
            pilot: self.get(2).parse().map_err(|_| self.err(format!("bad pilot `{}`", self.get(2))))?,
            data_len: self.parse(3, "Td")?,
            power_dbm: self.parse(4, "power_dbm")?,
            drop: self.parse(5, "drop")?,
            realization: self.parse(6, "realization")?,
            seeds: TrialSeeds {
                hi: self.parse(seed_col, "seed_hi")?,
                lo: self.parse(seed_col + 1, "seed_lo")?,
            },
        })
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(SimError::Record {
            line: 1,
            reason: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &CSV_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let f = Fields { row: &row, line: i + 2 };
        let ue = match f.get(7) {
            ALL_UES => None,
            _ => Some(f.parse(7, "ue")?),
        };
        let diverged = match f.get(11) {
            "0" => false,
            "1" => true,
            other => return Err(f.err(format!("bad diverged flag `{other}`"))),
        };
        out.push(TrialRecord {
            key: f.key(12)?,
            ue,
            nmse: f.opt_f64(8, "nmse")?,
            ser: f.opt_f64(9, "ser")?,
            ck: f.opt_f64(10, "ck")?,
            diverged,
        });
    }
    Ok(out)
}

/// Reassembles traces from their long form. Rows of one trial must be
/// contiguous and in iteration order, as [`write_traces`] produces them.
pub fn read_traces<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &TRACE_HEADER)?;
    let mut out: Vec<TraceRecord> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let f = Fields { row: &row, line: i + 2 };
        let key = f.key(9)?;
        let iteration: usize = f.parse(7, "iteration")?;
        let nmse: f64 = f.parse(8, "nmse")?;
        match out.last_mut() {
            Some(t) if iteration > 0 && t.key == key && t.nmse.len() == iteration => t.nmse.push(nmse),
            _ if iteration == 0 => out.push(TraceRecord { key, nmse: vec![nmse] }),
            _ => return Err(f.err(format!("trace iteration {iteration} out of sequence"))),
        }
    }
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<TrialRecord>> {
    let f = File::open(path).map_err(|e| SimError::io(path, e))?;
    read_records(std::io::BufReader::new(f))
}

pub fn read_traces_file(path: &Path) -> Result<Vec<TraceRecord>> {
    let f = File::open(path).map_err(|e| SimError::io(path, e))?;
    read_traces(std::io::BufReader::new(f))
}
