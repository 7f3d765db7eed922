use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cellfree_core::model::PilotKind;
use cellfree_sim::config::{parse_power_sweep, parse_trials};
use cellfree_sim::harness::{simulate, write_results, TRACE_FILE};
use cellfree_sim::record::{read_records_file, read_traces_file};
use cellfree_sim::series::studies_for;
use cellfree_sim::{emit_plot_series, Algorithm, ExperimentConfig, Results, SimError, Study};
use clap::{Parser, Subcommand};

/// Overrides the output directory of `simulate` (but not an explicit `--out`).
const OUT_DIR_ENV: &str = "CELLFREE_OUT_DIR";

#[derive(Parser)]
#[command(version, about = "Monte Carlo driver for cell-free massive MIMO joint channel estimation and detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv plus its plot series.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        study: Option<Study>,
        /// Inclusive `start:stop:step` in dBm.
        #[arg(long, value_name = "A:B:STEP")]
        power_sweep: Option<String>,
        /// Drops times realizations per drop, e.g. `200x1`.
        #[arg(long, value_name = "DxR")]
        trials: Option<String>,
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<Algorithm>>,
        #[arg(long, value_delimiter = ',')]
        pilots: Option<Vec<PilotKind>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the full trial counts of the study preset instead of the desk-scale ones.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rebuild the series of one study from a results file.
    Plot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        study: Study,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Simulate {
            config,
            study,
            power_sweep,
            trials,
            algorithms,
            pilots,
            seed,
            out,
            full_scale,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = study {
                cfg.study = s;
            }
            if let Some(p) = power_sweep {
                cfg.powers_dbm = Some(parse_power_sweep(&p)?);
            }
            if let Some(t) = trials {
                let (d, r) = parse_trials(&t)?;
                cfg.drops = Some(d);
                cfg.realizations = Some(r);
            }
            if algorithms.is_some() {
                cfg.algorithms = algorithms;
            }
            if let Some(p) = pilots {
                cfg.pilots = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)) {
                cfg.output_dir = dir;
            }
            cfg.full_scale |= full_scale;
            if threads.is_some() {
                cfg.threads = threads;
            }
            simulate_cmd(&cfg)
        }
        Command::Plot { results, study, out } => plot_cmd(&results, study, &out),
    }
}

fn simulate_cmd(cfg: &ExperimentConfig) -> Result<(), SimError> {
    let plan = cfg.resolve()?;
    eprintln!(
        "{}: {} drops x {} realizations, {} power(s), Td {:?}, pilots {:?}",
        plan.study,
        plan.drops,
        plan.realizations,
        plan.powers_dbm.len(),
        plan.data_lens,
        plan.pilots.iter().map(|p| p.name()).collect::<Vec<_>>()
    );
    let start = Instant::now();
    let results = simulate(&plan)?;
    eprintln!(
        "{} records in {:.1?}, {} diverged trial(s)",
        results.records.len(),
        start.elapsed(),
        results.diverged_trials()
    );
    for p in write_results(&results, &cfg.output_dir)? {
        println!("{}", p.display());
    }
    for study in studies_for(plan.study.kind()) {
        emit(&results, study, &cfg.output_dir.join("series").join(study.name()))?;
    }
    Ok(())
}

fn plot_cmd(results_path: &Path, study: Study, out: &Path) -> Result<(), SimError> {
    let mut results = Results { records: read_records_file(results_path)?, traces: Vec::new() };
    let trace = results_path.with_file_name(TRACE_FILE);
    if study == Study::NmseVsIter && trace.exists() {
        results.traces = read_traces_file(&trace)?;
    }
    emit(&results, study, out)
}

fn emit(results: &Results, study: Study, dir: &Path) -> Result<(), SimError> {
    for p in emit_plot_series(results, study, dir)? {
        println!("{}", p.display());
    }
    Ok(())
}
