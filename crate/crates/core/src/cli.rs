//! Command-line front end.
//!
//! Exit codes are a stable contract: `0` success (or certified), `3` a valid
//! run that did not certify, `1` usage or data errors. Every flag can also
//! be set through an `ECLOCK_`-prefixed environment variable, e.g.
//! `ECLOCK_TRIALS=100000`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::analytic::{self, Angle, TSIRELSON_BOUND};
use crate::error::{Error, Result};
use crate::estimator::{self, hoeffding_radius};
use crate::harness::{
    self, ExperimentConfig, ExperimentReport, SourceSpec, SweepRow, SweepSources, TapeSpec,
};
use crate::models::{PeresBomb, Singlet};
use crate::rng::{streams, substream};
use crate::timeline::{self, DetectionConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_CERTIFIED: u8 = 3;

const DEFAULT_SWEEP_POINTS: usize = 64;
const DEFAULT_SWEEP_TRIALS: u64 = 100_000;
const DEFAULT_POINT_TRIALS: u64 = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "entangled-clock", version, about = "Entangled clock synchronization and certified private time")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synchronized-rate curves with closed-form overlays (CSV by default).
    Sweep,
    /// Estimate the CHSH parameter of one experiment.
    Chsh,
    /// Run the certification protocol; exit 3 when not certified.
    Certify,
    /// Rates at θ = 0, π/2, π for both sources.
    Cardinal,
    /// Extrema of the synchronization excess and the quantum speedup.
    Excess,
    /// Settings-knowledge forgery, with the learned and a fresh schedule.
    ForgeDemo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Quantum,
    Bomb,
    Mimic,
    Playback,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Experiment config file (JSON).
    #[arg(long, global = true, env = "ECLOCK_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output file (a directory for forge-demo); stdout when absent.
    #[arg(long, global = true, env = "ECLOCK_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "ECLOCK_FORMAT")]
    pub format: Option<Format>,
    /// Master seed for physical randomness.
    #[arg(long, global = true, env = "ECLOCK_SEED")]
    pub seed: Option<u64>,
    /// Private key for the settings schedule.
    #[arg(long, global = true, env = "ECLOCK_SETTINGS_SEED")]
    pub settings_seed: Option<u64>,
    /// Emitted pairs (per experiment, or per grid point for curves).
    #[arg(long, global = true, env = "ECLOCK_TRIALS")]
    pub trials: Option<u64>,
    /// Grid points over [0, π] for sweep.
    #[arg(long, global = true, env = "ECLOCK_POINTS")]
    pub points: Option<usize>,
    #[arg(long, global = true, value_enum, env = "ECLOCK_SOURCE")]
    pub source: Option<SourceArg>,
    /// Angle for the mimic calibration, playback recording, or excess probe.
    #[arg(long, global = true, env = "ECLOCK_THETA", allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Read --theta in degrees.
    #[arg(long, global = true, env = "ECLOCK_DEGREES")]
    pub degrees: bool,
    #[arg(long, global = true, env = "ECLOCK_ETA_A")]
    pub eta_a: Option<f64>,
    #[arg(long, global = true, env = "ECLOCK_ETA_B")]
    pub eta_b: Option<f64>,
    /// Coincidence window in ns.
    #[arg(long, global = true, env = "ECLOCK_WINDOW")]
    pub window: Option<f64>,
    /// Gaussian timing jitter in ns.
    #[arg(long, global = true, env = "ECLOCK_JITTER")]
    pub jitter: Option<f64>,
    #[arg(long, global = true, env = "ECLOCK_CONFIDENCE")]
    pub confidence: Option<f64>,
    /// Playback tape file (alice,bob rows) for --source playback.
    #[arg(long, global = true, env = "ECLOCK_TAPE")]
    pub tape: Option<PathBuf>,
    /// Dump trial records (CSV, or JSON lines for a .jsonl path).
    #[arg(long, global = true, env = "ECLOCK_RECORDS")]
    pub records: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Options {
    fn theta(&self) -> Result<Option<f64>> {
        self.theta
            .map(|t| {
                let rad = if self.degrees { t.to_radians() } else { t };
                Angle::new(rad).map(Angle::radians)
            })
            .transpose()
    }

    fn detection(&self, base: DetectionConfig) -> DetectionConfig {
        DetectionConfig {
            eta_a: self.eta_a.unwrap_or(base.eta_a),
            eta_b: self.eta_b.unwrap_or(base.eta_b),
            jitter_sigma_ns: self.jitter.unwrap_or(base.jitter_sigma_ns),
            coincidence_window_ns: self.window.unwrap_or(base.coincidence_window_ns),
            ..base
        }
    }

    /// Config file (or defaults) with flag overrides applied.
    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(seed) = self.settings_seed {
            config.settings_seed = seed;
        }
        if let Some(n) = self.trials {
            config.n_trials = n;
        }
        if let Some(c) = self.confidence {
            config.confidence = c;
        }
        config.detection = self.detection(config.detection);
        let lead = analytic::excess_extrema().1.radians();
        let theta = self.theta()?;
        match self.source {
            Some(SourceArg::Quantum) => config.source = SourceSpec::Quantum,
            Some(SourceArg::Bomb) => config.source = SourceSpec::Bomb,
            Some(SourceArg::Mimic) => {
                config.source = SourceSpec::Mimic {
                    theta_star: theta.unwrap_or(lead),
                }
            }
            Some(SourceArg::Playback) => {
                let tape = match &self.tape {
                    Some(path) => TapeSpec::File { path: path.clone() },
                    None => TapeSpec::Recorded {
                        theta: theta.unwrap_or(lead),
                        seed: substream(config.master_seed, streams::TAPE_RECORDING),
                    },
                };
                config.source = SourceSpec::Playback { tape };
            }
            None => {}
        }
        config.validate()?;
        Ok(config)
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run_from_args(std::env::args_os()))
}

pub fn run(cli: &Cli) -> Result<u8> {
    let opts = &cli.opts;
    match cli.command {
        Command::Sweep => cmd_sweep(opts),
        Command::Chsh => cmd_chsh(opts, false),
        Command::Certify => cmd_chsh(opts, true),
        Command::Cardinal => cmd_cardinal(opts),
        Command::Excess => cmd_excess(opts),
        Command::ForgeDemo => cmd_forge_demo(opts),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn fmt_f64(x: f64) -> String {
    // Shortest representation that parses back to the same value.
    format!("{x:?}")
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Number(n) => out.push((
            prefix.to_string(),
            n.as_f64().filter(|_| n.is_f64()).map_or_else(|| n.to_string(), fmt_f64),
        )),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Reports as pretty JSON, or as a `key,value` table of flattened leaves.
fn write_report<T: Serialize>(report: &T, format: Format, out: Option<&Path>) -> Result<()> {
    let mut w = open_out(out)?;
    let io_err = |e| Error::io(out.unwrap_or(Path::new("<stdout>")), e);
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", &serde_json::to_value(report)?, &mut rows);
            let mut c = csv_writer(&mut w);
            c.write_record(["key", "value"])?;
            for (k, v) in rows {
                c.write_record([k, v])?;
            }
            c.flush().map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Columns for the selected sources; Δ columns only when both run.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], sources: SweepSources, writer: W) -> Result<()> {
    type Column = (&'static str, fn(&SweepRow) -> Option<f64>);
    let (qm, cl) = (sources.quantum, sources.classical);
    let columns: [(bool, Column); 10] = [
        (true, ("theta", |r| Some(r.theta))),
        (qm, ("r_qm_mc", |r| r.r_qm_mc)),
        (cl, ("r_cl_mc", |r| r.r_cl_mc)),
        (qm, ("r_qm_exact", |r| Some(r.r_qm_exact))),
        (cl, ("r_cl_exact", |r| Some(r.r_cl_exact))),
        (qm && cl, ("delta_mc", |r| r.delta_mc)),
        (qm && cl, ("delta_exact", |r| Some(r.delta_exact))),
        (qm, ("r_qm_stderr", |r| r.r_qm_stderr)),
        (cl, ("r_cl_stderr", |r| r.r_cl_stderr)),
        (qm && cl, ("delta_stderr", |r| r.delta_stderr)),
    ];
    let selected: Vec<Column> = columns.into_iter().filter(|(on, _)| *on).map(|(_, c)| c).collect();
    let mut c = csv_writer(writer);
    c.write_record(selected.iter().map(|(name, _)| *name))?;
    for r in rows {
        c.write_record(selected.iter().map(|(_, get)| get(r).map_or_else(String::new, fmt_f64)))?;
    }
    c.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn cmd_sweep(opts: &Options) -> Result<u8> {
    let config = opts.experiment_config()?;
    let sources = match opts.source {
        None => SweepSources::BOTH,
        Some(SourceArg::Quantum) => SweepSources {
            quantum: true,
            classical: false,
        },
        Some(SourceArg::Bomb) => SweepSources {
            quantum: false,
            classical: true,
        },
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "sweep supports --source quantum or bomb, not {other:?}"
            )))
        }
    };
    let points = opts.points.unwrap_or(DEFAULT_SWEEP_POINTS);
    if points == 0 {
        return Err(Error::InvalidConfig("--points must be positive".into()));
    }
    let n = opts.trials.unwrap_or(DEFAULT_SWEEP_TRIALS);
    let grid = harness::theta_grid(points);
    let rows = harness::sweep(sources, &grid, n, &config.detection, config.master_seed)?;
    match opts.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = open_out(opts.out.as_deref())?;
            write_sweep_csv(&rows, sources, &mut w)?;
            w.flush().map_err(|e| Error::io("<out>", e))?;
        }
        Format::Json => write_report(&rows, Format::Json, opts.out.as_deref())?,
    }
    Ok(EXIT_OK)
}

fn dump_records(records: &[timeline::TrialRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let w = BufWriter::new(file);
    if path.extension().is_some_and(|e| e == "jsonl") {
        timeline::write_rows_jsonl(timeline::record_rows(records), w)
    } else {
        timeline::write_rows_csv(timeline::record_rows(records), w)
    }
}

fn cmd_chsh(opts: &Options, certify: bool) -> Result<u8> {
    let config = opts.experiment_config()?;
    let record = harness::run_experiment(&config)?;
    if opts.verbose > 0 {
        eprintln!(
            "{} trials from {} in {} ms",
            config.n_trials,
            config.source.name(),
            record.metadata.elapsed_ms
        );
    }
    if let Some(path) = &opts.records {
        dump_records(&record.trials, path)?;
    }
    let format = opts.format.unwrap_or(Format::Json);
    match (&opts.out, format) {
        // A JSON file keeps the whole record: report, metadata and trials.
        (Some(path), Format::Json) => harness::persist_record(&record, path)?,
        (out, _) => write_report(&record.report(), format, out.as_deref())?,
    }
    Ok(if !certify || record.verdict.certified {
        EXIT_OK
    } else {
        EXIT_NOT_CERTIFIED
    })
}

#[derive(Debug, Serialize)]
struct CardinalRow {
    source: &'static str,
    theta: f64,
    n: u64,
    rate_mc: f64,
    std_err: f64,
    rate_exact: f64,
    within_4_sigma: bool,
}

#[derive(Debug, Serialize)]
struct CardinalReport {
    rows: Vec<CardinalRow>,
    all_within_4_sigma: bool,
}

fn cmd_cardinal(opts: &Options) -> Result<u8> {
    let config = opts.experiment_config()?;
    let n = opts.trials.unwrap_or(DEFAULT_POINT_TRIALS);
    let grid = [0.0, PI / 2.0, PI];
    let seed = config.master_seed;
    let cfg = &config.detection;
    let qm = estimator::rate_curve(&Singlet, &grid, n, cfg, seed)?;
    let cl = estimator::rate_curve(&PeresBomb, &grid, n, cfg, seed)?;
    let eff = cfg.eta_a * cfg.eta_b;
    let mut rows = Vec::new();
    for (source, curve, exact) in [
        ("quantum", &qm, analytic::qm_sync_rate as fn(Angle) -> Result<f64>),
        ("bomb", &cl, analytic::cl_sync_rate),
    ] {
        for p in curve {
            let rate_exact = eff * exact(Angle::new(p.theta)?)?;
            let se = (rate_exact * (1.0 - rate_exact) / n as f64).sqrt();
            rows.push(CardinalRow {
                source,
                theta: p.theta,
                n,
                rate_mc: p.rate,
                std_err: p.std_err,
                rate_exact,
                within_4_sigma: (p.rate - rate_exact).abs() <= 4.0 * se,
            });
        }
    }
    let report = CardinalReport {
        all_within_4_sigma: rows.iter().all(|r| r.within_4_sigma),
        rows,
    };
    write_report(&report, opts.format.unwrap_or(Format::Json), opts.out.as_deref())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct ExcessPoint {
    theta: f64,
    theta_degrees: f64,
    r_qm_exact: f64,
    r_cl_exact: f64,
    delta_exact: f64,
    relative_speedup_exact: Option<f64>,
    r_qm_mc: f64,
    r_cl_mc: f64,
    delta_mc: f64,
    delta_stderr: f64,
}

#[derive(Debug, Serialize)]
struct ExcessReport {
    n_per_point: u64,
    lag: ExcessPoint,
    lead: ExcessPoint,
    probe: Option<ExcessPoint>,
}

fn cmd_excess(opts: &Options) -> Result<u8> {
    let config = opts.experiment_config()?;
    let n = opts.trials.unwrap_or(DEFAULT_POINT_TRIALS);
    let (lag, lead) = analytic::excess_extrema();
    let mut grid = vec![lag.radians(), lead.radians()];
    if let Some(t) = opts.theta()? {
        grid.push(t);
    }
    let rows = harness::sweep(SweepSources::BOTH, &grid, n, &config.detection, config.master_seed)?;
    let mut points = rows.iter().map(|r| -> Result<ExcessPoint> {
        let angle = Angle::new(r.theta)?;
        Ok(ExcessPoint {
            theta: r.theta,
            theta_degrees: r.theta.to_degrees(),
            r_qm_exact: r.r_qm_exact,
            r_cl_exact: r.r_cl_exact,
            delta_exact: r.delta_exact,
            relative_speedup_exact: analytic::relative_speedup(angle).ok(),
            r_qm_mc: r.r_qm_mc.unwrap_or(f64::NAN),
            r_cl_mc: r.r_cl_mc.unwrap_or(f64::NAN),
            delta_mc: r.delta_mc.unwrap_or(f64::NAN),
            delta_stderr: r.delta_stderr.unwrap_or(f64::NAN),
        })
    });
    let report = ExcessReport {
        n_per_point: n,
        lag: points.next().expect("lag point")?,
        lead: points.next().expect("lead point")?,
        probe: points.next().transpose()?,
    };
    write_report(&report, opts.format.unwrap_or(Format::Json), opts.out.as_deref())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct ForgeSummary {
    known_schedule: ExperimentReport,
    fresh_schedule: ExperimentReport,
}

fn cmd_forge_demo(opts: &Options) -> Result<u8> {
    let config = opts.experiment_config()?;
    let per_context = (config.n_trials / 4).max(1);
    let expected_radius = hoeffding_radius([per_context; 4], config.confidence);
    if expected_radius >= TSIRELSON_BOUND - 2.0 {
        eprintln!(
            "warning: with {} trials the confidence radius (≈{expected_radius:.3}) exceeds the largest quantum violation (2√2 − 2); an honest source could not certify here",
            config.n_trials
        );
    }
    let demo = harness::run_forgery_demo(&config)?;
    let format = opts.format.unwrap_or(Format::Json);
    let known = demo.known_schedule.report();
    let fresh = demo.fresh_schedule.report();
    let summary = format!(
        "forged tape: known schedule S={:.4} certified={} | fresh schedule S={:.4} certified={}",
        known.chsh.s_hat, known.verdict.certified, fresh.chsh.s_hat, fresh.verdict.certified
    );
    match &opts.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let ext = match format {
                Format::Json => "json",
                Format::Csv => "csv",
            };
            write_report(&known, format, Some(&dir.join(format!("forge_known_schedule.{ext}"))))?;
            write_report(&fresh, format, Some(&dir.join(format!("forge_fresh_schedule.{ext}"))))?;
            println!("{summary}");
        }
        None => {
            write_report(
                &ForgeSummary {
                    known_schedule: known,
                    fresh_schedule: fresh,
                },
                format,
                None,
            )?;
            eprintln!("{summary}");
        }
    }
    Ok(EXIT_OK)
}
