//! Full experiments: seeded settings schedules, source wiring, adversary
//! scenarios and persistence.
//!
//! Two seeds play separate roles. `settings_seed` is the private key that
//! drives the schedule of measurement settings; `master_seed` drives every
//! physical random draw. Re-running an [`ExperimentConfig`] reproduces its
//! statistical outputs bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, Angle, SettingQuad};
use crate::error::{check_range, Error, Result};
use crate::estimator::{self, CertificationVerdict, ChshResult, CONFIDENCE_METHOD};
use crate::models::{self, Model, OutcomePair, OutcomeSource, PlaybackTape, Singlet, UnitVector3};
use crate::rng::{stream_rng, streams, substream, CHUNK_TRIALS};
use crate::timeline::{self, DetectionConfig, TrialRecord};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MASTER_SEED: u64 = 0xC10C_5EED;
pub const DEFAULT_SETTINGS_SEED: u64 = 0x5E77_1265;
pub const DEFAULT_TRIALS: u64 = 400_000;
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Above this many trials, persisted records spill trial data to a CSV
/// sidecar.
pub const INLINE_TRIAL_LIMIT: usize = 100_000;

/// Where a playback tape comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case", deny_unknown_fields)]
pub enum TapeSpec {
    /// Singlet outcomes pre-recorded at one fixed relative angle, with no
    /// knowledge of the settings schedule.
    Recorded { theta: f64, seed: u64 },
    /// A tape file with `alice,bob` rows.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Quantum,
    Bomb,
    Mimic { theta_star: f64 },
    Playback { tape: TapeSpec },
}

impl SourceSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SourceSpec::Quantum => "quantum",
            SourceSpec::Bomb => "bomb",
            SourceSpec::Mimic { .. } => "mimic",
            SourceSpec::Playback { .. } => "playback",
        }
    }

    /// Mimic calibrated where the quantum clock leads the most.
    pub fn mimic_at_lead_angle() -> Self {
        SourceSpec::Mimic {
            theta_star: analytic::excess_extrema().1.radians(),
        }
    }

    /// Memory stick recorded at the lead angle.
    pub fn schedule_blind_playback(seed: u64) -> Self {
        SourceSpec::Playback {
            tape: TapeSpec::Recorded {
                theta: analytic::excess_extrema().1.radians(),
                seed,
            },
        }
    }

    pub fn is_local(&self) -> bool {
        !matches!(self, SourceSpec::Quantum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub source: SourceSpec,
    pub quad: SettingQuad,
    pub n_trials: u64,
    pub detection: DetectionConfig,
    pub master_seed: u64,
    pub settings_seed: u64,
    pub confidence: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            source: SourceSpec::Quantum,
            quad: SettingQuad::optimal(),
            n_trials: DEFAULT_TRIALS,
            detection: DetectionConfig::default(),
            master_seed: DEFAULT_MASTER_SEED,
            settings_seed: DEFAULT_SETTINGS_SEED,
            confidence: DEFAULT_CONFIDENCE,
        }
    }
}

impl ExperimentConfig {
    pub fn with_source(source: SourceSpec) -> Self {
        ExperimentConfig {
            source,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be positive".into()));
        }
        check_range("confidence", self.confidence, f64::MIN_POSITIVE, 1.0 - f64::EPSILON)?;
        self.detection.validate()?;
        match &self.source {
            SourceSpec::Mimic { theta_star } => {
                check_range("theta_star", *theta_star, 0.0, std::f64::consts::PI)?;
            }
            SourceSpec::Playback {
                tape: TapeSpec::Recorded { theta, .. },
            } => {
                Angle::new(*theta)?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-trial context choices, `2·alice + bob` with `0` for `a`/`b` and `1`
/// for `a′`/`b′`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettingsSchedule {
    contexts: Vec<u8>,
}

impl SettingsSchedule {
    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn context(&self, trial: usize) -> u8 {
        self.contexts[trial]
    }

    pub fn settings(&self, trial: usize) -> (u8, u8) {
        let c = self.contexts[trial];
        (c / 2, c % 2)
    }

    pub fn contexts(&self) -> &[u8] {
        &self.contexts
    }

    pub fn frequencies(&self) -> [f64; 4] {
        let mut counts = [0u64; 4];
        for &c in &self.contexts {
            counts[usize::from(c)] += 1;
        }
        counts.map(|k| k as f64 / self.len().max(1) as f64)
    }
}

/// I.i.d. uniform contexts, a pure function of the settings seed.
pub fn build_schedule(settings_seed: u64, n_trials: u64) -> SettingsSchedule {
    let n = n_trials as usize;
    let mut contexts = Vec::with_capacity(n);
    for chunk in 0..n.div_ceil(CHUNK_TRIALS) {
        let mut rng = stream_rng(settings_seed, streams::SCHEDULE, chunk as u64);
        let len = CHUNK_TRIALS.min(n - chunk * CHUNK_TRIALS);
        contexts.extend((0..len).map(|_| rng.random_range(0..4u8)));
    }
    SettingsSchedule { contexts }
}

/// Settings seed for an independent schedule derived from `seed`.
pub fn fresh_settings_seed(seed: u64) -> u64 {
    substream(seed, 0xF2E5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceSummary {
    /// Trials where both sides registered `+1` after detection.
    pub true_coincidences: u64,
    /// Tick pairs found by the window matcher.
    pub matched: u64,
    /// Matched pairs per emitted pair.
    pub sync_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub coincidences: CoincidenceSummary,
    pub chsh: ChshResult,
    pub verdict: CertificationVerdict,
    pub metadata: RunMetadata,
}

/// Deterministic part of an experiment record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub source: String,
    pub config: ExperimentConfig,
    pub statistical_test: String,
    pub coincidences: CoincidenceSummary,
    pub chsh: ChshResult,
    pub verdict: CertificationVerdict,
}

impl ExperimentRecord {
    pub fn report(&self) -> ExperimentReport {
        ExperimentReport {
            schema_version: CONFIG_SCHEMA_VERSION,
            source: self.config.source.name().to_string(),
            config: self.config.clone(),
            statistical_test: CONFIDENCE_METHOD.to_string(),
            coincidences: self.coincidences,
            chsh: self.chsh.clone(),
            verdict: self.verdict,
        }
    }
}

#[derive(Serialize)]
struct PersistedRecord<'a> {
    #[serde(flatten)]
    report: ExperimentReport,
    metadata: RunMetadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<&'a [TrialRecord]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials_sidecar: Option<String>,
}

/// Writes one self-contained JSON file. Trial data goes inline up to
/// [`INLINE_TRIAL_LIMIT`] trials and to `<path>.trials.csv` beyond.
pub fn persist_record(record: &ExperimentRecord, path: &Path) -> Result<()> {
    let spill = record.trials.len() > INLINE_TRIAL_LIMIT;
    let sidecar = spill.then(|| {
        let mut p = path.as_os_str().to_owned();
        p.push(".trials.csv");
        PathBuf::from(p)
    });
    if let Some(sidecar) = &sidecar {
        let file = File::create(sidecar).map_err(|e| Error::io(sidecar, e))?;
        timeline::write_rows_csv(timeline::record_rows(&record.trials), BufWriter::new(file))?;
    }
    let persisted = PersistedRecord {
        report: record.report(),
        metadata: record.metadata,
        trials: (!spill).then_some(&record.trials[..]),
        trials_sidecar: sidecar
            .as_ref()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned()),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &persisted)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

enum Prepared<'a> {
    Model(Model),
    Tape(&'a [OutcomePair]),
}

fn record_tape(theta: f64, seed: u64, n: usize) -> Result<PlaybackTape> {
    let a = UnitVector3::planar(Angle::new(0.0)?);
    let b = UnitVector3::planar(Angle::new(theta)?);
    let mut rng = stream_rng(seed, streams::TAPE_RECORDING, 0);
    PlaybackTape::record(&Singlet, &a, &b, n, &mut rng)
}

/// Materializes the configured source; playback tapes are recorded or
/// loaded here.
pub fn load_tape(spec: &TapeSpec, n_trials: u64) -> Result<PlaybackTape> {
    match spec {
        TapeSpec::Recorded { theta, seed } => record_tape(*theta, *seed, n_trials as usize),
        TapeSpec::File { path } => PlaybackTape::load(path),
    }
}

/// Generates the schedule from the config and runs the configured source.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    config.validate()?;
    let schedule = build_schedule(config.settings_seed, config.n_trials);
    match &config.source {
        SourceSpec::Quantum => run_prepared(config, &schedule, Prepared::Model(Model::Singlet)),
        SourceSpec::Bomb => run_prepared(config, &schedule, Prepared::Model(Model::PeresBomb)),
        SourceSpec::Mimic { theta_star } => {
            let table = models::build_mimic_table(Angle::new(*theta_star)?)?;
            run_prepared(config, &schedule, Prepared::Model(Model::Mimic(table)))
        }
        SourceSpec::Playback { tape } => {
            let tape = load_tape(tape, config.n_trials)?;
            run_playback(config, &schedule, &tape)
        }
    }
}

/// Replays `tape` against `schedule`, consuming `config.n_trials` entries.
/// The config's own source and settings seed are not consulted.
pub fn run_playback(
    config: &ExperimentConfig,
    schedule: &SettingsSchedule,
    tape: &PlaybackTape,
) -> Result<ExperimentRecord> {
    config.validate()?;
    let entries = tape.take(config.n_trials as usize)?;
    run_prepared(config, schedule, Prepared::Tape(entries))
}

fn run_prepared(
    config: &ExperimentConfig,
    schedule: &SettingsSchedule,
    source: Prepared<'_>,
) -> Result<ExperimentRecord> {
    let started = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    if (schedule.len() as u64) < config.n_trials {
        return Err(Error::InvalidConfig(format!(
            "schedule covers {} trials, config asks for {}",
            schedule.len(),
            config.n_trials
        )));
    }
    let quad = &config.quad;
    let alice_dirs = [UnitVector3::planar(quad.a), UnitVector3::planar(quad.a_prime)];
    let bob_dirs = [UnitVector3::planar(quad.b), UnitVector3::planar(quad.b_prime)];
    let cfg = &config.detection;

    let trials = timeline::generate_records(config.n_trials, config.master_seed, streams::PHYSICS, |i, rng| {
        let (sa, sb) = schedule.settings(i as usize);
        let (a, b) = (&alice_dirs[usize::from(sa)], &bob_dirs[usize::from(sb)]);
        let pair = match &source {
            Prepared::Model(m) => m.sample(a, b, rng)?,
            Prepared::Tape(entries) => entries[i as usize],
        };
        let (alice_outcome, bob_outcome) = timeline::apply_detection(pair, cfg, rng);
        Ok(TrialRecord {
            trial_index: i,
            alice_setting: sa,
            bob_setting: sb,
            alice_outcome,
            bob_outcome,
        })
    })?;

    let mut jitter_rng = stream_rng(config.master_seed, streams::JITTER, 0);
    let (ticks_a, ticks_b) = timeline::emit_ticks(&trials, cfg, &mut jitter_rng)?;
    let matched = timeline::match_coincidences(&ticks_a, &ticks_b, cfg.coincidence_window_ns)?;
    let coincidences = CoincidenceSummary {
        true_coincidences: trials.iter().filter(|r| r.both_tick()).count() as u64,
        matched: matched.len() as u64,
        sync_rate: timeline::sync_rate_from_matches(&matched, config.n_trials)?,
    };

    let chsh = estimator::estimate_chsh(&trials, quad, config.confidence)?;
    let verdict = estimator::certify(&chsh);
    Ok(ExperimentRecord {
        config: config.clone(),
        trials,
        coincidences,
        chsh,
        verdict,
        metadata: RunMetadata {
            started_unix_ms,
            elapsed_ms: started.elapsed().as_millis(),
        },
    })
}

/// Tapes an adversary can write once she knows the schedule: every entry
/// is a singlet draw at that trial's actual relative angle.
pub fn forge_tapes<R: Rng + ?Sized>(
    schedule: &SettingsSchedule,
    quad: &SettingQuad,
    rng: &mut R,
) -> PlaybackTape {
    let alice_dirs = [UnitVector3::planar(quad.a), UnitVector3::planar(quad.a_prime)];
    let bob_dirs = [UnitVector3::planar(quad.b), UnitVector3::planar(quad.b_prime)];
    let entries = (0..schedule.len())
        .map(|i| {
            let (sa, sb) = schedule.settings(i);
            models::singlet_sample(&alice_dirs[usize::from(sa)], &bob_dirs[usize::from(sb)], rng)
        })
        .collect();
    PlaybackTape::new(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeryDemo {
    /// Forged tape replayed against the schedule it was forged for.
    pub known_schedule: ExperimentRecord,
    /// The same tape replayed against an independent schedule.
    pub fresh_schedule: ExperimentRecord,
    pub fresh_settings_seed: u64,
}

/// Runs both branches of the settings-knowledge forgery. The config's
/// source is ignored; `settings_seed` is the schedule the forger learned.
pub fn run_forgery_demo(config: &ExperimentConfig) -> Result<ForgeryDemo> {
    config.validate()?;
    let schedule = build_schedule(config.settings_seed, config.n_trials);
    let mut rng = stream_rng(config.master_seed, streams::FORGERY, 0);
    let tape = forge_tapes(&schedule, &config.quad, &mut rng);

    let label = |seed| ExperimentConfig {
        source: SourceSpec::Playback {
            tape: TapeSpec::File {
                path: PathBuf::from("<forged>"),
            },
        },
        settings_seed: seed,
        ..config.clone()
    };
    let known = label(config.settings_seed);
    let known_schedule = run_playback(&known, &schedule, &tape)?;

    tape.rewind();
    let fresh_seed = fresh_settings_seed(config.settings_seed);
    let fresh = label(fresh_seed);
    let fresh_schedule = run_playback(&fresh, &build_schedule(fresh_seed, config.n_trials), &tape)?;
    Ok(ForgeryDemo {
        known_schedule,
        fresh_schedule,
        fresh_settings_seed: fresh_seed,
    })
}

/// Plug-in mutual information, in bits, between the schedule's context and
/// the tape's outcome pair over their common length.
pub fn mutual_information(schedule: &SettingsSchedule, tape: &PlaybackTape) -> f64 {
    let n = schedule.len().min(tape.len());
    if n == 0 {
        return 0.0;
    }
    let mut joint = [[0u64; 4]; 4];
    for (c, pair) in schedule.contexts()[..n].iter().zip(tape.entries()) {
        joint[usize::from(*c)][pair.index()] += 1;
    }
    let nf = n as f64;
    let row: Vec<f64> = joint.iter().map(|r| r.iter().sum::<u64>() as f64 / nf).collect();
    let col: Vec<f64> = (0..4)
        .map(|j| joint.iter().map(|r| r[j]).sum::<u64>() as f64 / nf)
        .collect();
    let mut mi = 0.0;
    for (i, r) in joint.iter().enumerate() {
        for (j, &k) in r.iter().enumerate() {
            if k > 0 {
                let p = k as f64 / nf;
                mi += p * (p / (row[i] * col[j])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// `points` evenly spaced angles covering `[0, π]` inclusive.
pub fn theta_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| std::f64::consts::PI * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSources {
    pub quantum: bool,
    pub classical: bool,
}

impl SweepSources {
    pub const BOTH: SweepSources = SweepSources {
        quantum: true,
        classical: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub r_qm_mc: Option<f64>,
    pub r_qm_stderr: Option<f64>,
    pub r_cl_mc: Option<f64>,
    pub r_cl_stderr: Option<f64>,
    pub r_qm_exact: f64,
    pub r_cl_exact: f64,
    pub delta_mc: Option<f64>,
    pub delta_stderr: Option<f64>,
    pub delta_exact: f64,
}

/// Monte Carlo rate curves with the closed-form overlays. Both sources use
/// paired seeds at each grid point.
pub fn sweep(
    sources: SweepSources,
    theta_grid: &[f64],
    n_per_point: u64,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let qm = if sources.quantum {
        Some(estimator::rate_curve(&Singlet, theta_grid, n_per_point, cfg, seed)?)
    } else {
        None
    };
    let cl = if sources.classical {
        Some(estimator::rate_curve(&models::PeresBomb, theta_grid, n_per_point, cfg, seed)?)
    } else {
        None
    };
    theta_grid
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let angle = Angle::new(theta)?;
            let q = qm.as_ref().map(|c| c[i]);
            let c = cl.as_ref().map(|c| c[i]);
            let both = q.zip(c);
            Ok(SweepRow {
                theta,
                r_qm_mc: q.map(|p| p.rate),
                r_qm_stderr: q.map(|p| p.std_err),
                r_cl_mc: c.map(|p| p.rate),
                r_cl_stderr: c.map(|p| p.std_err),
                r_qm_exact: analytic::qm_sync_rate(angle)?,
                r_cl_exact: analytic::cl_sync_rate(angle)?,
                delta_mc: both.map(|(q, c)| q.rate - c.rate),
                delta_stderr: both.map(|(q, c)| q.std_err.hypot(c.std_err)),
                delta_exact: analytic::sync_excess(angle)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn small(source: SourceSpec) -> ExperimentConfig {
        ExperimentConfig {
            n_trials: 20_000,
            ..ExperimentConfig::with_source(source)
        }
    }

    #[test]
    fn schedule_frequencies() {
        let s = build_schedule(1, 400_000);
        for f in s.frequencies() {
            assert!((f - 0.25).abs() < 0.003, "{f}");
        }
    }

    #[test]
    fn schedule_determinism_and_independence() {
        assert_eq!(build_schedule(9, 10_000), build_schedule(9, 10_000));
        let (x, y) = (build_schedule(9, 10_000), build_schedule(10, 10_000));
        let differ = x.contexts().iter().zip(y.contexts()).filter(|(a, b)| a != b).count();
        assert!(differ as f64 / 10_000.0 > 0.4);
        // A longer schedule extends a shorter one.
        assert_eq!(&build_schedule(9, 40_000).contexts()[..10_000], x.contexts());
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let c = ExperimentConfig::with_source(SourceSpec::schedule_blind_playback(3));
        assert_eq!(ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        let partial = ExperimentConfig::from_json(r#"{"source":{"kind":"bomb"},"n_trials":1000}"#).unwrap();
        assert_eq!(partial.source, SourceSpec::Bomb);
        assert_eq!(partial.master_seed, DEFAULT_MASTER_SEED);
        for bad in [
            r#"{"schema_version":2}"#,
            r#"{"n_trials":0}"#,
            r#"{"confidence":1.0}"#,
            r#"{"source":{"kind":"mimic","theta_star":4.0}}"#,
            r#"{"detection":{"eta_a":2,"eta_b":1,"jitter_sigma_ns":0,"pair_period_ns":100,"coincidence_window_ns":5}}"#,
            r#"{"unknown":1}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn reproducible_records() {
        for source in [SourceSpec::Quantum, SourceSpec::Bomb, SourceSpec::schedule_blind_playback(4)] {
            let c = small(source);
            let (x, y) = (run_experiment(&c).unwrap(), run_experiment(&c).unwrap());
            assert_eq!(x.trials, y.trials);
            assert_eq!(x.report(), y.report());
        }
    }

    #[test]
    fn quantum_certifies_bomb_does_not() {
        let q = run_experiment(&ExperimentConfig::default()).unwrap();
        assert!(q.verdict.certified, "{:?}", q.verdict);
        let b = run_experiment(&ExperimentConfig::with_source(SourceSpec::Bomb)).unwrap();
        assert!(!b.verdict.certified);
        let p = run_experiment(&ExperimentConfig::with_source(SourceSpec::schedule_blind_playback(5))).unwrap();
        assert!(!p.verdict.certified);
    }

    #[test]
    fn coincidences_match_ticks_with_default_detection() {
        let r = run_experiment(&small(SourceSpec::Quantum)).unwrap();
        let c = r.coincidences;
        assert!(c.matched <= c.true_coincidences);
        assert!(c.matched as f64 >= 0.999 * c.true_coincidences as f64);
    }

    #[test]
    fn exhausted_tape_is_an_error() {
        let config = small(SourceSpec::Quantum);
        let schedule = build_schedule(1, config.n_trials);
        let tape = PlaybackTape::new(vec![OutcomePair::new(models::Spin::Up, models::Spin::Down); 10]);
        assert!(matches!(run_playback(&config, &schedule, &tape), Err(Error::TapeExhausted { .. })));
    }

    #[test]
    fn forgery_branches() {
        let demo = run_forgery_demo(&ExperimentConfig::default()).unwrap();
        assert!(demo.known_schedule.verdict.certified);
        assert!((demo.known_schedule.chsh.s_hat - 2.828).abs() < 0.02);
        assert!(!demo.fresh_schedule.verdict.certified);
        let again = run_forgery_demo(&ExperimentConfig::default()).unwrap();
        assert_eq!(again.known_schedule.chsh.s_hat, demo.known_schedule.chsh.s_hat);
    }

    #[test]
    fn schedule_blind_tape_carries_no_settings_information() {
        let n = 100_000;
        let schedule = build_schedule(DEFAULT_SETTINGS_SEED, n);
        let blind = load_tape(
            &TapeSpec::Recorded {
                theta: analytic::excess_extrema().1.radians(),
                seed: 7,
            },
            n,
        )
        .unwrap();
        // Plug-in bias is about 9 / (2 n ln 2) ≈ 6.5e-5 bits.
        let mi_blind = mutual_information(&schedule, &blind);
        assert!(mi_blind < 3e-4, "{mi_blind}");
        let forged = forge_tapes(&schedule, &SettingQuad::optimal(), &mut stream_rng(1, 2, 3));
        let mi_forged = mutual_information(&schedule, &forged);
        assert!(mi_forged > 0.1, "{mi_forged}");
    }

    #[test]
    fn grid_endpoints() {
        assert_eq!(theta_grid(3), vec![0.0, FRAC_PI_2, PI]);
        assert_eq!(theta_grid(64).len(), 64);
        assert_eq!(*theta_grid(64).last().unwrap(), PI);
    }

    #[test]
    fn sweep_cardinal_points() {
        let rows = sweep(SweepSources::BOTH, &theta_grid(3), 200_000, &DetectionConfig::ideal(), 3).unwrap();
        for (row, exact) in rows.iter().zip([0.0, 0.25, 0.5]) {
            assert!((row.r_qm_exact - exact).abs() < 1e-12);
            assert!((row.r_cl_exact - exact).abs() < 1e-12);
            let d = row.delta_mc.unwrap();
            assert!(d.abs() <= 4.0 * row.delta_stderr.unwrap().max(1e-12), "{row:?}");
        }
        let only_cl = sweep(
            SweepSources { quantum: false, classical: true },
            &[1.0],
            1000,
            &DetectionConfig::ideal(),
            3,
        )
        .unwrap();
        assert!(only_cl[0].r_qm_mc.is_none() && only_cl[0].r_cl_mc.is_some() && only_cl[0].delta_mc.is_none());
    }

    #[test]
    fn persisted_records_inline_or_spill() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_experiment(&small(SourceSpec::Quantum)).unwrap();
        let path = dir.path().join("run.json");
        persist_record(&r, &path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["trials"].as_array().unwrap().len(), 20_000);
        assert!(v["metadata"]["elapsed_ms"].is_u64());

        let big = ExperimentConfig {
            n_trials: 120_000,
            ..ExperimentConfig::default()
        };
        let r = run_experiment(&big).unwrap();
        let path = dir.path().join("big.json");
        persist_record(&r, &path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert!(v.get("trials").is_none());
        assert_eq!(v["trials_sidecar"], "big.json.trials.csv");
        let rows = timeline::read_rows_csv(File::open(dir.path().join("big.json.trials.csv")).unwrap()).unwrap();
        assert_eq!(rows.len(), 240_000);
    }
}
