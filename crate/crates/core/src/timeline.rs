//! Tick streams, detector efficiency, jitter and coincidence matching.
//!
//! A clock ticks when its detector registers `+1`. Detection thins both
//! outcomes with probability `1 − η`, ticks are stamped at
//! `trial · pair_period` plus Gaussian jitter, and coincidences are paired by
//! a greedy two-pointer scan within the window `τ_c`.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::Angle;
use crate::error::{check_range, Error, Result};
use crate::models::{OutcomePair, OutcomeSource, Spin, UnitVector3};
use crate::rng::{stream_rng, StreamRng, CHUNK_TRIALS};

/// Detection result for one party in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
    NoClick,
}

impl Outcome {
    /// `+1`, `−1`, or `0` for no click.
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
            Outcome::NoClick => 0,
        }
    }

    pub fn from_value(v: i8) -> Option<Self> {
        match v {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            0 => Some(Outcome::NoClick),
            _ => None,
        }
    }

    pub fn is_tick(self) -> bool {
        self == Outcome::Plus
    }

    pub fn is_click(self) -> bool {
        self != Outcome::NoClick
    }
}

impl From<Spin> for Outcome {
    fn from(s: Spin) -> Self {
        match s {
            Spin::Up => Outcome::Plus,
            Spin::Down => Outcome::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickEvent {
    pub trial_index: u64,
    pub timestamp_ns: f64,
    pub party: Party,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub eta_a: f64,
    pub eta_b: f64,
    pub jitter_sigma_ns: f64,
    pub pair_period_ns: f64,
    pub coincidence_window_ns: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            eta_a: 1.0,
            eta_b: 1.0,
            jitter_sigma_ns: 1.0,
            pair_period_ns: 100.0,
            coincidence_window_ns: 5.0,
        }
    }
}

impl DetectionConfig {
    pub fn ideal() -> Self {
        DetectionConfig {
            jitter_sigma_ns: 0.0,
            ..Default::default()
        }
    }

    pub fn with_efficiency(eta_a: f64, eta_b: f64) -> Self {
        DetectionConfig {
            eta_a,
            eta_b,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("eta_a", self.eta_a, 0.0, 1.0)?;
        check_range("eta_b", self.eta_b, 0.0, 1.0)?;
        check_range("jitter_sigma_ns", self.jitter_sigma_ns, 0.0, f64::MAX)?;
        for (what, v) in [
            ("pair_period_ns", self.pair_period_ns),
            ("coincidence_window_ns", self.coincidence_window_ns),
        ] {
            check_range(what, v, 0.0, f64::MAX)?;
            if v == 0.0 {
                return Err(Error::OutOfDomain {
                    what,
                    value: v,
                    min: f64::MIN_POSITIVE,
                    max: f64::MAX,
                });
            }
        }
        Ok(())
    }
}

/// One emitted pair: which setting each party used and what it saw.
/// Settings are indices, `0` for `a`/`b` and `1` for `a′`/`b′`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub alice_setting: u8,
    pub bob_setting: u8,
    pub alice_outcome: Outcome,
    pub bob_outcome: Outcome,
}

impl TrialRecord {
    /// CHSH context `2·alice_setting + bob_setting`.
    pub fn context(&self) -> usize {
        usize::from(self.alice_setting) * 2 + usize::from(self.bob_setting)
    }

    pub fn both_tick(&self) -> bool {
        self.alice_outcome.is_tick() && self.bob_outcome.is_tick()
    }

    pub fn double_click(&self) -> bool {
        self.alice_outcome.is_click() && self.bob_outcome.is_click()
    }

    pub fn outcome(&self, party: Party) -> Outcome {
        match party {
            Party::A => self.alice_outcome,
            Party::B => self.bob_outcome,
        }
    }
}

fn thin<R: Rng + ?Sized>(spin: Spin, eta: f64, rng: &mut R) -> Outcome {
    if eta >= 1.0 {
        spin.into()
    } else if eta <= 0.0 || rng.random::<f64>() >= eta {
        Outcome::NoClick
    } else {
        spin.into()
    }
}

/// Each side independently loses its outcome with probability `1 − η`.
pub fn apply_detection<R: Rng + ?Sized>(
    pair: OutcomePair,
    cfg: &DetectionConfig,
    rng: &mut R,
) -> (Outcome, Outcome) {
    let alice = thin(pair.alice, cfg.eta_a, rng);
    let bob = thin(pair.bob, cfg.eta_b, rng);
    (alice, bob)
}

/// Tick streams of both parties, each sorted by timestamp.
pub fn emit_ticks<R: Rng + ?Sized>(
    records: &[TrialRecord],
    cfg: &DetectionConfig,
    rng: &mut R,
) -> Result<(Vec<TickEvent>, Vec<TickEvent>)> {
    if records.windows(2).any(|w| w[0].trial_index >= w[1].trial_index) {
        return Err(Error::Unsorted("trial record"));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in records {
        let nominal = r.trial_index as f64 * cfg.pair_period_ns;
        for (party, stream) in [(Party::A, &mut a), (Party::B, &mut b)] {
            if r.outcome(party).is_tick() {
                let jitter = if cfg.jitter_sigma_ns > 0.0 {
                    cfg.jitter_sigma_ns * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                stream.push(TickEvent {
                    trial_index: r.trial_index,
                    timestamp_ns: (nominal + jitter).max(0.0),
                    party,
                });
            }
        }
    }
    // Jitter beyond half a period can reorder ticks.
    a.sort_by(|x, y| x.timestamp_ns.total_cmp(&y.timestamp_ns));
    b.sort_by(|x, y| x.timestamp_ns.total_cmp(&y.timestamp_ns));
    Ok((a, b))
}

fn is_sorted(stream: &[TickEvent]) -> bool {
    stream.windows(2).all(|w| w[0].timestamp_ns <= w[1].timestamp_ns)
}

/// Greedy earliest-first pairing of ticks with `|t_A − t_B| ≤ window`.
/// Each tick is used at most once; pairs come out in Alice-timestamp order.
pub fn match_coincidences(
    stream_a: &[TickEvent],
    stream_b: &[TickEvent],
    window_ns: f64,
) -> Result<Vec<(TickEvent, TickEvent)>> {
    check_range("coincidence window", window_ns, 0.0, f64::MAX)?;
    if !is_sorted(stream_a) {
        return Err(Error::Unsorted("first tick"));
    }
    if !is_sorted(stream_b) {
        return Err(Error::Unsorted("second tick"));
    }
    let (mut i, mut j) = (0, 0);
    let mut matched = Vec::new();
    while i < stream_a.len() && j < stream_b.len() {
        let (ta, tb) = (stream_a[i].timestamp_ns, stream_b[j].timestamp_ns);
        if (ta - tb).abs() <= window_ns {
            matched.push((stream_a[i], stream_b[j]));
            i += 1;
            j += 1;
        } else if ta < tb {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(matched)
}

/// Coincident `(+1, +1)` trials per emitted pair.
pub fn sync_rate_from_records(records: &[TrialRecord], n_emitted: u64) -> Result<f64> {
    if n_emitted == 0 {
        return Err(Error::ZeroDenominator);
    }
    let hits = records.iter().filter(|r| r.both_tick()).count();
    Ok(hits as f64 / n_emitted as f64)
}

/// Matched tick pairs per emitted pair.
pub fn sync_rate_from_matches(matches: &[(TickEvent, TickEvent)], n_emitted: u64) -> Result<f64> {
    if n_emitted == 0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(matches.len() as f64 / n_emitted as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PartyCounts {
    pub ticks: u64,
    pub non_ticks: u64,
    pub no_clicks: u64,
}

impl PartyCounts {
    pub fn total(&self) -> u64 {
        self.ticks + self.non_ticks + self.no_clicks
    }
}

pub fn party_counts(records: &[TrialRecord], party: Party) -> PartyCounts {
    let mut c = PartyCounts::default();
    for r in records {
        match r.outcome(party) {
            Outcome::Plus => c.ticks += 1,
            Outcome::Minus => c.non_ticks += 1,
            Outcome::NoClick => c.no_clicks += 1,
        }
    }
    c
}

/// Generates `n` trial records in fixed-size chunks, each chunk drawing from
/// its own `(seed, stream, chunk)` generator, so the output does not depend
/// on how many workers run.
pub fn generate_records<F>(n: u64, seed: u64, stream: u64, trial: F) -> Result<Vec<TrialRecord>>
where
    F: Fn(u64, &mut StreamRng) -> Result<TrialRecord> + Sync,
{
    let chunk = CHUNK_TRIALS as u64;
    let chunks = n.div_ceil(chunk);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, stream, c);
            (c * chunk..((c + 1) * chunk).min(n))
                .map(|i| trial(i, &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// `n` trials of `source` at relative angle `theta` (Alice along z), with
/// detection applied.
pub fn simulate_fixed_angle<S>(
    source: &S,
    theta: Angle,
    n: u64,
    cfg: &DetectionConfig,
    seed: u64,
    stream: u64,
) -> Result<Vec<TrialRecord>>
where
    S: OutcomeSource + Sync,
{
    cfg.validate()?;
    let a = UnitVector3::planar(Angle::unchecked(0.0));
    let b = UnitVector3::planar(theta);
    generate_records(n, seed, stream, |i, rng| {
        let pair = source.sample(&a, &b, rng)?;
        let (alice_outcome, bob_outcome) = apply_detection(pair, cfg, rng);
        Ok(TrialRecord {
            trial_index: i,
            alice_setting: 0,
            bob_setting: 0,
            alice_outcome,
            bob_outcome,
        })
    })
}

/// One row of the timeline exchange format. Trial records produce one row
/// per party with an empty timestamp; ticks carry a timestamp and an empty
/// setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub trial: u64,
    pub party: Party,
    pub setting: Option<u8>,
    /// `1`, `-1`, or `0` for no click.
    pub outcome: i8,
    pub timestamp_ns: Option<f64>,
}

pub fn record_rows(records: &[TrialRecord]) -> impl Iterator<Item = TimelineRow> + '_ {
    records.iter().flat_map(|r| {
        [
            (Party::A, r.alice_setting, r.alice_outcome),
            (Party::B, r.bob_setting, r.bob_outcome),
        ]
        .map(|(party, setting, outcome)| TimelineRow {
            trial: r.trial_index,
            party,
            setting: Some(setting),
            outcome: outcome.value(),
            timestamp_ns: None,
        })
    })
}

pub fn tick_rows<'a>(streams: &'a [&'a [TickEvent]]) -> impl Iterator<Item = TimelineRow> + 'a {
    streams.iter().flat_map(|s| s.iter()).map(|t| TimelineRow {
        trial: t.trial_index,
        party: t.party,
        setting: None,
        outcome: 1,
        timestamp_ns: Some(t.timestamp_ns),
    })
}

/// Comma-separated with a header row and LF line endings.
pub fn write_rows_csv<W: Write>(rows: impl IntoIterator<Item = TimelineRow>, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(reader: R) -> Result<Vec<TimelineRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// One JSON object per line.
pub fn write_rows_jsonl<W: Write>(rows: impl IntoIterator<Item = TimelineRow>, mut writer: W) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut writer, &row)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<jsonl>", e))
}

pub fn read_rows_jsonl<R: BufRead>(reader: R) -> Result<Vec<TimelineRow>> {
    reader
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|line| {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            Ok(serde_json::from_str(&line)?)
        })
        .collect()
}
