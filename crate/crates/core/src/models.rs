//! Per-trial outcome sources.
//!
//! Four sources share the [`OutcomeSource`] interface: the singlet sampler,
//! the bomb-fragment local hidden variable model, a context-blind mimic
//! calibrated at one angle, and a playback tape that replays pre-recorded
//! outcomes whatever the settings.

use std::cell::Cell;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, Angle, JointDistribution};
use crate::error::{check_range, Error, Result};

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitVector3 {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVector3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NotUnit { x, y, z, norm });
        }
        Ok(UnitVector3 { x, y, z })
    }

    /// Direction at `angle` from the z axis inside the x–z plane.
    pub fn planar(angle: Angle) -> Self {
        let (s, c) = angle.radians().sin_cos();
        UnitVector3 { x: s, y: 0.0, z: c }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }
}

/// A ±1 measurement outcome. `Up` is a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn value(self) -> i8 {
        match self {
            Spin::Up => 1,
            Spin::Down => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Spin> {
        match v {
            1 => Some(Spin::Up),
            -1 => Some(Spin::Down),
            _ => None,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    /// `sign(x)` with `sign(0) = +1`.
    fn sign_of(x: f64) -> Spin {
        if x >= 0.0 {
            Spin::Up
        } else {
            Spin::Down
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomePair {
    pub alice: Spin,
    pub bob: Spin,
}

impl OutcomePair {
    pub const fn new(alice: Spin, bob: Spin) -> Self {
        OutcomePair { alice, bob }
    }

    pub fn product(&self) -> i8 {
        self.alice.value() * self.bob.value()
    }

    pub fn both_tick(&self) -> bool {
        self.alice == Spin::Up && self.bob == Spin::Up
    }

    /// Index into `[++, +−, −+, −−]`.
    pub fn index(&self) -> usize {
        (usize::from(self.alice == Spin::Down) << 1) | usize::from(self.bob == Spin::Down)
    }

    fn from_index(i: usize) -> Self {
        let spin = |down: bool| if down { Spin::Down } else { Spin::Up };
        OutcomePair::new(spin(i & 2 != 0), spin(i & 1 != 0))
    }
}

/// Something that answers one emitted pair measured along `a` and `b`.
///
/// Identical inputs and RNG state give identical output.
pub trait OutcomeSource {
    fn name(&self) -> &str;

    fn sample<R: Rng + ?Sized>(
        &self,
        a: &UnitVector3,
        b: &UnitVector3,
        rng: &mut R,
    ) -> Result<OutcomePair>;
}

/// Uniform direction on the sphere from three normalized standard normals.
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R) -> UnitVector3 {
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        let norm = (x * x + y * y + z * z).sqrt();
        if norm > 1e-12 {
            return UnitVector3 {
                x: x / norm,
                y: y / norm,
                z: z / norm,
            };
        }
    }
}

fn draw_from<R: Rng + ?Sized>(dist: &JointDistribution, rng: &mut R) -> OutcomePair {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in dist.as_array().into_iter().enumerate().take(3) {
        acc += p;
        if u < acc {
            return OutcomePair::from_index(i);
        }
    }
    OutcomePair::from_index(3)
}

/// Singlet outcomes drawn from the joint distribution with correlation `−a·b`.
pub fn singlet_sample<R: Rng + ?Sized>(
    a: &UnitVector3,
    b: &UnitVector3,
    rng: &mut R,
) -> OutcomePair {
    let e = (-a.dot(b)).clamp(-1.0, 1.0);
    let dist = analytic::joint_distribution(e).expect("clamped correlation");
    draw_from(&dist, rng)
}

/// Bomb fragments with opposite angular momenta `J₁ = −J₂`, `J₁` uniform on
/// the sphere; each party reports the sign of its projection.
pub fn peres_bomb_sample<R: Rng + ?Sized>(
    a: &UnitVector3,
    b: &UnitVector3,
    rng: &mut R,
) -> OutcomePair {
    let j = sample_unit_sphere(rng);
    OutcomePair::new(Spin::sign_of(a.dot(&j)), Spin::sign_of(-b.dot(&j)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Singlet;

impl OutcomeSource for Singlet {
    fn name(&self) -> &str {
        "quantum"
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        a: &UnitVector3,
        b: &UnitVector3,
        rng: &mut R,
    ) -> Result<OutcomePair> {
        Ok(singlet_sample(a, b, rng))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeresBomb;

impl OutcomeSource for PeresBomb {
    fn name(&self) -> &str {
        "bomb"
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        a: &UnitVector3,
        b: &UnitVector3,
        rng: &mut R,
    ) -> Result<OutcomePair> {
        Ok(peres_bomb_sample(a, b, rng))
    }
}

/// Local model that reproduces the singlet statistics at one calibration
/// angle `θ*` from a shared uniform `λ`, whatever settings are requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MimicTable {
    theta_star: Angle,
    /// Upper bounds of the `++`, `+−`, `−+` segments of `[0, 1)`.
    thresholds: [f64; 3],
}

impl MimicTable {
    pub fn theta_star(&self) -> Angle {
        self.theta_star
    }

    pub fn thresholds(&self) -> [f64; 3] {
        self.thresholds
    }

    /// Segment lengths `(p_pp, p_pm, p_mp, p_mm)`.
    pub fn segments(&self) -> [f64; 4] {
        let [t0, t1, t2] = self.thresholds;
        [t0, t1 - t0, t2 - t1, 1.0 - t2]
    }

    pub fn respond(&self, lambda: f64) -> OutcomePair {
        let i = self.thresholds.iter().take_while(|&&t| lambda >= t).count();
        OutcomePair::from_index(i)
    }
}

pub fn build_mimic_table(theta_star: Angle) -> Result<MimicTable> {
    check_range("calibration angle", theta_star.radians(), 0.0, std::f64::consts::PI)?;
    let dist = analytic::joint_distribution(analytic::qm_correlation(theta_star)?)?;
    let t0 = dist.p_pp;
    let t1 = t0 + dist.p_pm;
    let t2 = t1 + dist.p_mp;
    Ok(MimicTable {
        theta_star,
        thresholds: [t0, t1, t2],
    })
}

pub fn mimic_sample<R: Rng + ?Sized>(
    table: &MimicTable,
    _a: &UnitVector3,
    _b: &UnitVector3,
    rng: &mut R,
) -> OutcomePair {
    table.respond(rng.random())
}

impl OutcomeSource for MimicTable {
    fn name(&self) -> &str {
        "mimic"
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        a: &UnitVector3,
        b: &UnitVector3,
        rng: &mut R,
    ) -> Result<OutcomePair> {
        Ok(mimic_sample(self, a, b, rng))
    }
}

/// Stateless sources, for callers that pick a model at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Singlet,
    PeresBomb,
    Mimic(MimicTable),
}

impl OutcomeSource for Model {
    fn name(&self) -> &str {
        match self {
            Model::Singlet => Singlet.name(),
            Model::PeresBomb => PeresBomb.name(),
            Model::Mimic(t) => t.name(),
        }
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        a: &UnitVector3,
        b: &UnitVector3,
        rng: &mut R,
    ) -> Result<OutcomePair> {
        Ok(match self {
            Model::Singlet => singlet_sample(a, b, rng),
            Model::PeresBomb => peres_bomb_sample(a, b, rng),
            Model::Mimic(t) => mimic_sample(t, a, b, rng),
        })
    }
}

/// Pre-recorded outcome pairs replayed in order.
///
/// The cursor lives in a `Cell`: a tape has exactly one consumer and is
/// not `Sync`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlaybackTape {
    entries: Vec<OutcomePair>,
    cursor: Cell<usize>,
}

#[derive(Serialize, Deserialize)]
struct TapeRow {
    alice: i64,
    bob: i64,
}

impl PlaybackTape {
    pub fn new(entries: Vec<OutcomePair>) -> Self {
        PlaybackTape {
            entries,
            cursor: Cell::new(0),
        }
    }

    /// Records `n` trials of `source` at fixed directions.
    pub fn record<S: OutcomeSource, R: Rng + ?Sized>(
        source: &S,
        a: &UnitVector3,
        b: &UnitVector3,
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let entries = (0..n)
            .map(|_| source.sample(a, b, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(PlaybackTape::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor.get()
    }

    pub fn remaining(&self) -> usize {
        self.len() - self.cursor()
    }

    pub fn entries(&self) -> &[OutcomePair] {
        &self.entries
    }

    pub fn rewind(&self) {
        self.cursor.set(0);
    }

    pub fn next_pair(&self) -> Result<OutcomePair> {
        let i = self.cursor.get();
        let pair = *self
            .entries
            .get(i)
            .ok_or(Error::TapeExhausted { len: self.len() })?;
        self.cursor.set(i + 1);
        Ok(pair)
    }

    /// Consumes the next `n` entries at once.
    pub fn take(&self, n: usize) -> Result<&[OutcomePair]> {
        let start = self.cursor.get();
        if n > self.len() - start {
            return Err(Error::TapeExhausted { len: self.len() });
        }
        self.cursor.set(start + n);
        Ok(&self.entries[start..start + n])
    }

    /// CSV with header `alice,bob` and one `±1,±1` row per trial.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        for pair in &self.entries {
            w.serialize(TapeRow {
                alice: pair.alice.value().into(),
                bob: pair.bob.value().into(),
            })?;
        }
        w.flush().map_err(|e| Error::io("<tape>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (line, row) in csv::Reader::from_reader(reader).deserialize::<TapeRow>().enumerate() {
            let row = row?;
            let spin = |v| {
                Spin::from_value(v).ok_or_else(|| {
                    Error::InvalidConfig(format!("tape row {}: outcome {v} is not ±1", line + 1))
                })
            };
            entries.push(OutcomePair::new(spin(row.alice)?, spin(row.bob)?));
        }
        Ok(PlaybackTape::new(entries))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Next recorded pair; the requested settings play no role.
pub fn playback_sample(tape: &PlaybackTape) -> Result<OutcomePair> {
    tape.next_pair()
}

impl OutcomeSource for PlaybackTape {
    fn name(&self) -> &str {
        "playback"
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        _a: &UnitVector3,
        _b: &UnitVector3,
        _rng: &mut R,
    ) -> Result<OutcomePair> {
        self.next_pair()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    const N: usize = 1_000_000;

    fn dir(theta: f64) -> UnitVector3 {
        UnitVector3::planar(Angle::new(theta).unwrap())
    }

    #[derive(Default)]
    struct Tally {
        counts: [u64; 4],
    }

    impl Tally {
        fn run<S: OutcomeSource>(source: &S, theta: f64, n: usize, seed: u64) -> Self {
            let (a, b) = (dir(0.0), dir(theta));
            let mut rng = stream_rng(seed, 99, 0);
            let mut t = Tally::default();
            for _ in 0..n {
                t.counts[source.sample(&a, &b, &mut rng).unwrap().index()] += 1;
            }
            t
        }

        fn n(&self) -> f64 {
            self.counts.iter().sum::<u64>() as f64
        }

        fn p(&self, i: usize) -> f64 {
            self.counts[i] as f64 / self.n()
        }

        fn alice_plus(&self) -> f64 {
            self.p(0) + self.p(1)
        }

        fn bob_plus(&self) -> f64 {
            self.p(0) + self.p(2)
        }

        fn correlation(&self) -> f64 {
            self.p(0) + self.p(3) - self.p(1) - self.p(2)
        }

        fn correlation_se(&self) -> f64 {
            let e = self.correlation();
            ((1.0 - e * e) / self.n()).sqrt()
        }
    }

    fn assert_unbiased(t: &Tally) {
        let se = (0.25 / t.n()).sqrt();
        assert!((t.alice_plus() - 0.5).abs() < 4.0 * se, "alice {}", t.alice_plus());
        assert!((t.bob_plus() - 0.5).abs() < 4.0 * se, "bob {}", t.bob_plus());
    }

    #[test]
    fn unit_vector_validation() {
        assert!(UnitVector3::new(1.0, 0.0, 0.0).is_ok());
        assert!(UnitVector3::new(1.0, 1.0, 0.0).is_err());
        assert!(UnitVector3::new(f64::NAN, 0.0, 0.0).is_err());
        let v = dir(1.1);
        assert!((v.dot(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_sampler_moments_and_caps() {
        let mut rng = stream_rng(1, 2, 3);
        let mut mean = [0.0; 3];
        let mut caps = [0u64; 4];
        let cos_limits = [0.0, 0.5, 30f64.to_radians().cos(), 60f64.to_radians().cos()];
        for _ in 0..N {
            let v = sample_unit_sphere(&mut rng);
            assert!((v.dot(&v) - 1.0).abs() < 1e-9);
            mean[0] += v.x();
            mean[1] += v.y();
            mean[2] += v.z();
            for (c, lim) in caps.iter_mut().zip(cos_limits) {
                if v.z() > lim {
                    *c += 1;
                }
            }
        }
        for m in mean {
            assert!((m / N as f64).abs() < 0.005);
        }
        assert!((caps[0] as f64 / N as f64 - 0.5).abs() < 0.002);
        assert!((caps[1] as f64 / N as f64 - 0.25).abs() < 0.002);
        for (c, lim) in caps.iter().zip(cos_limits) {
            let p = (1.0 - lim) / 2.0;
            let se = (p * (1.0 - p) / N as f64).sqrt();
            assert!((*c as f64 / N as f64 - p).abs() < 4.0 * se, "cap cos {lim}");
        }
    }

    #[test]
    fn singlet_reference_rates() {
        let t = Tally::run(&Singlet, 0.0, N, 11);
        assert_eq!(t.counts[0], 0);
        assert_eq!(t.counts[3], 0);
        let t = Tally::run(&Singlet, FRAC_PI_2, N, 12);
        assert!((t.p(0) - 0.25).abs() < 0.002);
        assert_unbiased(&t);
        let t = Tally::run(&Singlet, 2.4515, N, 13);
        assert!((t.p(0) - 0.443).abs() < 0.003);
        assert_unbiased(&t);
    }

    #[test]
    fn bomb_reference_correlations() {
        let t = Tally::run(&PeresBomb, FRAC_PI_2, N, 21);
        assert!(t.correlation().abs() < 0.005);
        assert_unbiased(&t);
        let t = Tally::run(&PeresBomb, FRAC_PI_4, N, 22);
        assert!((t.correlation() + 0.5).abs() < 0.005);
        let t = Tally::run(&PeresBomb, 2.4515, N, 23);
        assert!((t.p(0) - 0.390).abs() < 0.003);
        assert_unbiased(&t);
    }

    #[test]
    fn samplers_track_correlation_laws_on_grid() {
        for i in 0..25 {
            let theta = PI * i as f64 / 24.0;
            let angle = Angle::new(theta).unwrap();
            let q = Tally::run(&Singlet, theta, 100_000, 100 + i);
            let expected = analytic::qm_correlation(angle).unwrap();
            assert!((q.correlation() - expected).abs() <= 4.0 * q.correlation_se().max(1e-12), "qm θ={theta}");
            let c = Tally::run(&PeresBomb, theta, 100_000, 200 + i);
            let expected = analytic::cl_correlation(angle).unwrap();
            assert!((c.correlation() - expected).abs() <= 4.0 * c.correlation_se().max(1e-12), "cl θ={theta}");
        }
    }

    #[test]
    fn bomb_sign_zero_is_up() {
        assert_eq!(Spin::sign_of(0.0), Spin::Up);
        assert_eq!(Spin::sign_of(-0.0), Spin::Up);
        assert_eq!(Spin::sign_of(-1e-300), Spin::Down);
    }

    #[test]
    fn mimic_table_segments() {
        let t = build_mimic_table(Angle::new(FRAC_PI_2).unwrap()).unwrap();
        for s in t.segments() {
            assert!((s - 0.25).abs() < 1e-12);
        }
        let t = build_mimic_table(Angle::new(0.0).unwrap()).unwrap();
        let seg = t.segments();
        assert!(seg[0].abs() < 1e-12 && seg[3].abs() < 1e-12);
        assert!((seg[1] - 0.5).abs() < 1e-12 && (seg[2] - 0.5).abs() < 1e-12);
        // λ = 0 must not land in an empty ++ segment.
        assert_eq!(t.respond(0.0), OutcomePair::new(Spin::Up, Spin::Down));
        let t = build_mimic_table(Angle::new(2.4515).unwrap()).unwrap();
        assert!((t.segments()[0] - 0.443).abs() < 5e-4);
        assert!(build_mimic_table(Angle::new(-0.1).unwrap()).is_err());
        assert!(build_mimic_table(Angle::new(3.2).unwrap()).is_err());
    }

    #[test]
    fn mimic_matches_calibration_and_ignores_settings() {
        let theta_star = Angle::new(2.4515).unwrap();
        let table = build_mimic_table(theta_star).unwrap();
        let t = Tally::run(&table, 2.4515, N, 31);
        assert!((t.p(0) - analytic::qm_sync_rate(theta_star).unwrap()).abs() < 0.003);
        assert!((t.alice_plus() - 0.5).abs() < 0.002);
        assert!((t.bob_plus() - 0.5).abs() < 0.002);
        let elsewhere = Tally::run(&table, 0.3, N, 31);
        assert_eq!(t.counts, elsewhere.counts);
    }

    #[test]
    fn playback_single_entry_and_exhaustion() {
        let tape = PlaybackTape::new(vec![OutcomePair::new(Spin::Up, Spin::Down)]);
        assert_eq!(playback_sample(&tape).unwrap(), OutcomePair::new(Spin::Up, Spin::Down));
        assert_eq!(tape.cursor(), 1);
        assert!(matches!(playback_sample(&tape), Err(Error::TapeExhausted { len: 1 })));
        assert!(tape.cursor() <= tape.len());
        tape.rewind();
        assert!(tape.take(2).is_err());
        assert_eq!(tape.take(1).unwrap().len(), 1);
    }

    #[test]
    fn playback_preserves_single_context_statistics() {
        let theta = 2.4515;
        let mut rng = stream_rng(41, 1, 0);
        let tape = PlaybackTape::record(&Singlet, &dir(0.0), &dir(theta), N, &mut rng).unwrap();
        let replay = Tally::run(&tape, theta, N, 42);
        let live = Tally::run(&Singlet, theta, N, 43);
        let se = (2.0 * 0.443 * 0.557 / N as f64).sqrt();
        assert!((replay.p(0) - live.p(0)).abs() < 4.0 * se);
        assert_unbiased(&replay);
        // Settings are ignored: a second pass at another angle replays the same data.
        tape.rewind();
        assert_eq!(Tally::run(&tape, 0.1, N, 44).counts, replay.counts);
    }

    #[test]
    fn recorded_bomb_and_mimic_tapes_are_unbiased() {
        let mut rng = stream_rng(45, 1, 0);
        let bomb = PlaybackTape::record(&PeresBomb, &dir(0.0), &dir(1.0), N, &mut rng).unwrap();
        assert_unbiased(&Tally::run(&bomb, 1.0, N, 0));
        let table = build_mimic_table(Angle::new(1.0).unwrap()).unwrap();
        let mimic = PlaybackTape::record(&table, &dir(0.0), &dir(1.0), N, &mut rng).unwrap();
        assert_unbiased(&Tally::run(&mimic, 1.0, N, 0));
    }

    #[test]
    fn sources_are_deterministic() {
        let table = build_mimic_table(Angle::new(1.0).unwrap()).unwrap();
        let models = [Model::Singlet, Model::PeresBomb, Model::Mimic(table)];
        for m in models {
            let run = || {
                let mut rng = stream_rng(5, 6, 7);
                (0..1000)
                    .map(|_| m.sample(&dir(0.0), &dir(2.0), &mut rng).unwrap())
                    .collect::<Vec<_>>()
            };
            assert_eq!(run(), run(), "{}", m.name());
        }
    }

    #[test]
    fn tape_csv_round_trip() {
        let tape = PlaybackTape::new(vec![
            OutcomePair::new(Spin::Up, Spin::Down),
            OutcomePair::new(Spin::Down, Spin::Down),
        ]);
        let mut buf = Vec::new();
        tape.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "alice,bob\n1,-1\n-1,-1\n");
        assert_eq!(PlaybackTape::read_csv(&buf[..]).unwrap().entries(), tape.entries());
        assert!(PlaybackTape::read_csv(&b"alice,bob\n1,0\n"[..]).is_err());
    }

    #[test]
    fn outcome_pair_index_round_trip() {
        for i in 0..4 {
            assert_eq!(OutcomePair::from_index(i).index(), i);
        }
        assert!(OutcomePair::from_index(0).both_tick());
    }
}
