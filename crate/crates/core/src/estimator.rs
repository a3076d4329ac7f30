//! Finite-sample estimates: correlations, the CHSH parameter with a
//! Hoeffding confidence radius, the certification verdict, and rate curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{Angle, SettingQuad, CHSH_SIGNS, CLASSICAL_CHSH_BOUND};
use crate::error::{check_range, Error, Result};
use crate::models::OutcomeSource;
use crate::rng::{streams, substream};
use crate::timeline::{self, DetectionConfig, TrialRecord};

/// Usable (double-click) records required in every context.
pub const MIN_RECORDS_PER_CONTEXT: u64 = 100;

/// Label attached to every CHSH report.
pub const CONFIDENCE_METHOD: &str = "hoeffding, union bound over 4 terms, two-sided";

/// Running sums of `alice · bob` over double-click trials. Merges are
/// associative, so chunks can be reduced in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationAccumulator {
    pub n: u64,
    pub sum: i64,
}

impl CorrelationAccumulator {
    pub fn push(&mut self, record: &TrialRecord) {
        if record.double_click() {
            self.n += 1;
            self.sum += i64::from(record.alice_outcome.value() * record.bob_outcome.value());
        }
    }

    pub fn merge(self, other: Self) -> Self {
        CorrelationAccumulator {
            n: self.n + other.n,
            sum: self.sum + other.sum,
        }
    }

    pub fn estimate(&self, context: usize) -> Result<CorrelationEstimate> {
        if self.n == 0 {
            return Err(Error::InsufficientData {
                context,
                have: 0,
                need: 1,
            });
        }
        let n = self.n as f64;
        let e_hat = self.sum as f64 / n;
        // Products are ±1, so the sum of squares is n.
        let var = if self.n > 1 {
            (n * (1.0 - e_hat * e_hat) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(CorrelationEstimate {
            context,
            n: self.n,
            e_hat,
            std_err: (var / n).sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    /// `0..4` for `(a,b)`, `(a,b′)`, `(a′,b)`, `(a′,b′)`.
    pub context: usize,
    pub n: u64,
    pub e_hat: f64,
    pub std_err: f64,
}

/// Post-selected correlation of one setting pair: no-click trials are
/// dropped.
pub fn estimate_correlation(records: &[TrialRecord]) -> Result<CorrelationEstimate> {
    let context = records.first().map_or(0, TrialRecord::context);
    let mut acc = CorrelationAccumulator::default();
    for r in records {
        acc.push(r);
    }
    acc.estimate(context)
}

/// Splits records into the four CHSH contexts.
pub fn accumulate_contexts(records: &[TrialRecord]) -> [CorrelationAccumulator; 4] {
    let merge4 = |x: [CorrelationAccumulator; 4], y: [CorrelationAccumulator; 4]| {
        [0, 1, 2, 3].map(|i| x[i].merge(y[i]))
    };
    records
        .par_chunks(1 << 14)
        .map(|chunk| {
            let mut acc = [CorrelationAccumulator::default(); 4];
            for r in chunk {
                acc[r.context()].push(r);
            }
            acc
        })
        .reduce(|| [CorrelationAccumulator::default(); 4], merge4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub quad: SettingQuad,
    pub contexts: [CorrelationEstimate; 4],
    pub s_hat: f64,
    /// Normal-approximation standard error of `s_hat`.
    pub std_err: f64,
    pub confidence_radius: f64,
    pub confidence_level: f64,
    pub method: String,
}

impl ChshResult {
    pub fn n_per_context(&self) -> [u64; 4] {
        self.contexts.map(|c| c.n)
    }
}

/// Hoeffding radius for a sum of four ±1 means, each at level
/// `1 − (1 − confidence)/4`.
pub fn hoeffding_radius(n_per_context: [u64; 4], confidence: f64) -> f64 {
    let delta = 1.0 - confidence;
    let log_term = 2.0 * (8.0 / delta).ln();
    n_per_context.iter().map(|&n| (log_term / n as f64).sqrt()).sum()
}

pub fn chsh_from_accumulators(
    acc: &[CorrelationAccumulator; 4],
    quad: &SettingQuad,
    confidence: f64,
) -> Result<ChshResult> {
    check_confidence(confidence)?;
    for (context, a) in acc.iter().enumerate() {
        if a.n < MIN_RECORDS_PER_CONTEXT {
            return Err(Error::InsufficientData {
                context,
                have: a.n,
                need: MIN_RECORDS_PER_CONTEXT,
            });
        }
    }
    let contexts = [
        acc[0].estimate(0)?,
        acc[1].estimate(1)?,
        acc[2].estimate(2)?,
        acc[3].estimate(3)?,
    ];
    let signed: f64 = contexts.iter().zip(CHSH_SIGNS).map(|(c, s)| s * c.e_hat).sum();
    let std_err = contexts.iter().map(|c| c.std_err.powi(2)).sum::<f64>().sqrt();
    Ok(ChshResult {
        quad: *quad,
        contexts,
        s_hat: signed.abs(),
        std_err,
        confidence_radius: hoeffding_radius(contexts.map(|c| c.n), confidence),
        confidence_level: confidence,
        method: CONFIDENCE_METHOD.to_string(),
    })
}

/// CHSH estimate from records tagged with their settings.
pub fn estimate_chsh(records: &[TrialRecord], quad: &SettingQuad, confidence: f64) -> Result<ChshResult> {
    chsh_from_accumulators(&accumulate_contexts(records), quad, confidence)
}

fn check_confidence(confidence: f64) -> Result<f64> {
    check_range("confidence", confidence, 0.0, 1.0)?;
    if confidence == 0.0 || confidence == 1.0 {
        return Err(Error::InvalidConfig(format!(
            "confidence must lie strictly between 0 and 1, got {confidence}"
        )));
    }
    Ok(confidence)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationVerdict {
    pub certified: bool,
    pub s_hat: f64,
    pub threshold: f64,
    pub confidence_radius: f64,
    pub confidence_level: f64,
    /// `s_hat − confidence_radius − threshold`.
    pub margin: f64,
    pub n_per_context: [u64; 4],
}

/// Certified exactly when the lower confidence bound on `S` clears the
/// local realistic bound 2.
pub fn certify(result: &ChshResult) -> CertificationVerdict {
    let margin = result.s_hat - result.confidence_radius - CLASSICAL_CHSH_BOUND;
    CertificationVerdict {
        certified: margin > 0.0,
        s_hat: result.s_hat,
        threshold: CLASSICAL_CHSH_BOUND,
        confidence_radius: result.confidence_radius,
        confidence_level: result.confidence_level,
        margin,
        n_per_context: result.n_per_context(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub theta: f64,
    pub rate: f64,
    pub std_err: f64,
}

/// Synchronized rate per emitted pair at each grid angle, with binomial
/// standard error. Point `i` draws from the same stream for every source,
/// so curves from different sources use paired seeds.
pub fn rate_curve<S>(
    source: &S,
    theta_grid: &[f64],
    n_per_point: u64,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<Vec<RatePoint>>
where
    S: OutcomeSource + Sync,
{
    if n_per_point == 0 {
        return Err(Error::ZeroDenominator);
    }
    theta_grid
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let angle = Angle::new(check_range("grid angle", theta, 0.0, std::f64::consts::PI)?)?;
            let stream = substream(streams::PHYSICS, i as u64);
            let records = timeline::simulate_fixed_angle(source, angle, n_per_point, cfg, seed, stream)?;
            let rate = timeline::sync_rate_from_records(&records, n_per_point)?;
            Ok(RatePoint {
                theta,
                rate,
                std_err: (rate * (1.0 - rate) / n_per_point as f64).sqrt(),
            })
        })
        .collect()
}
