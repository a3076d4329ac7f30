//! Closed-form reference values for the entangled clock.
//!
//! These are the oracles every Monte Carlo estimate in the crate is checked
//! against: singlet and bomb-fragment correlations, synchronized tick rates,
//! the synchronization excess and its extrema, CHSH combinations and the
//! efficiency-scaled measured rate.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_range, Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Tolerance on probability sums and marginals.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Classical (local realistic) bound on the CHSH parameter.
pub const CLASSICAL_CHSH_BOUND: f64 = 2.0;

/// Quantum maximum of the CHSH parameter, 2√2.
pub const TSIRELSON_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;

/// A finite angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Result<Self> {
        check_finite("angle", radians).map(Angle)
    }

    pub fn from_degrees(degrees: f64) -> Result<Self> {
        Self::new(degrees.to_radians())
    }

    pub const fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// Relative angle between two planar analyzer directions, folded into
    /// `[0, π]`.
    pub fn relative(a: Angle, b: Angle) -> Angle {
        let d = (a.0 - b.0).rem_euclid(TWO_PI);
        Angle(if d > PI { TWO_PI - d } else { d })
    }

    pub(crate) const fn unchecked(radians: f64) -> Self {
        Angle(radians)
    }
}

impl TryFrom<f64> for Angle {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Angle::new(value)
    }
}

impl From<Angle> for f64 {
    fn from(angle: Angle) -> f64 {
        angle.0
    }
}

fn check_relative(theta: Angle) -> Result<f64> {
    check_range("relative angle", theta.0, 0.0, PI)
}

/// Joint probabilities of the four outcome pairs `(alice, bob)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl JointDistribution {
    pub fn as_array(&self) -> [f64; 4] {
        [self.p_pp, self.p_pm, self.p_mp, self.p_mm]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn alice_plus(&self) -> f64 {
        self.p_pp + self.p_pm
    }

    pub fn bob_plus(&self) -> f64 {
        self.p_pp + self.p_mp
    }

    pub fn correlation(&self) -> f64 {
        self.p_pp + self.p_mm - self.p_pm - self.p_mp
    }

    /// Normalized, with unbiased marginals.
    pub fn is_unbiased(&self) -> bool {
        self.as_array().iter().all(|p| (0.0..=1.0).contains(p))
            && (self.total() - 1.0).abs() <= PROBABILITY_TOLERANCE
            && (self.alice_plus() - 0.5).abs() <= PROBABILITY_TOLERANCE
            && (self.bob_plus() - 0.5).abs() <= PROBABILITY_TOLERANCE
    }
}

/// Planar analyzer angles for the two settings of each party.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingQuad {
    pub a: Angle,
    pub a_prime: Angle,
    pub b: Angle,
    pub b_prime: Angle,
}

impl SettingQuad {
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<Self> {
        Ok(SettingQuad {
            a: Angle::new(a)?,
            a_prime: Angle::new(a_prime)?,
            b: Angle::new(b)?,
            b_prime: Angle::new(b_prime)?,
        })
    }

    /// Settings that maximize the singlet CHSH value: `a = 0`, `a′ = π/2`,
    /// `b = π/4`, `b′ = 3π/4`.
    pub fn optimal() -> Self {
        SettingQuad {
            a: Angle(0.0),
            a_prime: Angle(FRAC_PI_2),
            b: Angle(FRAC_PI_4),
            b_prime: Angle(3.0 * FRAC_PI_4),
        }
    }

    pub fn alice(&self, setting: u8) -> Angle {
        if setting == 0 {
            self.a
        } else {
            self.a_prime
        }
    }

    pub fn bob(&self, setting: u8) -> Angle {
        if setting == 0 {
            self.b
        } else {
            self.b_prime
        }
    }

    /// Relative angles of the contexts `(a,b)`, `(a,b′)`, `(a′,b)`, `(a′,b′)`.
    pub fn relative_angles(&self) -> [Angle; 4] {
        [
            Angle::relative(self.a, self.b),
            Angle::relative(self.a, self.b_prime),
            Angle::relative(self.a_prime, self.b),
            Angle::relative(self.a_prime, self.b_prime),
        ]
    }
}

/// Sign of each context in `S = E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)`.
pub const CHSH_SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];

/// Singlet correlation `−cos θ`.
pub fn qm_correlation(theta: Angle) -> Result<f64> {
    check_finite("angle", theta.0)?;
    Ok(-theta.0.cos())
}

/// Bomb-fragment correlation `−1 + 2θ/π`, defined on `[0, π]`.
pub fn cl_correlation(theta: Angle) -> Result<f64> {
    let t = check_relative(theta)?;
    Ok(-1.0 + 2.0 * t / PI)
}

/// Probability that both clocks tick in the same trial, `½ sin²(θ/2)`.
pub fn qm_sync_rate(theta: Angle) -> Result<f64> {
    let t = check_finite("angle", theta.0)?;
    Ok(0.5 * (t / 2.0).sin().powi(2))
}

/// Bomb-fragment synchronized tick rate `θ/(2π)`.
pub fn cl_sync_rate(theta: Angle) -> Result<f64> {
    let t = check_relative(theta)?;
    Ok(t / TWO_PI)
}

/// Joint distribution of a source with unbiased marginals and correlation `e`.
pub fn joint_distribution(e: f64) -> Result<JointDistribution> {
    joint_distribution_biased(e, 0.0)
}

/// Joint distribution with both single-side expectations equal to
/// `marginal_bias`. Every singlet and bomb scenario uses zero bias.
pub fn joint_distribution_biased(e: f64, marginal_bias: f64) -> Result<JointDistribution> {
    check_range("correlation", e, -1.0, 1.0)?;
    check_range("marginal bias", marginal_bias, -1.0, 1.0)?;
    let dist = JointDistribution {
        p_pp: (1.0 + 2.0 * marginal_bias + e) / 4.0,
        p_pm: (1.0 - e) / 4.0,
        p_mp: (1.0 - e) / 4.0,
        p_mm: (1.0 - 2.0 * marginal_bias + e) / 4.0,
    };
    if dist.p_pp < 0.0 || dist.p_mm < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "correlation {e} is incompatible with marginal bias {marginal_bias}"
        )));
    }
    Ok(dist)
}

/// Synchronization excess `Δ(θ) = R_QM(θ) − R_cl(θ)`.
pub fn sync_excess(theta: Angle) -> Result<f64> {
    Ok(qm_sync_rate(theta)? - cl_sync_rate(theta)?)
}

/// Relative speedup `Δ(θ) / R_cl(θ)` of the quantum synchronized rate.
pub fn relative_speedup(theta: Angle) -> Result<f64> {
    let cl = cl_sync_rate(theta)?;
    if cl == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(sync_excess(theta)? / cl)
}

/// Stationary points of `Δ`, where `sin θ = 2/π`: the quantum lag `θ₁` and
/// the quantum lead `θ₂ = π − θ₁`.
pub fn excess_extrema() -> (Angle, Angle) {
    let theta1 = (2.0 / PI).asin();
    (Angle(theta1), Angle(PI - theta1))
}

/// CHSH parameter of a correlation function over the four contexts of `quad`.
pub fn chsh_value<F>(correlation: F, quad: &SettingQuad) -> Result<f64>
where
    F: Fn(Angle) -> Result<f64>,
{
    let mut s = 0.0;
    for (theta, sign) in quad.relative_angles().into_iter().zip(CHSH_SIGNS) {
        s += sign * correlation(theta)?;
    }
    Ok(s.abs())
}

/// Coincidence rate per emitted pair seen through detectors of efficiency
/// `eta_a` and `eta_b`.
pub fn expected_measured_rate(theta: Angle, eta_a: f64, eta_b: f64) -> Result<f64> {
    check_range("eta_a", eta_a, 0.0, 1.0)?;
    check_range("eta_b", eta_b, 0.0, 1.0)?;
    Ok(eta_a * eta_b * qm_sync_rate(theta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    fn a(rad: f64) -> Angle {
        Angle::new(rad).unwrap()
    }

    #[test]
    fn correlations_at_reference_angles() {
        assert!((qm_correlation(a(0.0)).unwrap() + 1.0).abs() < TOL);
        assert!(qm_correlation(a(FRAC_PI_2)).unwrap().abs() < TOL);
        assert!((qm_correlation(a(PI / 3.0)).unwrap() + 0.5).abs() < TOL);

        assert!((cl_correlation(a(0.0)).unwrap() + 1.0).abs() < TOL);
        assert!(cl_correlation(a(FRAC_PI_2)).unwrap().abs() < TOL);
        assert!((cl_correlation(a(PI)).unwrap() - 1.0).abs() < TOL);
    }

    #[test]
    fn domain_errors() {
        assert!(Angle::new(f64::NAN).is_err());
        assert!(Angle::new(f64::INFINITY).is_err());
        assert!(cl_correlation(a(-0.1)).is_err());
        assert!(cl_correlation(a(PI + 1e-6)).is_err());
        assert!(cl_sync_rate(a(4.0)).is_err());
        assert!(sync_excess(a(-1.0)).is_err());
        assert!(joint_distribution(1.5).is_err());
        assert!(expected_measured_rate(a(PI), 1.1, 1.0).is_err());
        assert!(expected_measured_rate(a(PI), 1.0, -0.1).is_err());
    }

    #[test]
    fn sync_rates_at_reference_angles() {
        assert!((qm_sync_rate(a(FRAC_PI_2)).unwrap() - 0.25).abs() < TOL);
        assert!((qm_sync_rate(a(PI)).unwrap() - 0.5).abs() < TOL);
        assert!((qm_sync_rate(a(2.4515)).unwrap() - 0.443).abs() < 5e-4);

        assert!(cl_sync_rate(a(0.0)).unwrap().abs() < TOL);
        assert!((cl_sync_rate(a(PI)).unwrap() - 0.5).abs() < TOL);
        assert!((cl_sync_rate(a(2.4515)).unwrap() - 0.390).abs() < 5e-4);
    }

    #[test]
    fn joint_distribution_reference_points() {
        let d = joint_distribution(-1.0).unwrap();
        assert_eq!(d.as_array(), [0.0, 0.5, 0.5, 0.0]);
        let d = joint_distribution(0.0).unwrap();
        assert_eq!(d.as_array(), [0.25; 4]);
        let d = joint_distribution(1.0).unwrap();
        assert_eq!(d.as_array(), [0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn biased_distribution_keeps_normalization() {
        let d = joint_distribution_biased(0.2, 0.1).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert!((d.alice_plus() - 0.55).abs() < 1e-12);
        assert!(!d.is_unbiased());
        assert!(joint_distribution_biased(-1.0, 0.5).is_err());
    }

    #[test]
    fn excess_reference_points() {
        assert!(sync_excess(a(FRAC_PI_2)).unwrap().abs() < TOL);
        assert!((sync_excess(a(2.4515)).unwrap() - 0.053).abs() < 5e-4);
        assert!((sync_excess(a(0.69)).unwrap() + 0.053).abs() < 5e-4);
    }

    #[test]
    fn extrema_closed_form() {
        let (t1, t2) = excess_extrema();
        assert!((t1.radians() - 0.6901).abs() < 1e-4);
        assert!((t2.radians() - 2.4515).abs() < 1e-4);
        assert!((t1.radians().sin() - 2.0 / PI).abs() < 1e-12);
        assert!((t1.degrees() - 39.5).abs() < 0.05);
        assert!((t2.degrees() - 140.5).abs() < 0.05);
    }

    #[test]
    fn excess_extrema_are_global_on_grid() {
        let (t1, t2) = excess_extrema();
        let d1 = sync_excess(t1).unwrap();
        let d2 = sync_excess(t2).unwrap();
        assert!(d1 < 0.0 && d2 > 0.0);
        let n = 10_000;
        let max_abs = (0..=n)
            .map(|i| sync_excess(a(PI * i as f64 / n as f64)).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(d2.abs() >= max_abs - 1e-12);
    }

    #[test]
    fn relative_speedup_matches_headline() {
        let (_, t2) = excess_extrema();
        let r = relative_speedup(t2).unwrap();
        assert!((0.13..=0.14).contains(&r), "{r}");
        assert!(relative_speedup(a(0.0)).is_err());
    }

    #[test]
    fn cardinal_regimes_have_no_excess() {
        for t in [0.0, FRAC_PI_2, PI] {
            assert!(sync_excess(a(t)).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn rates_follow_from_correlations() {
        for i in 0..=1000 {
            let t = a(PI * i as f64 / 1000.0);
            let qm = (1.0 + qm_correlation(t).unwrap()) / 4.0;
            let cl = (1.0 + cl_correlation(t).unwrap()) / 4.0;
            assert!((qm_sync_rate(t).unwrap() - qm).abs() < 1e-15);
            assert!((cl_sync_rate(t).unwrap() - cl).abs() < 1e-15);
            assert!(joint_distribution(qm_correlation(t).unwrap()).unwrap().is_unbiased());
            assert!(joint_distribution(cl_correlation(t).unwrap()).unwrap().is_unbiased());
        }
    }

    #[test]
    fn relative_angle_folding() {
        let r = |x: f64, y: f64| Angle::relative(a(x), a(y)).radians();
        assert!((r(0.0, 3.0 * FRAC_PI_4) - 3.0 * FRAC_PI_4).abs() < 1e-12);
        assert!((r(3.0 * FRAC_PI_4, 0.0) - 3.0 * FRAC_PI_4).abs() < 1e-12);
        assert!((r(0.0, 1.5 * PI) - FRAC_PI_2).abs() < 1e-12);
        assert!((r(7.0 * PI, 0.0) - PI).abs() < 1e-12);
        assert!(r(-2.0 * PI, 0.0).abs() < 1e-12);
    }

    #[test]
    fn chsh_reference_quads() {
        let quad = SettingQuad::optimal();
        // Relative angles π/4, 3π/4, π/4, π/4:
        // qm: −cos(π/4) − cos(π/4) − cos(π/4) − cos(π/4) in magnitude → 4/√2.
        let qm = chsh_value(qm_correlation, &quad).unwrap();
        assert!((qm - 4.0 / 2f64.sqrt()).abs() < TOL);
        assert!((qm - TSIRELSON_BOUND).abs() < TOL);
        // cl: −½ − ½ − ½ − ½ → 2.
        let cl = chsh_value(cl_correlation, &quad).unwrap();
        assert!((cl - 2.0).abs() < TOL);

        let flat = SettingQuad::new(0.3, 0.3, 0.3, 0.3).unwrap();
        assert!((chsh_value(qm_correlation, &flat).unwrap() - 2.0).abs() < TOL);
        assert!((chsh_value(cl_correlation, &flat).unwrap() - 2.0).abs() < TOL);
    }

    #[test]
    fn measured_rate_scales_with_efficiency() {
        assert!((expected_measured_rate(a(PI), 1.0, 1.0).unwrap() - 0.5).abs() < TOL);
        assert!((expected_measured_rate(a(PI), 0.9, 0.9).unwrap() - 0.405).abs() < TOL);
        assert!((expected_measured_rate(a(FRAC_PI_2), 0.5, 1.0).unwrap() - 0.125).abs() < TOL);
    }

    #[test]
    fn chsh_bounds_over_random_quads() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC45A);
        for _ in 0..100_000 {
            let mut ang = || rng.random_range(-4.0 * PI..4.0 * PI);
            let quad = SettingQuad::new(ang(), ang(), ang(), ang()).unwrap();
            assert!(chsh_value(cl_correlation, &quad).unwrap() <= CLASSICAL_CHSH_BOUND + 1e-9);
            assert!(chsh_value(qm_correlation, &quad).unwrap() <= TSIRELSON_BOUND + 1e-9);
        }
    }

    #[test]
    fn angle_serde_rejects_non_finite() {
        let ok: Angle = serde_json::from_str("1.5").unwrap();
        assert_eq!(ok.radians(), 1.5);
        assert!(serde_json::from_str::<SettingQuad>(r#"{"a":0,"a_prime":1,"b":2,"b_prime":1e999}"#).is_err());
    }
}
