use std::f64::consts::PI;

use entangled_clock::analytic::{self, Angle, SettingQuad, CLASSICAL_CHSH_BOUND, TSIRELSON_BOUND};
use entangled_clock::estimator::hoeffding_radius;
use entangled_clock::timeline::{match_coincidences, Party, TickEvent};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -20.0..20.0f64
}

fn ticks(party: Party) -> impl Strategy<Value = Vec<TickEvent>> {
    prop::collection::vec(0.0..1_000.0f64, 0..60).prop_map(move |mut ts| {
        ts.sort_by(f64::total_cmp);
        ts.into_iter()
            .enumerate()
            .map(|(i, t)| TickEvent {
                trial_index: i as u64,
                timestamp_ns: t,
                party,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn relative_angle_is_folded_and_symmetric(a in angle(), b in angle()) {
        let (a, b) = (Angle::new(a).unwrap(), Angle::new(b).unwrap());
        let ab = Angle::relative(a, b).radians();
        prop_assert!((0.0..=PI).contains(&ab));
        prop_assert!((ab - Angle::relative(b, a).radians()).abs() < 1e-12);
    }

    #[test]
    fn joint_distribution_is_a_distribution(theta in 0.0..=PI) {
        let theta = Angle::new(theta).unwrap();
        for e in [analytic::qm_correlation(theta).unwrap(), analytic::cl_correlation(theta).unwrap()] {
            let p = analytic::joint_distribution(e).unwrap();
            let probs = [p.p_pp, p.p_pm, p.p_mp, p.p_mm];
            let total: f64 = probs.iter().sum();
            prop_assert!(probs.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(p.is_unbiased());
        }
    }

    #[test]
    fn chsh_respects_bounds(a in angle(), a2 in angle(), b in angle(), b2 in angle()) {
        let quad = SettingQuad::new(a, a2, b, b2).unwrap();
        let qm = analytic::chsh_value(analytic::qm_correlation, &quad).unwrap();
        let cl = analytic::chsh_value(analytic::cl_correlation, &quad).unwrap();
        prop_assert!(qm <= TSIRELSON_BOUND + 1e-12);
        prop_assert!(cl <= CLASSICAL_CHSH_BOUND + 1e-12);
    }

    #[test]
    fn hoeffding_radius_shrinks_with_data(n in 1u64..1_000_000, c in 0.5..0.9999f64) {
        let small = hoeffding_radius([n; 4], c);
        let large = hoeffding_radius([n * 4; 4], c);
        prop_assert!((small / large - 2.0).abs() < 1e-9);
        prop_assert!(hoeffding_radius([n; 4], (c + 1.0) / 2.0) > small);
    }

    #[test]
    fn coincidence_matching_is_one_to_one(
        a in ticks(Party::A),
        b in ticks(Party::B),
        window in 0.0..20.0f64,
    ) {
        let matched = match_coincidences(&a, &b, window).unwrap();
        prop_assert!(matched.len() <= a.len().min(b.len()));
        prop_assert!(matched.iter().all(|(x, y)| (x.timestamp_ns - y.timestamp_ns).abs() <= window));
        prop_assert!(matched.windows(2).all(|w| w[0].0.trial_index < w[1].0.trial_index
            && w[0].1.trial_index < w[1].1.trial_index));
        // Swapping the roles of the streams finds the same number of pairs.
        prop_assert_eq!(match_coincidences(&b, &a, window).unwrap().len(), matched.len());
    }
}
