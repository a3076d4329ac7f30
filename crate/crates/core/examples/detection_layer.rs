// Finite detector efficiency, timing jitter and the coincidence window.
//
// Run: cargo run -p entangled-clock --release --example detection_layer

use std::f64::consts::PI;

use entangled_clock::analytic::{self, Angle};
use entangled_clock::models::Singlet;
use entangled_clock::rng::{stream_rng, streams};
use entangled_clock::timeline::{
    emit_ticks, match_coincidences, simulate_fixed_angle, sync_rate_from_matches, DetectionConfig,
};

const PAIRS: u64 = 1_000_000;
const SEED: u64 = 0xD37E_C7;

fn main() -> entangled_clock::Result<()> {
    run()
}

pub fn run() -> entangled_clock::Result<()> {
    let theta = Angle::new(PI)?;
    for eta in [1.0, 0.9, 0.8, 0.5] {
        let cfg = DetectionConfig::with_efficiency(eta, eta);
        let records = simulate_fixed_angle(&Singlet, theta, PAIRS, &cfg, SEED, streams::PHYSICS)?;
        let (a, b) = emit_ticks(&records, &cfg, &mut stream_rng(SEED, streams::JITTER, 0))?;
        let matched = match_coincidences(&a, &b, cfg.coincidence_window_ns)?;
        println!(
            "η = {eta:.1}: {} + {} ticks, {} coincidences, rate {:.4} (η²·R_qm = {:.4})",
            a.len(),
            b.len(),
            matched.len(),
            sync_rate_from_matches(&matched, PAIRS)?,
            analytic::expected_measured_rate(theta, eta, eta)?
        );
    }

    let cfg = DetectionConfig {
        jitter_sigma_ns: 2.0,
        ..DetectionConfig::default()
    };
    let records = simulate_fixed_angle(&Singlet, theta, 100_000, &cfg, SEED, streams::PHYSICS)?;
    let truth = records.iter().filter(|r| r.both_tick()).count();
    let (a, b) = emit_ticks(&records, &cfg, &mut stream_rng(SEED, streams::JITTER, 1))?;
    for window in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let matched = match_coincidences(&a, &b, window)?;
        println!(
            "jitter 2 ns, window {window:>4} ns: recovered {:.4} of true coincidences",
            matched.len() as f64 / truth as f64
        );
    }
    Ok(())
}
