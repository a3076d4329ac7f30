// Synchronized tick rates at the three cardinal angles.
//
// At θ = 0, π/2 and π the singlet and the bomb-fragment model agree:
// R = 0, ¼ and ½. This samples both sources and prints the Monte Carlo
// rate next to the closed form.
//
// Run: cargo run -p entangled-clock --release --example cardinal_regimes

use std::f64::consts::{FRAC_PI_2, PI};

use entangled_clock::analytic::{self, Angle};
use entangled_clock::estimator::rate_curve;
use entangled_clock::harness::DEFAULT_MASTER_SEED;
use entangled_clock::models::{PeresBomb, Singlet};
use entangled_clock::timeline::DetectionConfig;

const TRIALS: u64 = 1_000_000;

fn main() -> entangled_clock::Result<()> {
    run()
}

pub fn run() -> entangled_clock::Result<()> {
    let grid = [0.0, FRAC_PI_2, PI];
    let cfg = DetectionConfig::ideal();
    let qm = rate_curve(&Singlet, &grid, TRIALS, &cfg, DEFAULT_MASTER_SEED)?;
    let cl = rate_curve(&PeresBomb, &grid, TRIALS, &cfg, DEFAULT_MASTER_SEED)?;

    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "theta", "R_qm mc", "R_qm", "R_cl mc", "R_cl");
    for ((q, c), &theta) in qm.iter().zip(&cl).zip(&grid) {
        let angle = Angle::new(theta)?;
        println!(
            "{:>8.4} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            theta,
            q.rate,
            analytic::qm_sync_rate(angle)?,
            c.rate,
            analytic::cl_sync_rate(angle)?,
        );
    }
    Ok(())
}
