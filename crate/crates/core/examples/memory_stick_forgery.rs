// Playback attacks on the clock.
//
// A tape recorded without knowing the settings carries no information
// about them and cannot violate CHSH. A tape forged with the schedule in
// hand passes; replayed against a fresh schedule it collapses.
//
// Run: cargo run -p entangled-clock --release --example memory_stick_forgery

use entangled_clock::harness::{
    build_schedule, forge_tapes, load_tape, mutual_information, run_forgery_demo, ExperimentConfig, TapeSpec,
};
use entangled_clock::models::PlaybackTape;
use entangled_clock::rng::{stream_rng, streams};

fn main() -> entangled_clock::Result<()> {
    run()
}

pub fn run() -> entangled_clock::Result<()> {
    let config = ExperimentConfig::default();
    let schedule = build_schedule(config.settings_seed, config.n_trials);

    let blind = load_tape(
        &TapeSpec::Recorded {
            theta: 2.4515,
            seed: 1,
        },
        config.n_trials,
    )?;
    let forged = forge_tapes(&schedule, &config.quad, &mut stream_rng(config.master_seed, streams::FORGERY, 0));
    println!(
        "mutual information with the schedule: blind tape {:.2e} bits, forged tape {:.3} bits",
        mutual_information(&schedule, &blind),
        mutual_information(&schedule, &forged)
    );

    // Tapes travel as CSV.
    let mut csv = Vec::new();
    forged.write_csv(&mut csv)?;
    let reloaded = PlaybackTape::read_csv(&csv[..])?;
    println!("tape file: {} bytes, {} entries", csv.len(), reloaded.len());

    let demo = run_forgery_demo(&config)?;
    for (label, record) in [("known schedule", &demo.known_schedule), ("fresh schedule", &demo.fresh_schedule)] {
        println!(
            "{label}: S = {:.4}, certified = {}",
            record.chsh.s_hat, record.verdict.certified
        );
    }
    Ok(())
}
