// The certification protocol: random settings from a private seed, a
// Hoeffding lower bound on S, and a verdict. Only the singlet certifies.
//
// Run: cargo run -p entangled-clock --release --example certified_private_time

use entangled_clock::harness::{persist_record, run_experiment, ExperimentConfig, SourceSpec, DEFAULT_MASTER_SEED};

fn main() -> entangled_clock::Result<()> {
    run()
}

pub fn run() -> entangled_clock::Result<()> {
    let sources = [
        SourceSpec::Quantum,
        SourceSpec::Bomb,
        SourceSpec::mimic_at_lead_angle(),
        SourceSpec::schedule_blind_playback(DEFAULT_MASTER_SEED),
    ];
    for source in sources {
        let config = ExperimentConfig::with_source(source);
        let record = run_experiment(&config)?;
        let v = record.verdict;
        println!(
            "{:>9}: S = {:.4}, radius = {:.4} at {:.0}%, margin = {:+.4} -> {}",
            config.source.name(),
            v.s_hat,
            v.confidence_radius,
            100.0 * v.confidence_level,
            v.margin,
            if v.certified { "certified" } else { "not certified" }
        );
    }

    // A persisted record holds the config, results and trial data.
    let dir = std::env::temp_dir().join("entangled-clock-example");
    std::fs::create_dir_all(&dir).map_err(|source| entangled_clock::Error::Io { path: dir.clone(), source })?;
    let record = run_experiment(&ExperimentConfig {
        n_trials: 50_000,
        ..ExperimentConfig::default()
    })?;
    let path = dir.join("quantum_run.json");
    persist_record(&record, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
