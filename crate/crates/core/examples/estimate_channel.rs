//! Estimates one channel with every estimator at 20 dB.

use afdm_sbl::harness::config::ExperimentConfig;
use afdm_sbl::harness::experiment::{draw_trial, estimate, Setup};
use afdm_sbl::harness::link::noise_var_for_snr;

fn main() -> afdm_sbl::Result<()> {
    let cfg = ExperimentConfig {
        estimators: [
            "sbl",
            "og-sbl",
            "ge-sbl",
            "gr-sbl:0.1",
            "gr-sbl:0.01",
            "d-ge-sbl:4",
            "genie",
        ]
        .map(String::from)
        .to_vec(),
        ..ExperimentConfig::default()
    };
    let setup = Setup::new(&cfg)?;
    let trial = draw_trial(&cfg, &setup, 2024, noise_var_for_snr(20.0))?;
    for p in &trial.channel.paths {
        println!(
            "true   delay {} doppler {:+.4} gain {:.3}",
            p.delay,
            p.doppler(),
            p.gain
        );
    }
    for spec in &setup.specs {
        let o = estimate(spec, &setup, &trial)?;
        let e = &o.run.estimate;
        println!(
            "{:<12} NMSE {:7.2} dB  paths {:2}  iterations {:3}{}",
            spec.to_string(),
            o.nmse_db,
            e.n_paths,
            o.run.iterations,
            if o.run.converged { "" } else { " (budget)" }
        );
    }
    Ok(())
}
