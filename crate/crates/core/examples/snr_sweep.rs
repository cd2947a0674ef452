//! Small NMSE-versus-SNR sweep written to CSV.
//!
//! Usage: `snr_sweep [trials] [out.csv]`

use afdm_sbl::harness::config::ExperimentConfig;
use afdm_sbl::harness::experiment::run_experiment;
use afdm_sbl::harness::metrics::{emit_csv, summarize};

fn main() -> afdm_sbl::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let out = args.next().unwrap_or_else(|| "snr_sweep.csv".into());
    let cfg = ExperimentConfig {
        snr_db_list: vec![0.0, 10.0, 20.0, 30.0],
        n_trials: trials,
        ..ExperimentConfig::default()
    };
    let records = run_experiment(&cfg, false)?;
    emit_csv(&records, out.as_ref())?;
    for r in summarize(&records) {
        println!(
            "{:<12} {:5.1} dB  median NMSE {:7.2} dB",
            r.estimator, r.snr_db, r.median_nmse_db
        );
    }
    Ok(())
}
