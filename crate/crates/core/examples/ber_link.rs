//! Uncoded QPSK BER with an MMSE equalizer: estimated against true channel.
//!
//! Usage: `ber_link [snr_db] [data_symbols]`

use afdm_sbl::harness::ber::simulate_ber;
use afdm_sbl::harness::config::ExperimentConfig;
use afdm_sbl::harness::estimator::EstimatorSpec;

fn main() -> afdm_sbl::Result<()> {
    let mut args = std::env::args().skip(1);
    let snr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let symbols: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let cfg = ExperimentConfig::default();
    let r = simulate_ber(&cfg, &EstimatorSpec::GridEvolve, snr, symbols)?;
    println!("{} frames, {} bits at {snr} dB", r.frames, r.bits);
    println!("BER with estimated channel  {:.3e}", r.ber_estimated());
    println!("BER with true channel       {:.3e}", r.ber_perfect());
    Ok(())
}
