//! Compares the time-domain link with the DAF-domain equivalent matrix and
//! the pilot window with the dictionary prediction.

use afdm_sbl::channel::{build_equiv_matrix, sample_channel};
use afdm_sbl::dictionary::{Dictionary, MeasurementModel, VirtualGrid};
use afdm_sbl::harness::link::transmit;
use afdm_sbl::linalg::matvec;
use afdm_sbl::modem::{AfdmConfig, DEFAULT_C2};
use faer::c64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel(a: &[c64], b: &[c64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let n: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    (d / n).sqrt()
}

fn main() -> afdm_sbl::Result<()> {
    let cfg = AfdmConfig::new(256, 15e3, 4e9, 3, 7, 1, DEFAULT_C2)?;
    let ch = sample_channel(4, 7, 3.0, 11)?;
    for p in &ch.paths {
        println!(
            "path: delay {} doppler {:+.3} |h| {:.3}",
            p.delay,
            p.doppler(),
            p.gain.norm()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tx = transmit(&cfg, &ch, 5, 30.0, 0.0, &mut rng)?;
    let hx = matvec(build_equiv_matrix(&ch, &cfg).as_ref(), &tx.x);
    println!("link vs H x        {:.3e}", rel(&hx, &tx.y));

    // Pilot window against Phi(S_true) h_true; data leakage through the
    // fractional-Doppler kernel tails is what remains.
    let taps = ch.taps();
    let truth = VirtualGrid::from_points(taps.iter().map(|t| (t.delay, t.doppler)).collect(), 1.0);
    let model = MeasurementModel::new(Dictionary::new(&cfg, &tx.layout)?, truth);
    let gains: Vec<c64> = taps.iter().map(|t| t.gain).collect();
    let pred = matvec(model.phi.as_ref(), &gains);
    println!("window vs Phi h    {:.3e}", rel(&pred, &tx.obs.y_t));
    Ok(())
}
