//! DAFT/IDAFT round trip and the chirp-periodic prefix on a random frame.

use afdm_sbl::modem::{add_cpp, daft, idaft, remove_cpp, AfdmConfig, DEFAULT_C2};
use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> afdm_sbl::Result<()> {
    let cfg = AfdmConfig::new(256, 15e3, 4e9, 3, 7, 1, DEFAULT_C2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<c64> = (0..cfg.n())
        .map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let s = idaft(&x, &cfg)?;
    let back = daft(&remove_cpp(&add_cpp(&s, &cfg)?, &cfg)?, &cfg)?;
    let err: f64 = x
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let ex: f64 = x.iter().map(|a| a.norm_sqr()).sum();
    let es: f64 = s.iter().map(|a| a.norm_sqr()).sum();
    println!("N = {}, c1 = {:.6}, c2 = {:.6}", cfg.n(), cfg.c1, cfg.c2);
    println!("round-trip error  {err:.3e}");
    println!("energy ratio      {:.15}", es / ex);
    Ok(())
}
