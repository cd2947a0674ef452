//! Doubly-dispersive channel: random realizations, time-domain application,
//! and the exact DAF-domain equivalent matrix.

use faer::prelude::*;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::{dirichlet, KernelTable};
use crate::modem::{cis, AfdmConfig};

/// A single propagation path with an integer delay tap and a Doppler shift
/// split into integer part `k` and fractional part `beta` in `(-1/2, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PathRecord", into = "PathRecord")]
pub struct ChannelPath {
    pub gain: c64,
    pub delay: usize,
    pub doppler_int: i64,
    pub doppler_frac: f64,
}

impl ChannelPath {
    /// Builds a path, splitting `doppler` so that the fractional part lies in
    /// `(-1/2, 1/2]`.
    pub fn new(gain: c64, delay: usize, doppler: f64) -> Self {
        let k = (doppler - 0.5).ceil();
        Self {
            gain,
            delay,
            doppler_int: k as i64,
            doppler_frac: doppler - k,
        }
    }

    /// Total normalized Doppler `k + beta`.
    pub fn doppler(&self) -> f64 {
        self.doppler_int as f64 + self.doppler_frac
    }

    pub fn tap(&self) -> Tap {
        Tap {
            gain: self.gain,
            delay: self.delay as f64,
            doppler: self.doppler(),
        }
    }
}

/// Flat text form of a path: gain as separate real and imaginary parts.
#[derive(Serialize, Deserialize)]
struct PathRecord {
    gain_re: f64,
    gain_im: f64,
    delay: usize,
    doppler: f64,
}

impl From<PathRecord> for ChannelPath {
    fn from(r: PathRecord) -> Self {
        ChannelPath::new(c64::new(r.gain_re, r.gain_im), r.delay, r.doppler)
    }
}

impl From<ChannelPath> for PathRecord {
    fn from(p: ChannelPath) -> Self {
        PathRecord {
            gain_re: p.gain.re,
            gain_im: p.gain.im,
            delay: p.delay,
            doppler: p.doppler(),
        }
    }
}

/// Path parameters in the continuous form shared by true channels and
/// estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub gain: c64,
    pub delay: f64,
    pub doppler: f64,
}

/// One channel draw. Delays are distinct across paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub rng_seed: u64,
    pub paths: Vec<ChannelPath>,
}

impl ChannelRealization {
    pub fn taps(&self) -> Vec<Tap> {
        self.paths.iter().map(ChannelPath::tap).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Draws `p` paths with distinct delays from `0..=l_max`, Jakes Doppler
/// `k_max cos(theta)` and `CN(0, 1/p)` gains.
pub fn sample_channel(p: usize, l_max: usize, k_max: f64, seed: u64) -> Result<ChannelRealization> {
    if p == 0 || p > l_max + 1 {
        return Err(Error::InvalidConfig(format!(
            "path count {p} must be in 1..={}",
            l_max + 1
        )));
    }
    if !(k_max >= 0.0) {
        return Err(Error::InvalidConfig("k_max must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut delays = sample_indices(&mut rng, l_max + 1, p).into_vec();
    delays.sort_unstable();
    let sd = (0.5 / p as f64).sqrt();
    let paths = delays
        .into_iter()
        .map(|delay| {
            let theta = rng.random_range(-PI..PI);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            ChannelPath::new(c64::new(re * sd, im * sd), delay, k_max * theta.cos())
        })
        .collect();
    Ok(ChannelRealization {
        rng_seed: seed,
        paths,
    })
}

/// Draws `n` samples of `CN(0, var)`.
pub fn complex_noise(rng: &mut impl Rng, n: usize, var: f64) -> Vec<c64> {
    let sd = (0.5 * var).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c64::new(re * sd, im * sd)
        })
        .collect()
}

/// Passes a prefixed block (`N + L_cpp` samples, prefix first) through the
/// channel and adds `CN(0, noise_var)` noise.
///
/// Output sample `i` corresponds to time `n = i - L_cpp` and equals
/// `sum_p h_p s[n - l_p] exp(-j 2 pi (k_p + beta_p) n / N)`; samples before the
/// block start are zero. Removing the prefix leaves the `N` samples the DAF
/// demodulator consumes.
pub fn apply_channel_time(
    s: &[c64],
    ch: &ChannelRealization,
    cfg: &AfdmConfig,
    noise_var: f64,
    rng: &mut impl Rng,
) -> Result<Vec<c64>> {
    let n = cfg.n();
    let l = cfg.cpp_len;
    if s.len() != n + l {
        return Err(Error::LengthMismatch {
            expected: n + l,
            actual: s.len(),
        });
    }
    if let Some(p) = ch.paths.iter().find(|p| p.delay > l) {
        return Err(Error::InvalidConfig(format!(
            "path delay {} exceeds prefix length {l}",
            p.delay
        )));
    }
    let mut r = vec![c64::new(0.0, 0.0); n + l];
    for p in &ch.paths {
        let nu = p.doppler() / n as f64;
        for (i, out) in r.iter_mut().enumerate().skip(p.delay) {
            let t = i as f64 - l as f64;
            *out += p.gain * s[i - p.delay] * cis(-nu * t);
        }
    }
    if noise_var > 0.0 {
        for (v, w) in r.iter_mut().zip(complex_noise(rng, n + l, noise_var)) {
            *v += w;
        }
    }
    Ok(r)
}

/// Dense DAF-domain equivalent channel matrix for a set of taps:
/// `H[mt, m] = (1/N) sum_p h_p exp(j 2 pi (c1 l^2 - m l / N + c2 (m^2 - mt^2)))
/// F(mt - m + 2 N c1 l + nu)`.
pub fn equiv_matrix(taps: &[Tap], cfg: &AfdmConfig) -> Mat<c64> {
    let n = cfg.n();
    let nf = n as f64;
    let table = KernelTable::new(n);
    let chirp2: Vec<c64> = (0..n).map(|m| cis(cfg.c2 * (m * m) as f64)).collect();
    let mut h = Mat::<c64>::zeros(n, n);
    let mut kern = vec![c64::new(0.0, 0.0); 2 * n - 1];
    for tap in taps {
        let t = cfg.delay_shift() * tap.delay + tap.doppler;
        // kern[d + N - 1] = F(d + t) for d = mt - m in (-N, N).
        table.fill(t, 1 - n as i64, &mut kern, None);
        let lead = tap.gain * cis(cfg.c1 * tap.delay * tap.delay) / nf;
        for m in 0..n {
            let col = lead * cis(-(m as f64) * tap.delay / nf) * chirp2[m];
            let mut dst = h.col_mut(m);
            for mt in 0..n {
                dst[mt] += col * chirp2[mt].conj() * kern[mt + n - 1 - m];
            }
        }
    }
    h
}

/// [`equiv_matrix`] for a channel realization.
pub fn build_equiv_matrix(ch: &ChannelRealization, cfg: &AfdmConfig) -> Mat<c64> {
    equiv_matrix(&ch.taps(), cfg)
}

/// Frobenius inner product `<H_a, H_b>` of the single-tap equivalent
/// matrices, in closed form. The chirp-2 phases cancel and the sums over rows
/// and columns collapse to one kernel value each.
pub fn tap_inner(a: &Tap, b: &Tap, cfg: &AfdmConfig) -> c64 {
    let n = cfg.n();
    let ta = cfg.delay_shift() * a.delay + a.doppler;
    let tb = cfg.delay_shift() * b.delay + b.doppler;
    let phase = cis(cfg.c1 * (b.delay * b.delay - a.delay * a.delay));
    a.gain.conj() * b.gain * phase * dirichlet(b.delay - a.delay, n) * dirichlet(tb - ta, n)
        / n as f64
}

/// `||H(a) - H(b)||_F^2` for two tap sets, without forming either matrix.
pub fn tap_distance_sq(a: &[Tap], b: &[Tap], cfg: &AfdmConfig) -> f64 {
    let neg: Vec<Tap> = b
        .iter()
        .map(|t| Tap {
            gain: -t.gain,
            ..*t
        })
        .collect();
    let all: Vec<&Tap> = a.iter().chain(neg.iter()).collect();
    let mut acc = 0.0;
    for (i, x) in all.iter().enumerate() {
        acc += tap_inner(x, x, cfg).re;
        for y in &all[i + 1..] {
            acc += 2.0 * tap_inner(x, y, cfg).re;
        }
    }
    acc.max(0.0)
}
