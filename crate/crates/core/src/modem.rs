//! AFDM waveform: chirp-parameter selection, the discrete affine Fourier
//! transform pair, the chirp-periodic prefix, QPSK mapping and a plain MMSE
//! equalizer.
//!
//! The transforms are explicit `O(N^2)` products against precomputed chirp and
//! twiddle tables. At the frame sizes used here (`N <= 1024`) this is fast
//! enough and keeps every phase term visible.

use faer::prelude::*;
use faer::Side;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Default second chirp parameter: the golden-ratio fraction (irrational).
pub const DEFAULT_C2: f64 = 0.618_033_988_7;

/// `exp(j 2 pi cycles)`, with the integer part of `cycles` removed first so
/// large arguments keep full precision.
#[inline]
pub fn cis(cycles: f64) -> c64 {
    let frac = cycles - cycles.round();
    let (s, c) = (2.0 * PI * frac).sin_cos();
    c64::new(c, s)
}

/// AFDM waveform parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfdmConfig {
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub carrier_hz: f64,
    pub c1: f64,
    pub c2: f64,
    pub n_guard_doppler: usize,
    pub cpp_len: usize,
    pub k_max: usize,
    pub l_max: usize,
}

impl AfdmConfig {
    /// Builds a configuration with the diversity-optimal first chirp rate
    /// `c1 = (2 k_max + 2 N_v + 1) / (2N)` and a CPP as long as the maximum
    /// delay.
    pub fn new(
        n: usize,
        subcarrier_spacing_hz: f64,
        carrier_hz: f64,
        k_max: usize,
        l_max: usize,
        n_guard_doppler: usize,
        c2: f64,
    ) -> Result<Self> {
        let spread = 2 * k_max + 2 * n_guard_doppler + 1;
        if n <= spread * (l_max + 1) {
            return Err(Error::InvalidConfig(format!(
                "N = {n} must exceed (2k_max + 2N_v + 1)(l_max + 1) = {}",
                spread * (l_max + 1)
            )));
        }
        if !c2.is_finite() {
            return Err(Error::InvalidConfig("c2 must be finite".into()));
        }
        if !(subcarrier_spacing_hz > 0.0) || !(carrier_hz > 0.0) {
            return Err(Error::InvalidConfig(
                "subcarrier spacing and carrier must be positive".into(),
            ));
        }
        Ok(Self {
            n_subcarriers: n,
            subcarrier_spacing_hz,
            carrier_hz,
            c1: spread as f64 / (2 * n) as f64,
            c2,
            n_guard_doppler,
            cpp_len: l_max,
            k_max,
            l_max,
        })
    }

    /// Number of chirp subcarriers `N`.
    pub fn n(&self) -> usize {
        self.n_subcarriers
    }

    /// Doppler spread width in DAF bins, `2 k_max + 2 N_v + 1`.
    pub fn doppler_span(&self) -> usize {
        2 * self.k_max + 2 * self.n_guard_doppler + 1
    }

    /// `2 N c1`, the DAF-domain index shift caused by one sample of delay.
    pub fn delay_shift(&self) -> f64 {
        2.0 * self.n_subcarriers as f64 * self.c1
    }
}

/// Chirp and twiddle tables shared by both transform directions.
struct DaftTables {
    chirp1: Vec<c64>,
    chirp2: Vec<c64>,
    twiddle: Vec<c64>,
}

impl DaftTables {
    fn new(cfg: &AfdmConfig) -> Self {
        let n = cfg.n();
        let sq = |i: usize| (i * i) as f64;
        Self {
            chirp1: (0..n).map(|i| cis(cfg.c1 * sq(i))).collect(),
            chirp2: (0..n).map(|i| cis(cfg.c2 * sq(i))).collect(),
            twiddle: (0..n).map(|k| cis(k as f64 / n as f64)).collect(),
        }
    }
}

fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Inverse DAF transform: DAF-domain symbols to time-domain samples.
pub fn idaft(x: &[c64], cfg: &AfdmConfig) -> Result<Vec<c64>> {
    let n = cfg.n();
    check_len(x.len(), n)?;
    let t = DaftTables::new(cfg);
    let scale = 1.0 / (n as f64).sqrt();
    let pre: Vec<c64> = x.iter().zip(&t.chirp2).map(|(a, b)| a * b).collect();
    Ok((0..n)
        .map(|i| {
            let mut acc = c64::new(0.0, 0.0);
            for (m, v) in pre.iter().enumerate() {
                acc += v * t.twiddle[(i * m) % n];
            }
            acc * t.chirp1[i] * scale
        })
        .collect())
}

/// Forward DAF transform: time-domain samples to DAF-domain symbols.
pub fn daft(r: &[c64], cfg: &AfdmConfig) -> Result<Vec<c64>> {
    let n = cfg.n();
    check_len(r.len(), n)?;
    let t = DaftTables::new(cfg);
    let scale = 1.0 / (n as f64).sqrt();
    let pre: Vec<c64> = r.iter().zip(&t.chirp1).map(|(a, b)| a * b.conj()).collect();
    Ok((0..n)
        .map(|m| {
            let mut acc = c64::new(0.0, 0.0);
            for (i, v) in pre.iter().enumerate() {
                acc += v * t.twiddle[(i * m) % n].conj();
            }
            acc * t.chirp2[m].conj() * scale
        })
        .collect())
}

/// Prepends the chirp-periodic prefix
/// `s[n] = s[N + n] exp(-j 2 pi c1 (N^2 + 2 N n))` for `n = -L_cpp..-1`.
pub fn add_cpp(s: &[c64], cfg: &AfdmConfig) -> Result<Vec<c64>> {
    let n = cfg.n();
    check_len(s.len(), n)?;
    let l = cfg.cpp_len;
    if l > n {
        return Err(Error::InvalidConfig(format!(
            "CPP length {l} exceeds frame length {n}"
        )));
    }
    let nf = n as f64;
    let mut out = Vec::with_capacity(n + l);
    for i in 0..l {
        let k = i as f64 - l as f64;
        let phase = cis(-cfg.c1 * (nf * nf + 2.0 * nf * k));
        out.push(s[n - l + i] * phase);
    }
    out.extend_from_slice(s);
    Ok(out)
}

/// Drops the prefix samples from a received block.
pub fn remove_cpp(r: &[c64], cfg: &AfdmConfig) -> Result<Vec<c64>> {
    check_len(r.len(), cfg.n() + cfg.cpp_len)?;
    Ok(r[cfg.cpp_len..].to_vec())
}

/// Gray-mapped unit-power QPSK: bit pair `(b0, b1)` maps to
/// `((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn qpsk_map(bits: &[bool]) -> Vec<c64> {
    bits.chunks_exact(2)
        .map(|b| {
            let re = if b[0] { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
            let im = if b[1] { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
            c64::new(re, im)
        })
        .collect()
}

/// Hard QPSK decisions back to bits.
pub fn qpsk_demap(symbols: &[c64]) -> Vec<bool> {
    symbols
        .iter()
        .flat_map(|s| [s.re < 0.0, s.im < 0.0])
        .collect()
}

/// Linear MMSE equalizer `x = H^H (H H^H + noise_var I)^{-1} y` for
/// unit-power symbols on the columns of `h`. `h` may be tall: passing only the
/// data columns equalizes the data with pilots already removed from `y`.
pub fn mmse_equalize(y: &[c64], h: MatRef<'_, c64>, noise_var: f64) -> Result<Vec<c64>> {
    let n = h.nrows();
    check_len(y.len(), n)?;
    if !(noise_var > 0.0) {
        return Err(Error::InvalidConfig(
            "noise variance must be positive".into(),
        ));
    }
    let mut gram = h * h.adjoint();
    for i in 0..n {
        gram[(i, i)] += c64::new(noise_var, 0.0);
    }
    let llt = gram
        .llt(Side::Lower)
        .map_err(|_| Error::Singular("MMSE system"))?;
    let rhs = Col::<c64>::from_fn(n, |i| y[i]);
    let z = llt.solve(&rhs);
    let x = h.adjoint() * &z;
    Ok(x.iter().copied().collect())
}
