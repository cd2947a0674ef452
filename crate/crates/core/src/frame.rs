//! Embedded-pilot frame layout and the truncated pilot observation window.
//!
//! Layout (DAF indices): `[0, Q)` guard, `[Q, Q + |M_p|)` pilots,
//! `[Q + |M_p|, 2Q + |M_p|)` guard, data in the rest. Keeping the whole
//! pilot-plus-guard block inside the frame means the observation window never
//! wraps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use faer::c64;

use crate::error::{Error, Result};
use crate::modem::{qpsk_map, AfdmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub pilot_indices: Vec<usize>,
    pub guard_half_width: usize,
    pub data_indices: Vec<usize>,
    pub pilot_boost_db: f64,
    #[serde(with = "complex_vec")]
    pub pilot_symbols: Vec<c64>,
}

impl FrameLayout {
    /// `Q = (l_max + 1)(2 k_max + 2 N_v + 1) - 1`.
    pub fn guard_width(cfg: &AfdmConfig) -> usize {
        (cfg.l_max + 1) * cfg.doppler_span() - 1
    }

    /// Builds the index sets for `n_pilots` pilots with the given symbols.
    pub fn new(cfg: &AfdmConfig, pilot_symbols: Vec<c64>, pilot_boost_db: f64) -> Result<Self> {
        let n = cfg.n();
        let q = Self::guard_width(cfg);
        let n_pilots = pilot_symbols.len();
        if n_pilots == 0 || n_pilots + 2 * q >= n {
            return Err(Error::FrameOverflow {
                pilots: n_pilots,
                guard: q,
                n,
            });
        }
        Ok(Self {
            pilot_indices: (q..q + n_pilots).collect(),
            guard_half_width: q,
            data_indices: (2 * q + n_pilots..n).collect(),
            pilot_boost_db,
            pilot_symbols,
        })
    }

    /// First DAF index of the observation window,
    /// `min(M_p) - Q + k_max + N_v`.
    pub fn window_start(&self, cfg: &AfdmConfig) -> i64 {
        self.pilot_indices[0] as i64 - self.guard_half_width as i64
            + (cfg.k_max + cfg.n_guard_doppler) as i64
    }

    /// Window length `M_T = |M_p| + Q`.
    pub fn window_len(&self) -> usize {
        self.pilot_indices.len() + self.guard_half_width
    }

    /// Frame vector with pilots and data placed and guards zeroed.
    pub fn assemble(&self, n: usize, data: &[c64]) -> Result<Vec<c64>> {
        if data.len() != self.data_indices.len() {
            return Err(Error::LengthMismatch {
                expected: self.data_indices.len(),
                actual: data.len(),
            });
        }
        let mut x = vec![c64::new(0.0, 0.0); n];
        for (&i, &p) in self.pilot_indices.iter().zip(&self.pilot_symbols) {
            x[i] = p;
        }
        for (&i, &d) in self.data_indices.iter().zip(data) {
            x[i] = d;
        }
        Ok(x)
    }
}

/// Truncated received pilot signal.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub y_t: Vec<c64>,
    pub window_start: i64,
    pub m_t: usize,
}

/// Pilot symbols with unit-modulus random QPSK phases, each scaled to
/// `10^(boost/10)` times the unit data-symbol power.
pub fn pilot_symbols(n_pilots: usize, pilot_boost_db: f64, rng: &mut impl Rng) -> Vec<c64> {
    let amp = 10f64.powf(pilot_boost_db / 20.0);
    (0..n_pilots)
        .map(|_| {
            let q = rng.random_range(0..4u8);
            let re = if q & 1 == 0 { 1.0 } else { -1.0 };
            let im = if q & 2 == 0 { 1.0 } else { -1.0 };
            c64::new(re, im) * (amp * std::f64::consts::FRAC_1_SQRT_2)
        })
        .collect()
}

/// Builds a frame: random-phase pilots, zero guards, QPSK data from
/// `data_bits` (two bits per data symbol).
pub fn build_frame(
    cfg: &AfdmConfig,
    n_pilots: usize,
    pilot_boost_db: f64,
    data_bits: &[bool],
    rng: &mut impl Rng,
) -> Result<(Vec<c64>, FrameLayout)> {
    let layout = FrameLayout::new(
        cfg,
        pilot_symbols(n_pilots, pilot_boost_db, rng),
        pilot_boost_db,
    )?;
    if data_bits.len() != 2 * layout.data_indices.len() {
        return Err(Error::LengthMismatch {
            expected: 2 * layout.data_indices.len(),
            actual: data_bits.len(),
        });
    }
    let x = layout.assemble(cfg.n(), &qpsk_map(data_bits))?;
    Ok((x, layout))
}

/// Copies the `M_T` DAF samples of the pilot window.
pub fn extract_window(
    y: &[c64],
    layout: &FrameLayout,
    cfg: &AfdmConfig,
) -> Result<PilotObservation> {
    let n = cfg.n();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    let start = layout.window_start(cfg);
    let m_t = layout.window_len();
    let end = start + m_t as i64;
    if start < 0 || end > n as i64 {
        return Err(Error::WindowOutOfRange { start, end, n });
    }
    Ok(PilotObservation {
        y_t: y[start as usize..end as usize].to_vec(),
        window_start: start,
        m_t,
    })
}

mod complex_vec {
    use faer::c64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[c64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|z| [z.re, z.im])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<c64>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[re, im]| c64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::DEFAULT_C2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> AfdmConfig {
        AfdmConfig::new(256, 15e3, 4e9, 3, 7, 1, DEFAULT_C2).unwrap()
    }

    #[test]
    fn default_layout_dimensions() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bits = vec![false; 2 * 109];
        let (x, layout) = build_frame(&c, 5, 30.0, &bits, &mut rng).unwrap();
        assert_eq!(layout.guard_half_width, 71);
        assert_eq!(layout.pilot_indices, vec![71, 72, 73, 74, 75]);
        assert_eq!(layout.data_indices.len(), 109);
        assert_eq!(layout.window_len(), 76);
        assert_eq!(layout.window_start(&c), 4);
        assert!(x[..71].iter().all(|v| *v == c64::new(0.0, 0.0)));
        assert!(x[76..147].iter().all(|v| *v == c64::new(0.0, 0.0)));
        for &i in &layout.pilot_indices {
            assert!((x[i].norm_sqr() - 1000.0).abs() < 1e-9);
        }
        let pilot_power: f64 = layout.pilot_symbols.iter().map(|p| p.norm_sqr()).sum();
        assert!((pilot_power - 1000.0 * 5.0).abs() < 1e-8);
        for &i in &layout.data_indices {
            assert!((x[i].norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn index_sets_partition_the_frame() {
        let c = cfg();
        let layout = FrameLayout::new(&c, vec![c64::new(1.0, 0.0); 5], 0.0).unwrap();
        let mut seen = vec![0u8; 256];
        for &i in layout.pilot_indices.iter().chain(&layout.data_indices) {
            seen[i] += 1;
        }
        let guards = seen.iter().filter(|&&s| s == 0).count();
        assert_eq!(guards, 2 * 71);
        assert!(seen.iter().all(|&s| s <= 1));
    }

    #[test]
    fn overflow_and_length_errors() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            build_frame(&c, 114, 30.0, &[], &mut rng),
            Err(Error::FrameOverflow { .. })
        ));
        assert!(build_frame(&c, 5, 30.0, &[true; 3], &mut rng).is_err());
        let layout = FrameLayout::new(&c, vec![c64::new(1.0, 0.0); 5], 0.0).unwrap();
        assert!(extract_window(&[c64::new(0.0, 0.0); 100], &layout, &c).is_err());
    }

    #[test]
    fn window_copies_the_right_samples() {
        let c = cfg();
        let layout = FrameLayout::new(&c, vec![c64::new(1.0, 0.0); 5], 0.0).unwrap();
        let y: Vec<c64> = (0..256).map(|i| c64::new(i as f64, 0.0)).collect();
        let obs = extract_window(&y, &layout, &c).unwrap();
        assert_eq!(obs.m_t, 76);
        assert_eq!(obs.y_t[0].re, 4.0);
        assert_eq!(obs.y_t[75].re, 79.0);
    }

    #[test]
    fn layout_serializes() {
        let c = cfg();
        let layout = FrameLayout::new(&c, vec![c64::new(0.5, -2.0); 5], 30.0).unwrap();
        let text = toml::to_string(&layout).unwrap();
        let back: FrameLayout = toml::from_str(&text).unwrap();
        assert_eq!(back, layout);
    }
}
