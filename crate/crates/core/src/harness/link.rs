//! One frame through the time-domain link: IDAFT, prefix, channel, noise,
//! prefix removal, DAFT, pilot window.

use rand::Rng;

use faer::c64;

use crate::channel::{apply_channel_time, ChannelRealization};
use crate::error::Result;
use crate::frame::{build_frame, extract_window, FrameLayout, PilotObservation};
use crate::modem::{add_cpp, daft, idaft, remove_cpp, AfdmConfig};

/// Everything the receiver sees, plus what was sent.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub x: Vec<c64>,
    pub data_bits: Vec<bool>,
    pub layout: FrameLayout,
    /// Received DAF-domain frame.
    pub y: Vec<c64>,
    pub obs: PilotObservation,
}

/// Noise variance for a data-symbol SNR in dB (data symbols have unit power).
pub fn noise_var_for_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Sends one frame with random QPSK data through `ch`.
pub fn transmit(
    cfg: &AfdmConfig,
    ch: &ChannelRealization,
    n_pilots: usize,
    pilot_boost_db: f64,
    noise_var: f64,
    rng: &mut impl Rng,
) -> Result<Transmission> {
    let n_data = FrameLayout::new(cfg, vec![c64::new(1.0, 0.0); n_pilots], pilot_boost_db)?
        .data_indices
        .len();
    let data_bits: Vec<bool> = (0..2 * n_data).map(|_| rng.random()).collect();
    let (x, layout) = build_frame(cfg, n_pilots, pilot_boost_db, &data_bits, rng)?;
    let s = add_cpp(&idaft(&x, cfg)?, cfg)?;
    let r = apply_channel_time(&s, ch, cfg, noise_var, rng)?;
    let y = daft(&remove_cpp(&r, cfg)?, cfg)?;
    let obs = extract_window(&y, &layout, cfg)?;
    Ok(Transmission {
        x,
        data_bits,
        layout,
        y,
        obs,
    })
}
