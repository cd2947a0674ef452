//! Uncoded QPSK bit error rate with an MMSE equalizer, using either the true
//! or an estimated channel matrix.

use rayon::prelude::*;
use serde::Serialize;

use faer::prelude::*;

use crate::channel::build_equiv_matrix;
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::estimator::EstimatorSpec;
use crate::harness::experiment::{draw_trial, estimate, trial_seed, Setup, Trial};
use crate::harness::link::noise_var_for_snr;
use crate::linalg::{matvec, select_cols};
use crate::modem::{mmse_equalize, qpsk_demap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerResult {
    pub frames: usize,
    pub bits: usize,
    pub errors_estimated: usize,
    pub errors_perfect: usize,
}

impl BerResult {
    pub fn ber_estimated(&self) -> f64 {
        self.errors_estimated as f64 / self.bits as f64
    }

    pub fn ber_perfect(&self) -> f64 {
        self.errors_perfect as f64 / self.bits as f64
    }
}

/// Bit errors of the data symbols after cancelling the known pilots with
/// `h` and equalizing the data columns.
pub fn bit_errors(trial: &Trial, h: MatRef<'_, c64>, noise_var: f64) -> Result<usize> {
    let tx = &trial.tx;
    let mut pilots_only = vec![c64::new(0.0, 0.0); tx.x.len()];
    for &i in &tx.layout.pilot_indices {
        pilots_only[i] = tx.x[i];
    }
    let y: Vec<c64> =
        tx.y.iter()
            .zip(matvec(h, &pilots_only))
            .map(|(a, b)| a - b)
            .collect();
    let h_data = select_cols(h, &tx.layout.data_indices);
    let x_hat = mmse_equalize(&y, h_data.as_ref(), noise_var)?;
    Ok(qpsk_demap(&x_hat)
        .iter()
        .zip(&tx.data_bits)
        .filter(|(a, b)| a != b)
        .count())
}

/// Sends frames until at least `min_symbols` data symbols have been
/// detected, with the estimated and with the true channel.
pub fn simulate_ber(
    cfg: &ExperimentConfig,
    spec: &EstimatorSpec,
    snr_db: f64,
    min_symbols: usize,
) -> Result<BerResult> {
    let setup = Setup::new(cfg)?;
    let noise_var = noise_var_for_snr(snr_db);
    let per_frame = draw_trial(cfg, &setup, 0, noise_var)?
        .tx
        .layout
        .data_indices
        .len();
    let frames = min_symbols.div_ceil(per_frame);
    let counts = (0..frames)
        .into_par_iter()
        .map(|f| {
            let trial = draw_trial(cfg, &setup, trial_seed(cfg.seed, 0, f), noise_var)?;
            let h_hat = estimate(spec, &setup, &trial)?
                .run
                .estimate
                .h_matrix(&setup.afdm);
            let h = build_equiv_matrix(&trial.channel, &setup.afdm);
            Ok((
                bit_errors(&trial, h_hat.as_ref(), noise_var)?,
                bit_errors(&trial, h.as_ref(), noise_var)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BerResult {
        frames,
        bits: 2 * per_frame * frames,
        errors_estimated: counts.iter().map(|c| c.0).sum(),
        errors_perfect: counts.iter().map(|c| c.1).sum(),
    })
}
