//! Virtual delay-Doppler grid and the measurement dictionary built on it.
//!
//! Column `i` of `Phi` is the noise-free pilot-window response of a unit-gain
//! path at grid point `i`; column `i` of `Psi` is its derivative in Doppler.

use faer::prelude::*;

use crate::error::{Error, Result};
use crate::flops;
use crate::frame::FrameLayout;
use crate::kernel::KernelTable;
use crate::modem::{cis, AfdmConfig};

/// Virtual sampling grid. Points are delay-major; `offsets` are the off-grid
/// Doppler components currently folded into the dictionary columns. Each
/// anchor stays inside the Doppler cell of width `r_nu` around its initial
/// position `homes[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualGrid {
    pub delays: Vec<f64>,
    pub dopplers: Vec<f64>,
    /// Current `(delay, doppler)` anchor of every grid point.
    pub points: Vec<(f64, f64)>,
    pub offsets: Vec<f64>,
    pub homes: Vec<f64>,
    pub r_tau: f64,
    pub r_nu: f64,
}

fn grid_count(span: f64, res: f64, what: &str) -> Result<usize> {
    if span == 0.0 {
        return Ok(1);
    }
    if !(res > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "{what} resolution must be positive"
        )));
    }
    let steps = span / res;
    if (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "{what} resolution {res} does not divide the span {span}"
        )));
    }
    Ok(steps.round() as usize + 1)
}

impl VirtualGrid {
    /// Uniform grid over `[0, l_max] x [-k_max - 1, k_max + 1]`.
    pub fn uniform(l_max: usize, k_max: usize, r_tau: f64, r_nu: f64) -> Result<Self> {
        let m_tau = grid_count(l_max as f64, r_tau, "delay")?;
        let m_nu = grid_count((2 * k_max + 2) as f64, r_nu, "Doppler")?;
        let delays: Vec<f64> = (0..m_tau).map(|a| a as f64 * r_tau).collect();
        let dopplers: Vec<f64> = (0..m_nu)
            .map(|b| b as f64 * r_nu - k_max as f64 - 1.0)
            .collect();
        let points: Vec<(f64, f64)> = (0..m_tau * m_nu)
            .map(|i| (delays[i / m_nu], dopplers[i % m_nu]))
            .collect();
        Ok(Self {
            delays,
            dopplers,
            homes: points.iter().map(|p| p.1).collect(),
            points,
            offsets: vec![0.0; m_tau * m_nu],
            r_tau,
            r_nu,
        })
    }

    /// Grid made of explicit points, with no axes.
    pub fn from_points(points: Vec<(f64, f64)>, r_nu: f64) -> Self {
        let n = points.len();
        Self {
            delays: Vec::new(),
            dopplers: Vec::new(),
            homes: points.iter().map(|p| p.1).collect(),
            points,
            offsets: vec![0.0; n],
            r_tau: 1.0,
            r_nu,
        }
    }

    /// Number of grid points `M_S`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Doppler cell `[home - r_nu / 2, home + r_nu / 2]` of point `i`.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let half = self.r_nu / 2.0;
        (self.homes[i] - half, self.homes[i] + half)
    }

    /// Doppler at which column `i` is evaluated: anchor plus offset.
    pub fn effective_doppler(&self, i: usize) -> f64 {
        self.points[i].1 + self.offsets[i]
    }
}

/// Precomputed pilot and window context shared by every column.
#[derive(Debug, Clone)]
pub struct Dictionary {
    n: usize,
    c1: f64,
    delay_shift: f64,
    table: KernelTable,
    pilots: Vec<usize>,
    /// `x[m] exp(j 2 pi c2 m^2) / N` per pilot.
    pilot_weights: Vec<c64>,
    /// `exp(-j 2 pi c2 mt^2)` per window row.
    row_phase: Vec<c64>,
    window_start: i64,
    m_t: usize,
}

impl Dictionary {
    pub fn new(cfg: &AfdmConfig, layout: &FrameLayout) -> Result<Self> {
        let n = cfg.n();
        let start = layout.window_start(cfg);
        let m_t = layout.window_len();
        if start < 0 || start + m_t as i64 > n as i64 {
            return Err(Error::WindowOutOfRange {
                start,
                end: start + m_t as i64,
                n,
            });
        }
        let pilots = layout.pilot_indices.clone();
        let pilot_weights = pilots
            .iter()
            .zip(&layout.pilot_symbols)
            .map(|(&m, &x)| x * cis(cfg.c2 * (m * m) as f64) / n as f64)
            .collect();
        let row_phase = (0..m_t)
            .map(|r| {
                let mt = (start as usize + r) as f64;
                cis(-cfg.c2 * mt * mt)
            })
            .collect();
        Ok(Self {
            n,
            c1: cfg.c1,
            delay_shift: cfg.delay_shift(),
            table: KernelTable::new(n),
            pilots,
            pilot_weights,
            row_phase,
            window_start: start,
            m_t,
        })
    }

    pub fn m_t(&self) -> usize {
        self.m_t
    }

    pub fn n_pilots(&self) -> usize {
        self.pilots.len()
    }

    /// Writes the response of a unit-gain path at `(delay, doppler)` into
    /// `phi`, and its Doppler derivative into `psi` when requested.
    pub fn column_into(&self, delay: f64, doppler: f64, phi: &mut [c64], psi: Option<&mut [c64]>) {
        let m_t = self.m_t;
        let m_max = *self.pilots.last().expect("layout has pilots");
        let m_min = self.pilots[0];
        let run = m_t + m_max - m_min;
        let t = self.delay_shift * delay + doppler;
        let d0 = self.window_start - m_max as i64;
        let mut f = vec![c64::new(0.0, 0.0); run];
        let mut df = psi.as_ref().map(|_| vec![c64::new(0.0, 0.0); run]);
        self.table.fill(t, d0, &mut f, df.as_deref_mut());

        let nf = self.n as f64;
        let lead = cis(self.c1 * delay * delay);
        let g: Vec<c64> = self
            .pilots
            .iter()
            .zip(&self.pilot_weights)
            .map(|(&m, &w)| w * lead * cis(-(m as f64) * delay / nf))
            .collect();

        phi.fill(c64::new(0.0, 0.0));
        for (&m, gj) in self.pilots.iter().zip(&g) {
            let off = m_max - m;
            for r in 0..m_t {
                phi[r] += gj * f[r + off];
            }
        }
        for (v, ph) in phi.iter_mut().zip(&self.row_phase) {
            *v *= ph;
        }
        if let (Some(psi), Some(df)) = (psi, df) {
            psi.fill(c64::new(0.0, 0.0));
            for (&m, gj) in self.pilots.iter().zip(&g) {
                let off = m_max - m;
                for r in 0..m_t {
                    psi[r] += gj * df[r + off];
                }
            }
            for (v, ph) in psi.iter_mut().zip(&self.row_phase) {
                *v *= ph;
            }
        }
        flops::add(3 * (self.pilots.len() * m_t) as u64);
    }

    /// Dictionary column for `(delay, doppler)`.
    pub fn phi_column(&self, delay: f64, doppler: f64) -> Vec<c64> {
        let mut phi = vec![c64::new(0.0, 0.0); self.m_t];
        self.column_into(delay, doppler, &mut phi, None);
        phi
    }

    /// Doppler derivative of [`Self::phi_column`].
    pub fn psi_column(&self, delay: f64, doppler: f64) -> Vec<c64> {
        let mut phi = vec![c64::new(0.0, 0.0); self.m_t];
        let mut psi = vec![c64::new(0.0, 0.0); self.m_t];
        self.column_into(delay, doppler, &mut phi, Some(&mut psi));
        psi
    }
}

/// `Phi`, `Psi` and the grid they were built on.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    pub phi: Mat<c64>,
    pub psi: Mat<c64>,
    pub grid: VirtualGrid,
    pub dict: Dictionary,
}

impl MeasurementModel {
    pub fn new(dict: Dictionary, grid: VirtualGrid) -> Self {
        let m_t = dict.m_t();
        let m_s = grid.len();
        let mut model = Self {
            phi: Mat::zeros(m_t, m_s),
            psi: Mat::zeros(m_t, m_s),
            grid,
            dict,
        };
        let all: Vec<usize> = (0..m_s).collect();
        model.rebuild_columns(&all);
        model
    }

    pub fn m_t(&self) -> usize {
        self.phi.nrows()
    }

    pub fn m_s(&self) -> usize {
        self.phi.ncols()
    }

    /// Recomputes the `Phi` and `Psi` columns of the given grid points.
    pub fn rebuild_columns(&mut self, indices: &[usize]) {
        let m_t = self.m_t();
        let mut phi = vec![c64::new(0.0, 0.0); m_t];
        let mut psi = vec![c64::new(0.0, 0.0); m_t];
        for &i in indices {
            let delay = self.grid.points[i].0;
            let doppler = self.grid.effective_doppler(i);
            self.dict
                .column_into(delay, doppler, &mut phi, Some(&mut psi));
            for r in 0..m_t {
                self.phi[(r, i)] = phi[r];
                self.psi[(r, i)] = psi[r];
            }
        }
    }
}
