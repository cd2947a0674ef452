//! The periodic Dirichlet kernel `F(theta) = sum_{n<N} exp(-j 2 pi theta n / N)`
//! and its derivative in `theta`.
//!
//! `F` has period `N` and a removable singularity at every multiple of `N`,
//! where it equals `N`. Scalar evaluation reduces `theta` into
//! `[-N/2, N/2)` and switches to a Taylor series near zero. [`KernelTable`]
//! evaluates runs `F(d + t)` over consecutive integers `d`, which is how every
//! dictionary column and every channel-matrix band is assembled.

use faer::c64;
use std::f64::consts::PI;

use crate::modem::cis;

/// Below this reduced argument the series form replaces the ratio of sines.
const SERIES_CUTOFF: f64 = 1e-3;

/// Reduces `theta` into `[-N/2, N/2]` modulo `N`.
#[inline]
fn reduce(theta: f64, n: f64) -> f64 {
    theta - n * (theta / n).round()
}

/// Real amplitude `sin(pi r) / sin(pi r / N)` and its derivative in `r`.
#[inline]
fn amplitude(r: f64, n: f64) -> (f64, f64) {
    if r.abs() < SERIES_CUTOFF {
        let n2 = n * n;
        let a = -(1.0 - 1.0 / n2) / 6.0;
        let b = 1.0 / 120.0 - 1.0 / (36.0 * n2) + 7.0 / (360.0 * n2 * n2);
        let x = PI * r;
        let x2 = x * x;
        let d = n * (1.0 + x2 * (a + b * x2));
        let dd = n * PI * x * (2.0 * a + 4.0 * b * x2);
        (d, dd)
    } else {
        let (s, c) = (PI * r).sin_cos();
        let (sn, cn) = (PI * r / n).sin_cos();
        let d = s / sn;
        let dd = PI * (c * sn - s * cn / n) / (sn * sn);
        (d, dd)
    }
}

/// `F(theta)` for an `N`-point kernel.
pub fn dirichlet(theta: f64, n: usize) -> c64 {
    let nf = n as f64;
    let r = reduce(theta, nf);
    let (d, _) = amplitude(r, nf);
    cis(-r * (nf - 1.0) / (2.0 * nf)) * d
}

/// `dF/dtheta` for an `N`-point kernel.
pub fn dirichlet_deriv(theta: f64, n: usize) -> c64 {
    let nf = n as f64;
    let r = reduce(theta, nf);
    let (d, dd) = amplitude(r, nf);
    let slope = PI * (nf - 1.0) / nf;
    cis(-r * (nf - 1.0) / (2.0 * nf)) * c64::new(dd, -slope * d)
}

/// Twiddle table for batched evaluation of `F(d + t)` over integer runs `d`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    n: usize,
    /// `exp(-j 2 pi k / N)` for `k < N`.
    twiddle: Vec<c64>,
}

impl KernelTable {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            twiddle: (0..n).map(|k| cis(-(k as f64) / n as f64)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Writes `F(d0 + i + t)` into `f[i]` and, when given, `F'(d0 + i + t)`
    /// into `df[i]`.
    ///
    /// With `t = t_i + t_f` split at the nearest integer, `exp(-j 2 pi theta)`
    /// is the same for the whole run, so each entry costs one complex
    /// division. The entry whose argument is a multiple of `N` falls back to
    /// the scalar form.
    pub fn fill(&self, t: f64, d0: i64, f: &mut [c64], mut df: Option<&mut [c64]>) {
        let n = self.n as i64;
        let nf = self.n as f64;
        let ti = t.round();
        let tf = t - ti;
        let base = (d0 + ti as i64).rem_euclid(n) as usize;
        let (s, _) = (PI * tf).sin_cos();
        // exp(-j 2 pi tf) - 1 = -2j sin(pi tf) exp(-j pi tf)
        let num = cis(-tf / 2.0) * c64::new(0.0, -2.0 * s);
        let e_full = cis(-tf);
        let e_frac = cis(-tf / nf);
        let dscale = c64::new(0.0, -2.0 * PI / nf);
        let singular_f = dirichlet(tf, self.n);
        let singular_df = df.as_ref().map(|_| dirichlet_deriv(tf, self.n));
        let mut k = base;
        for i in 0..f.len() {
            if k == 0 {
                f[i] = singular_f;
                if let (Some(out), Some(v)) = (df.as_deref_mut(), singular_df) {
                    out[i] = v;
                }
            } else {
                let e = self.twiddle[k] * e_frac;
                let den = e - 1.0;
                let inv = den.inv();
                let val = num * inv;
                f[i] = val;
                if let Some(out) = df.as_deref_mut() {
                    out[i] = dscale * (e_full * nf - e * val) * inv;
                }
            }
            k += 1;
            if k == self.n {
                k = 0;
            }
        }
    }
}
