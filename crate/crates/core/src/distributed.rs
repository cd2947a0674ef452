//! Distributed posterior: the pilot window is split into contiguous row
//! groups, each group solves a posterior over the columns it actually sees,
//! and the group posteriors are combined per component by precision
//! weighting.

use std::ops::Range;

use faer::prelude::*;

use crate::dictionary::MeasurementModel;
use crate::error::{Error, Result};
use crate::flops;
use crate::frame::PilotObservation;
use crate::linalg::{hpd_factor, hpd_inverse, mul_h, select_cols};
use crate::sbl::{self, posterior, PosteriorState, SblConfig, SblRun, Scheme, Strategy};

/// A column belongs to a group when that group holds more than this share of
/// the column's energy.
pub const SUPPORT_ENERGY_RATIO: f64 = 1e-6;
/// Group variances below this carry no usable precision.
const VARIANCE_FLOOR: f64 = 1e-300;

/// Row groups, their column supports, and the inverse membership map.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    pub group_rows: Vec<Range<usize>>,
    pub supports: Vec<Vec<usize>>,
    /// For each column, `(group, position in that group's support)`.
    pub memberships: Vec<Vec<(usize, usize)>>,
}

impl GroupPartition {
    pub fn n_groups(&self) -> usize {
        self.group_rows.len()
    }
}

/// Splits the rows of `phi` into `c` equal contiguous blocks and assigns each
/// column to the blocks holding a non-negligible share of its energy.
pub fn make_partition(phi: MatRef<'_, c64>, c: usize) -> Result<GroupPartition> {
    let (m_t, m_s) = (phi.nrows(), phi.ncols());
    if c == 0 || m_t % c != 0 {
        return Err(Error::InvalidConfig(format!(
            "{c} groups do not divide the {m_t} window rows"
        )));
    }
    let m_c = m_t / c;
    let group_rows: Vec<Range<usize>> = (0..c).map(|g| g * m_c..(g + 1) * m_c).collect();
    let mut supports = vec![Vec::new(); c];
    let mut memberships = vec![Vec::new(); m_s];
    flops::add((m_t * m_s) as u64);
    for (j, member) in memberships.iter_mut().enumerate() {
        let col = phi.col(j);
        let energy: Vec<f64> = group_rows
            .iter()
            .map(|r| r.clone().map(|i| col[i].norm_sqr()).sum())
            .collect();
        let total: f64 = energy.iter().sum();
        for (g, &e) in energy.iter().enumerate() {
            if total > 0.0 && e / total > SUPPORT_ENERGY_RATIO {
                member.push((g, supports[g].len()));
                supports[g].push(j);
            }
        }
        if member.is_empty() {
            return Err(Error::Uncovered { index: j });
        }
    }
    Ok(GroupPartition {
        group_rows,
        supports,
        memberships,
    })
}

/// Posterior of group `g` over its support. Pruned support columns get zero
/// mean and variance.
pub fn group_posterior(
    g: usize,
    alpha: &[f64],
    gamma: f64,
    y: &[c64],
    phi: MatRef<'_, c64>,
    partition: &GroupPartition,
) -> Result<sbl::Posterior> {
    let rows = partition.group_rows[g].clone();
    let support = &partition.supports[g];
    let local = select_cols(phi.subrows(rows.start, rows.len()), support);
    let a: Vec<f64> = support.iter().map(|&j| alpha[j]).collect();
    posterior(local.as_ref(), &a, gamma, &y[rows], false)
}

/// Precision-weighted combination of the group posteriors into a mean and a
/// diagonal variance.
pub fn fuse_posteriors(
    groups: &[sbl::Posterior],
    partition: &GroupPartition,
) -> Result<(Vec<c64>, Vec<f64>)> {
    let m_s = partition.memberships.len();
    let mut mu = vec![c64::new(0.0, 0.0); m_s];
    let mut var = vec![0.0; m_s];
    for (i, members) in partition.memberships.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Uncovered { index: i });
        }
        let mut precision = 0.0;
        let mut weighted = c64::new(0.0, 0.0);
        for &(g, k) in members {
            let v = groups[g].sigma[(k, k)].re;
            if v < VARIANCE_FLOOR {
                continue;
            }
            precision += 1.0 / v;
            weighted += groups[g].mu[k] / v;
        }
        if precision > 0.0 {
            var[i] = 1.0 / precision;
            mu[i] = weighted * var[i];
        }
    }
    flops::add(3 * m_s as u64);
    Ok((mu, var))
}

/// Distributed posterior step of the shared loop. One group reproduces the
/// centralized posterior exactly, full `Sigma` included; more groups leave a
/// diagonal `Sigma`. `C^{-1}` is always formed from the complete window.
pub(crate) fn fused_update(
    state: &mut PosteriorState,
    y: &[c64],
    phi: MatRef<'_, c64>,
    groups: usize,
    want_c_inv: bool,
) -> Result<Option<Mat<c64>>> {
    if groups == 1 {
        return sbl::posterior_update(state, y, phi, want_c_inv);
    }
    let partition = make_partition(phi, groups)?;
    let parts = (0..groups)
        .map(|g| group_posterior(g, &state.alpha, state.gamma, y, phi, &partition))
        .collect::<Result<Vec<_>>>()?;
    let (mu, var) = fuse_posteriors(&parts, &partition)?;
    let m_s = mu.len();
    state.mu = mu;
    state.sigma = Mat::from_fn(m_s, m_s, |i, j| {
        if i == j {
            c64::new(var[i], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    if !want_c_inv {
        return Ok(None);
    }
    let act: Vec<usize> = (0..m_s).filter(|&i| state.alpha[i] > 0.0).collect();
    let phi_a = select_cols(phi, &act);
    let scaled = Mat::from_fn(phi.nrows(), act.len(), |r, j| {
        phi_a[(r, j)] * state.alpha[act[j]]
    });
    let mut c = mul_h(scaled.as_ref(), phi_a.as_ref());
    for i in 0..c.nrows() {
        c[(i, i)] += c64::new(1.0 / state.gamma, 0.0);
    }
    let f = hpd_factor(c, "full covariance system")?;
    Ok(Some(hpd_inverse(&f)))
}

/// Runs the distributed estimator with `groups` row groups.
pub fn run_distributed_sbl(
    obs: &PilotObservation,
    model: MeasurementModel,
    cfg: &SblConfig,
    groups: usize,
    strategy: Strategy,
) -> Result<SblRun> {
    if !matches!(strategy, Strategy::GridRefine { .. } | Strategy::GridEvolve) {
        return Err(Error::InvalidConfig(
            "the distributed estimator supports grid refinement and grid evolution".into(),
        ));
    }
    if groups == 0 || !model.m_t().is_multiple_of(groups) {
        return Err(Error::InvalidConfig(format!(
            "{groups} groups do not divide the {} window rows",
            model.m_t()
        )));
    }
    sbl::run_loop(obs, model, cfg, strategy, Scheme::Distributed { groups })
}
