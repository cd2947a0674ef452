//! Closed-form per-iteration operation counts and their instrumented
//! counterparts.

use serde::Serialize;

use crate::dictionary::{Dictionary, MeasurementModel, VirtualGrid};
use crate::distributed::make_partition;
use crate::error::{Error, Result};
use crate::frame::PilotObservation;
use crate::harness::estimator::EstimatorSpec;
use crate::sbl::SblConfig;

/// Problem dimensions entering the complexity expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dims {
    pub m_t: usize,
    pub m_s: usize,
    pub p_bar: usize,
    pub n_pilots: usize,
    /// Rows per group, `M_T / C`.
    pub m_c: usize,
    /// Mean group support size.
    pub j_c: f64,
}

impl Dims {
    /// Dimensions of `model` with the group supports of `groups` groups on
    /// its current dictionary.
    pub fn from_model(model: &MeasurementModel, groups: usize) -> Result<Self> {
        let part = make_partition(model.phi.as_ref(), groups)?;
        let j_c = part.supports.iter().map(Vec::len).sum::<usize>() as f64 / groups as f64;
        Ok(Self {
            m_t: model.m_t(),
            m_s: model.m_s(),
            p_bar: SblConfig::p_bar_for(model.m_t(), model.m_s()),
            n_pilots: model.dict.n_pilots(),
            m_c: model.m_t() / groups,
            j_c,
        })
    }
}

/// Number of refinement candidates `r_nu / step + 1`.
pub fn candidate_count(r_nu: f64, step: f64) -> f64 {
    (r_nu / step).round() + 1.0
}

/// Per-iteration cost of the centralized posterior and hyperparameter
/// updates, shared by every single-group row.
fn centralized_core(d: &Dims) -> f64 {
    let (mt, ms) = (d.m_t as f64, d.m_s as f64);
    mt.powi(3) + (2.0 * mt + ms + 3.0) * mt * ms + ms * ms + (ms + 1.0) * mt + 4.0 * ms
}

fn distributed_core(d: &Dims, groups: usize) -> f64 {
    let (mc, j) = (d.m_c as f64, d.j_c);
    groups as f64 * (mc.powi(3) + (2.0 * mc + j + 3.0) * mc * j + j * j)
        + (d.m_s as f64 + 1.0) * d.m_t as f64
        + 4.0 * d.m_s as f64
}

fn column_refresh(d: &Dims) -> f64 {
    3.0 * (d.p_bar * d.n_pilots * d.m_t) as f64
}

fn offset_solve(d: &Dims) -> f64 {
    let p = d.p_bar as f64;
    p.powi(3) + p * p
}

fn grid_search(d: &Dims, r_nu: f64, step: f64) -> f64 {
    let mt = d.m_t as f64;
    d.p_bar as f64 * candidate_count(r_nu, step) * (4.0 * mt * mt + 2.0 * mt + 1.0)
}

/// Per-iteration operation count from the closed-form expressions. The
/// on-grid baseline is the fixed-grid row without the offset solve; the genie
/// has no closed form.
pub fn table_flops(spec: &EstimatorSpec, d: &Dims, r_nu: f64) -> Result<f64> {
    Ok(match *spec {
        EstimatorSpec::OnGrid => centralized_core(d),
        EstimatorSpec::OffGridFixed => centralized_core(d) + offset_solve(d),
        EstimatorSpec::GridRefine { step } => {
            centralized_core(d) + column_refresh(d) + grid_search(d, r_nu, step)
        }
        EstimatorSpec::GridEvolve => centralized_core(d) + column_refresh(d) + offset_solve(d),
        EstimatorSpec::DistributedRefine { groups, step } => {
            distributed_core(d, groups) + column_refresh(d) + grid_search(d, r_nu, step)
        }
        EstimatorSpec::DistributedEvolve { groups } => {
            distributed_core(d, groups) + column_refresh(d) + offset_solve(d)
        }
        EstimatorSpec::Genie => {
            return Err(Error::UnknownEstimator(
                "genie has no complexity expression".into(),
            ))
        }
    })
}

/// Closed-form and instrumented per-iteration counts of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopRow {
    pub estimator: String,
    pub table: f64,
    pub measured: f64,
    pub iterations: usize,
}

/// Evaluates every estimator on `obs` and reports both counts. The
/// distributed rows take their group dimensions from the initial grid.
pub fn count_flops(
    specs: &[EstimatorSpec],
    obs: &PilotObservation,
    dict: &Dictionary,
    grid: &VirtualGrid,
    cfg: &SblConfig,
) -> Result<Vec<FlopRow>> {
    let model = MeasurementModel::new(dict.clone(), grid.clone());
    specs
        .iter()
        .map(|spec| {
            let groups = match spec {
                EstimatorSpec::DistributedEvolve { groups }
                | EstimatorSpec::DistributedRefine { groups, .. } => *groups,
                _ => 1,
            };
            let dims = Dims::from_model(&model, groups)?;
            let table = table_flops(spec, &dims, grid.r_nu)?;
            let run = spec.run(obs, dict, grid, &[], cfg)?;
            Ok(FlopRow {
                estimator: spec.to_string(),
                table,
                measured: run.flops_per_iter() as f64,
                iterations: run.iterations,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            m_t: 76,
            m_s: 72,
            p_bar: 17,
            n_pilots: 5,
            m_c: 19,
            j_c: 22.0,
        }
    }

    #[test]
    fn evolve_row_by_hand() {
        let d = dims();
        let by_hand = 76f64.powi(3)
            + (2.0 * 76.0 + 72.0 + 3.0) * 76.0 * 72.0
            + 72.0 * 72.0
            + (3.0 * 17.0 * 5.0 + 72.0 + 1.0) * 76.0
            + 4.0 * 72.0
            + 17f64.powi(3)
            + 17.0 * 17.0;
        let v = table_flops(&EstimatorSpec::GridEvolve, &d, 1.0).unwrap();
        assert!((v - by_hand).abs() < 1e-6);
        assert_eq!(76f64.powi(3), 438_976.0);
        assert_eq!((2.0 * 76.0 + 72.0 + 3.0) * 76.0 * 72.0, 1_242_144.0);
    }

    #[test]
    fn search_term_is_linear_in_candidates() {
        let d = dims();
        let core = table_flops(&EstimatorSpec::GridEvolve, &d, 1.0).unwrap() - offset_solve(&d);
        let coarse = table_flops(&EstimatorSpec::GridRefine { step: 0.1 }, &d, 1.0).unwrap() - core;
        let fine = table_flops(&EstimatorSpec::GridRefine { step: 0.01 }, &d, 1.0).unwrap() - core;
        assert!(((fine / coarse) - 101.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn ordering_at_default_dims() {
        let d = dims();
        let f = |s: EstimatorSpec| table_flops(&s, &d, 1.0).unwrap();
        let dge = f(EstimatorSpec::DistributedEvolve { groups: 4 });
        let ge = f(EstimatorSpec::GridEvolve);
        let gr1 = f(EstimatorSpec::GridRefine { step: 0.1 });
        let gr01 = f(EstimatorSpec::GridRefine { step: 0.01 });
        assert!(dge < ge && ge < gr1 && gr1 < gr01);
        assert!(table_flops(&EstimatorSpec::Genie, &d, 1.0).is_err());
    }
}
