//! Estimator tags and their execution on one observation.

use std::fmt;

use crate::channel::Tap;
use crate::dictionary::{Dictionary, MeasurementModel, VirtualGrid};
use crate::distributed::run_distributed_sbl;
use crate::error::{Error, Result};
use crate::frame::PilotObservation;
use crate::sbl::{run_sbl, SblConfig, SblRun, Strategy};

/// One configured estimator.
///
/// Tags: `sbl`, `og-sbl`, `gr-sbl:<step>`, `ge-sbl`, `d-ge-sbl:<groups>`,
/// `d-gr-sbl:<groups>:<step>`, `genie`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    OnGrid,
    OffGridFixed,
    GridRefine { step: f64 },
    GridEvolve,
    DistributedEvolve { groups: usize },
    DistributedRefine { groups: usize, step: f64 },
    Genie,
}

fn parse_num<T: std::str::FromStr>(tag: &str, s: Option<&str>) -> Result<T> {
    s.and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::UnknownEstimator(tag.to_string()))
}

impl EstimatorSpec {
    pub fn parse(tag: &str) -> Result<Self> {
        let mut parts = tag.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let spec = match head {
            "sbl" => Self::OnGrid,
            "og-sbl" => Self::OffGridFixed,
            "ge-sbl" => Self::GridEvolve,
            "genie" => Self::Genie,
            "gr-sbl" => Self::GridRefine {
                step: parse_num(tag, parts.next())?,
            },
            "d-ge-sbl" => Self::DistributedEvolve {
                groups: parse_num(tag, parts.next())?,
            },
            "d-gr-sbl" => Self::DistributedRefine {
                groups: parse_num(tag, parts.next())?,
                step: parse_num(tag, parts.next())?,
            },
            _ => return Err(Error::UnknownEstimator(tag.to_string())),
        };
        if parts.next().is_some() {
            return Err(Error::UnknownEstimator(tag.to_string()));
        }
        match spec {
            Self::GridRefine { step } | Self::DistributedRefine { step, .. }
                if !(step > 0.0 && step <= 1.0) =>
            {
                Err(Error::UnknownEstimator(tag.to_string()))
            }
            Self::DistributedEvolve { groups: 0 } | Self::DistributedRefine { groups: 0, .. } => {
                Err(Error::UnknownEstimator(tag.to_string()))
            }
            s => Ok(s),
        }
    }

    /// Runs the estimator. `truth` is consulted only by the genie.
    pub fn run(
        &self,
        obs: &PilotObservation,
        dict: &Dictionary,
        grid: &VirtualGrid,
        truth: &[Tap],
        cfg: &SblConfig,
    ) -> Result<SblRun> {
        let model = |g: VirtualGrid| MeasurementModel::new(dict.clone(), g);
        match *self {
            Self::OnGrid => run_sbl(obs, model(grid.clone()), cfg, Strategy::OnGrid),
            Self::OffGridFixed => {
                run_sbl(obs, model(grid.clone()), cfg, Strategy::FixedGridOffGrid)
            }
            Self::GridRefine { step } => {
                run_sbl(obs, model(grid.clone()), cfg, Strategy::GridRefine { step })
            }
            Self::GridEvolve => run_sbl(obs, model(grid.clone()), cfg, Strategy::GridEvolve),
            Self::DistributedEvolve { groups } => {
                run_distributed_sbl(obs, model(grid.clone()), cfg, groups, Strategy::GridEvolve)
            }
            Self::DistributedRefine { groups, step } => run_distributed_sbl(
                obs,
                model(grid.clone()),
                cfg,
                groups,
                Strategy::GridRefine { step },
            ),
            Self::Genie => {
                let points = truth.iter().map(|t| (t.delay, t.doppler)).collect();
                let genie = model(VirtualGrid::from_points(points, grid.r_nu));
                let cfg = SblConfig {
                    p_bar: truth.len(),
                    ..cfg.clone()
                };
                run_sbl(obs, genie, &cfg, Strategy::Genie)
            }
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OnGrid => write!(f, "sbl"),
            Self::OffGridFixed => write!(f, "og-sbl"),
            Self::GridRefine { step } => write!(f, "gr-sbl:{step}"),
            Self::GridEvolve => write!(f, "ge-sbl"),
            Self::DistributedEvolve { groups } => write!(f, "d-ge-sbl:{groups}"),
            Self::DistributedRefine { groups, step } => write!(f, "d-gr-sbl:{groups}:{step}"),
            Self::Genie => write!(f, "genie"),
        }
    }
}
