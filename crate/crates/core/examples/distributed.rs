//! Group partition of the default dictionary and distributed estimates for
//! several group counts on the same observation.

use afdm_sbl::dictionary::MeasurementModel;
use afdm_sbl::distributed::make_partition;
use afdm_sbl::harness::config::ExperimentConfig;
use afdm_sbl::harness::estimator::EstimatorSpec;
use afdm_sbl::harness::experiment::{draw_trial, estimate, Setup};
use afdm_sbl::harness::link::noise_var_for_snr;

fn main() -> afdm_sbl::Result<()> {
    let cfg = ExperimentConfig::default();
    let setup = Setup::new(&cfg)?;
    let model = MeasurementModel::new(setup.dict.clone(), setup.grid.clone());
    for c in [1, 2, 4] {
        let part = make_partition(model.phi.as_ref(), c)?;
        let sizes: Vec<usize> = part.supports.iter().map(Vec::len).collect();
        println!(
            "C = {c}: rows per group {}, support sizes {sizes:?}",
            model.m_t() / c
        );
    }
    let trial = draw_trial(&cfg, &setup, 99, noise_var_for_snr(20.0))?;
    let specs = [
        EstimatorSpec::GridEvolve,
        EstimatorSpec::DistributedEvolve { groups: 1 },
        EstimatorSpec::DistributedEvolve { groups: 2 },
        EstimatorSpec::DistributedEvolve { groups: 4 },
        EstimatorSpec::DistributedRefine {
            groups: 4,
            step: 0.1,
        },
    ];
    for spec in specs {
        let o = estimate(&spec, &setup, &trial)?;
        println!(
            "{:<16} NMSE {:7.2} dB  iterations {:3}  ops/iteration {}",
            spec.to_string(),
            o.nmse_db,
            o.run.iterations,
            o.run.flops_per_iter()
        );
    }
    Ok(())
}
