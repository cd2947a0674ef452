//! Closed-form and instrumented per-iteration operation counts at the
//! default dimensions.

use afdm_sbl::dictionary::MeasurementModel;
use afdm_sbl::harness::complexity::{count_flops, Dims};
use afdm_sbl::harness::config::ExperimentConfig;
use afdm_sbl::harness::estimator::EstimatorSpec;
use afdm_sbl::harness::experiment::{draw_trial, Setup};
use afdm_sbl::harness::link::noise_var_for_snr;

fn main() -> afdm_sbl::Result<()> {
    let cfg = ExperimentConfig::default();
    let setup = Setup::new(&cfg)?;
    let dims = Dims::from_model(
        &MeasurementModel::new(setup.dict.clone(), setup.grid.clone()),
        4,
    )?;
    println!("{dims:?}");
    let trial = draw_trial(&cfg, &setup, 5, noise_var_for_snr(20.0))?;
    let specs = [
        EstimatorSpec::OffGridFixed,
        EstimatorSpec::GridEvolve,
        EstimatorSpec::GridRefine { step: 0.1 },
        EstimatorSpec::GridRefine { step: 0.01 },
        EstimatorSpec::DistributedEvolve { groups: 4 },
        EstimatorSpec::DistributedRefine {
            groups: 4,
            step: 0.1,
        },
    ];
    println!(
        "{:<16} {:>14} {:>14}",
        "estimator", "closed form", "instrumented"
    );
    for r in count_flops(&specs, &trial.tx.obs, &trial.dict, &setup.grid, &setup.sbl)? {
        println!("{:<16} {:>14.0} {:>14.0}", r.estimator, r.table, r.measured);
    }
    Ok(())
}
