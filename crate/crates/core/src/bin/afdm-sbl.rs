use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use afdm_sbl::harness::complexity::count_flops;
use afdm_sbl::harness::config::{velocity_for_doppler, ExperimentConfig};
use afdm_sbl::harness::estimator::EstimatorSpec;
use afdm_sbl::harness::experiment::{
    draw_trial, run_convergence, run_experiment, run_velocity_sweep, trial_seed, Setup,
};
use afdm_sbl::harness::link::noise_var_for_snr;
use afdm_sbl::harness::metrics::{emit_csv, summarize, MetricsRecord, SummaryRow};
use afdm_sbl::{Error, Result};

#[derive(Parser)]
#[command(
    name = "afdm-sbl",
    version,
    about = "AFDM channel estimation experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output CSV path; a `_summary.csv` sibling is written alongside.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated estimator tags, e.g. `sbl,ge-sbl,gr-sbl:0.01,genie`.
    #[arg(long, global = true, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Replace grid-evolution and grid-refinement estimators by their
    /// distributed versions with this many groups.
    #[arg(long, global = true)]
    groups: Option<usize>,
    /// Refinement steps. `sweep-step` sweeps them; elsewhere every
    /// refinement estimator is expanded over them.
    #[arg(long, global = true, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Comma-separated SNR points in dB.
    #[arg(long, global = true, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    /// Record wall-clock time per run (makes the CSV non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// NMSE against SNR for every estimator.
    SweepSnr,
    /// NMSE against mobile velocity at the first configured SNR.
    SweepVelocity {
        /// Velocities in m/s; defaults to 0.75, 1.5, 2.25 and 3 Doppler bins.
        #[arg(long, value_delimiter = ',')]
        velocities: Option<Vec<f64>>,
    },
    /// NMSE of grid refinement against its search step.
    SweepStep,
    /// Per-iteration NMSE traces.
    Convergence,
    /// Closed-form and instrumented per-iteration operation counts.
    Flops,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.n_trials = t;
    }
    if let Some(e) = &common.estimators {
        cfg.estimators = e.clone();
    }
    if let Some(s) = &common.snr {
        cfg.snr_db_list = s.clone();
    }
    if let Some(o) = &common.out {
        cfg.output_path = o.display().to_string();
    }
    cfg.estimators = rewrite_estimators(&cfg.estimators, common.groups, common.delta.as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

/// Applies `--groups` and `--delta` to the configured tags.
fn rewrite_estimators(
    tags: &[String],
    groups: Option<usize>,
    deltas: Option<&[f64]>,
) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for tag in tags {
        let expanded = match EstimatorSpec::parse(tag)? {
            EstimatorSpec::GridEvolve | EstimatorSpec::DistributedEvolve { .. }
                if groups.is_some() =>
            {
                vec![EstimatorSpec::DistributedEvolve {
                    groups: groups.unwrap_or(1),
                }]
            }
            spec @ (EstimatorSpec::GridRefine { step }
            | EstimatorSpec::DistributedRefine { step, .. }) => {
                let own = match spec {
                    EstimatorSpec::DistributedRefine { groups, .. } => Some(groups),
                    _ => None,
                };
                let steps = deltas.map_or_else(|| vec![step], <[f64]>::to_vec);
                steps
                    .into_iter()
                    .map(|step| match groups.or(own) {
                        Some(groups) => EstimatorSpec::DistributedRefine { groups, step },
                        None => EstimatorSpec::GridRefine { step },
                    })
                    .collect()
            }
            spec => vec![spec],
        };
        for s in expanded {
            let t = s.to_string();
            if !out.contains(&t) {
                out.push(t);
            }
        }
    }
    Ok(out)
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<22} {:>8} {:>7} {:>12} {:>10} {:>10} {:>14}",
        "estimator", "snr_db", "trials", "median_nmse", "mean_nmse", "mean_iter", "mean_flops"
    );
    for r in rows {
        println!(
            "{:<22} {:>8.1} {:>7} {:>12.2} {:>10.2} {:>10.1} {:>14.0}",
            r.estimator,
            r.snr_db,
            r.trials,
            r.median_nmse_db,
            r.mean_nmse_db,
            r.mean_iterations,
            r.mean_flops
        );
    }
}

fn finish(records: &[MetricsRecord], path: &Path) -> Result<()> {
    emit_csv(records, path)?;
    print_summary(&summarize(records));
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn write_serialized<T: serde::Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load(&cli.common)?;
    let out = PathBuf::from(&cfg.output_path);
    let timing = cli.common.timing;
    match cli.command {
        Command::SweepSnr => finish(&run_experiment(&cfg, timing)?, &out),
        Command::SweepVelocity { velocities } => {
            let a = &cfg.afdm;
            let v = velocities.unwrap_or_else(|| {
                [0.75, 1.5, 2.25, 3.0]
                    .iter()
                    .map(|&k| velocity_for_doppler(k, a.carrier_hz, a.subcarrier_spacing_hz))
                    .collect()
            });
            cfg.snr_db_list.truncate(1);
            let mut all = Vec::new();
            for point in run_velocity_sweep(&cfg, &v, timing)? {
                for mut r in point.records {
                    r.estimator = format!("{}@{}mps", r.estimator, point.velocity_mps);
                    all.push(r);
                }
            }
            finish(&all, &out)
        }
        Command::SweepStep => {
            let steps = cli
                .common
                .delta
                .clone()
                .unwrap_or_else(|| vec![0.5, 0.2, 0.1, 0.05, 0.02, 0.01]);
            cfg.estimators = steps
                .iter()
                .map(|&step| match cli.common.groups {
                    Some(groups) => EstimatorSpec::DistributedRefine { groups, step }.to_string(),
                    None => EstimatorSpec::GridRefine { step }.to_string(),
                })
                .collect();
            cfg.validate()?;
            finish(&run_experiment(&cfg, timing)?, &out)
        }
        Command::Convergence => {
            let rows = run_convergence(&cfg)?;
            write_serialized(&rows, &out)
        }
        Command::Flops => {
            let setup = Setup::new(&cfg)?;
            let snr = cfg.snr_db_list[0];
            let trial = draw_trial(
                &cfg,
                &setup,
                trial_seed(cfg.seed, 0, 0),
                noise_var_for_snr(snr),
            )?;
            let specs: Vec<EstimatorSpec> = setup
                .specs
                .iter()
                .copied()
                .filter(|s| *s != EstimatorSpec::Genie)
                .collect();
            if specs.is_empty() {
                return Err(Error::InvalidConfig(
                    "no estimator with a complexity expression".into(),
                ));
            }
            let rows = count_flops(&specs, &trial.tx.obs, &trial.dict, &setup.grid, &setup.sbl)?;
            println!(
                "{:<22} {:>16} {:>16} {:>6}",
                "estimator", "table", "measured", "iters"
            );
            for r in &rows {
                println!(
                    "{:<22} {:>16.0} {:>16.0} {:>6}",
                    r.estimator, r.table, r.measured, r.iterations
                );
            }
            write_serialized(&rows, &out)
        }
    }
}
