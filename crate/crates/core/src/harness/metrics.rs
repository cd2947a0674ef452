//! NMSE, per-run records, and CSV output.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use faer::prelude::*;

use crate::channel::{tap_distance_sq, Tap};
use crate::error::Result;
use crate::modem::AfdmConfig;

/// Lower clamp of every reported NMSE, dB.
pub const NMSE_FLOOR_DB: f64 = -120.0;

fn to_db(ratio: f64) -> f64 {
    (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
}

/// `10 log10(||H - H_hat||_F^2 / ||H||_F^2)` from path parameters, without
/// forming either matrix.
pub fn nmse_db(truth: &[Tap], estimate: &[Tap], cfg: &AfdmConfig) -> f64 {
    to_db(tap_distance_sq(truth, estimate, cfg) / tap_distance_sq(truth, &[], cfg))
}

/// The same ratio from explicit matrices.
pub fn nmse_db_matrices(h: MatRef<'_, c64>, h_hat: MatRef<'_, c64>) -> f64 {
    to_db((h - h_hat).squared_norm_l2() / h.squared_norm_l2())
}

/// One estimator run on one trial. `flops` is the instrumented operation
/// count of the whole run; `wall_ms` is zero unless timing was requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub estimator: String,
    pub snr_db: f64,
    pub trial: usize,
    pub nmse_db: f64,
    pub iterations: usize,
    pub flops: u64,
    pub wall_ms: f64,
}

/// Aggregate over trials of one (estimator, snr) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub snr_db: f64,
    pub trials: usize,
    pub median_nmse_db: f64,
    pub mean_nmse_db: f64,
    pub mean_iterations: f64,
    pub mean_flops: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median and mean NMSE per (estimator, snr), in first-appearance order of
/// the estimators and ascending SNR.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, u64), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        let idx = match order.iter().position(|e| *e == r.estimator) {
            Some(i) => i,
            None => {
                order.push(&r.estimator);
                order.len() - 1
            }
        };
        // Order-preserving key for finite SNRs.
        let bits = r.snr_db.to_bits();
        let key = if r.snr_db.is_sign_negative() {
            !bits
        } else {
            bits | (1 << 63)
        };
        groups.entry((idx, key)).or_default().push(r);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_values()
        .map(|g| {
            let n = g.len() as f64;
            let nmse: Vec<f64> = g.iter().map(|r| r.nmse_db).collect();
            SummaryRow {
                estimator: g[0].estimator.clone(),
                snr_db: g[0].snr_db,
                trials: g.len(),
                median_nmse_db: median(&nmse),
                mean_nmse_db: nmse.iter().sum::<f64>() / n,
                mean_iterations: g.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
                mean_flops: g.iter().map(|r| r.flops as f64).sum::<f64>() / n,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let ia = order.iter().position(|e| *e == a.estimator);
        let ib = order.iter().position(|e| *e == b.estimator);
        ia.cmp(&ib).then(a.snr_db.total_cmp(&b.snr_db))
    });
    rows
}

fn write_rows<T: Serialize>(rows: &[T], header: &[&str], w: impl Write) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Header of the per-run CSV.
pub const RECORD_HEADER: [&str; 7] = [
    "estimator",
    "snr_db",
    "trial",
    "nmse_db",
    "iterations",
    "flops",
    "wall_ms",
];

const SUMMARY_HEADER: [&str; 7] = [
    "estimator",
    "snr_db",
    "trials",
    "median_nmse_db",
    "mean_nmse_db",
    "mean_iterations",
    "mean_flops",
];

pub fn write_records(records: &[MetricsRecord], w: impl Write) -> Result<()> {
    write_rows(records, &RECORD_HEADER, w)
}

pub fn write_summary(rows: &[SummaryRow], w: impl Write) -> Result<()> {
    write_rows(rows, &SUMMARY_HEADER, w)
}

/// Writes `path` with one row per record and `<stem>_summary.csv` next to it.
pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    write_records(records, std::fs::File::create(path)?)?;
    write_summary(
        &summarize(records),
        std::fs::File::create(summary_path(path))?,
    )
}

/// `<dir>/<stem>_summary.csv` for `<dir>/<stem>.<ext>`.
pub fn summary_path(path: &Path) -> std::path::PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    path.with_file_name(format!("{stem}_summary.csv"))
}

pub fn read_records(r: impl std::io::Read) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::equiv_matrix;
    use crate::modem::DEFAULT_C2;
    use proptest::prelude::*;

    fn cfg() -> AfdmConfig {
        AfdmConfig::new(64, 15e3, 4e9, 1, 2, 1, DEFAULT_C2).unwrap()
    }

    #[test]
    fn closed_form_matches_dense() {
        let cfg = cfg();
        let truth = [
            Tap {
                gain: c64::new(0.5, 0.2),
                delay: 0.0,
                doppler: 0.3,
            },
            Tap {
                gain: c64::new(-0.1, 0.4),
                delay: 2.0,
                doppler: -0.8,
            },
        ];
        let est = [Tap {
            gain: c64::new(0.45, 0.25),
            delay: 0.0,
            doppler: 0.31,
        }];
        let dense = nmse_db_matrices(
            equiv_matrix(&truth, &cfg).as_ref(),
            equiv_matrix(&est, &cfg).as_ref(),
        );
        assert!((nmse_db(&truth, &est, &cfg) - dense).abs() < 1e-8);
        assert!((nmse_db(&truth, &[], &cfg)).abs() < 1e-12);
        assert_eq!(nmse_db(&truth, &truth, &cfg), NMSE_FLOOR_DB);
    }

    fn record(e: &str, snr: f64, trial: usize, nmse: f64) -> MetricsRecord {
        MetricsRecord {
            estimator: e.into(),
            snr_db: snr,
            trial,
            nmse_db: nmse,
            iterations: 7,
            flops: 1234,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn empty_metrics_give_header_only() {
        let mut buf = Vec::new();
        write_records(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "estimator,snr_db,trial,nmse_db,iterations,flops,wall_ms\n"
        );
    }

    #[test]
    fn summary_medians() {
        let recs = vec![
            record("b", 10.0, 0, -3.0),
            record("a", 10.0, 0, -1.0),
            record("a", -5.0, 0, 2.0),
            record("a", 10.0, 1, -2.0),
            record("a", 10.0, 2, -9.0),
        ];
        let rows = summarize(&recs);
        let keys: Vec<(&str, f64)> = rows
            .iter()
            .map(|r| (r.estimator.as_str(), r.snr_db))
            .collect();
        assert_eq!(keys, vec![("b", 10.0), ("a", -5.0), ("a", 10.0)]);
        assert_eq!(rows[2].median_nmse_db, -2.0);
        assert_eq!(rows[2].mean_nmse_db, -4.0);
        assert_eq!(median(&[1.0, 3.0]), 2.0);
    }

    proptest! {
        #[test]
        fn csv_round_trip(
            rows in proptest::collection::vec((-50.0f64..50.0, 0usize..1000, -120.0f64..20.0, 0usize..101, any::<u64>()), 0..20)
        ) {
            let recs: Vec<MetricsRecord> = rows
                .into_iter()
                .map(|(s, t, n, i, f)| MetricsRecord {
                    estimator: "gr-sbl:0.01".into(),
                    snr_db: s,
                    trial: t,
                    nmse_db: n,
                    iterations: i,
                    flops: f,
                    wall_ms: 0.0,
                })
                .collect();
            let mut buf = Vec::new();
            write_records(&recs, &mut buf).unwrap();
            prop_assert!(!buf.contains(&b'\r'));
            prop_assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
        }
    }
}
