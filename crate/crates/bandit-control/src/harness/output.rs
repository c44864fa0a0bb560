//! Artifact emission: per-trial timeseries CSVs, a per-trial summary, a
//! plot-ready aggregate with mean and standard-deviation bands, and a JSON
//! report. All files are written with fixed row order and shortest
//! round-trip float formatting, so equal reports produce equal bytes.

use std::path::{Path, PathBuf};

use super::runner::{EstimationRecord, RegretReport, TrialRecord};
use super::HarnessError;

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn csv_bytes(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<Vec<u8>, HarnessError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let wrap = |source: csv::Error| HarnessError::Csv { path: path.to_path_buf(), source };
    wtr.write_record(header).map_err(wrap)?;
    for row in rows {
        wtr.write_record(&row).map_err(wrap)?;
    }
    wtr.into_inner().map_err(|e| HarnessError::Csv {
        path: path.to_path_buf(),
        source: csv::Error::from(e.into_error()),
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn timeseries_rows(trial: &TrialRecord) -> impl Iterator<Item = Vec<String>> + '_ {
    let mut cum = 0.0;
    trial.costs.iter().zip(&trial.moving_avg).enumerate().map(move |(idx, (cost, avg))| {
        cum += cost;
        vec![(idx + 1).to_string(), num(*cost), num(*avg), num(cum)]
    })
}

// Across-seed mean and sample std of one controller's per-step series.
fn band(series: &[Vec<f64>], t: usize) -> (f64, f64) {
    let n = series.len();
    let mean = series.iter().map(|s| s[t]).sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = series.iter().map(|s| (s[t] - mean) * (s[t] - mean)).sum::<f64>()
        / (n as f64 - 1.0);
    (mean, var.sqrt())
}

/// Writes every artifact for a finished report into `out_dir` (created if
/// missing) and returns the paths: `{controller}_seed{seed}.csv` per trial
/// with columns `t,cost,moving_avg,cum_cost`; `summary.csv` with one row
/// per trial; `aggregate.csv` with mean and std bands per controller and
/// step; `report.json` with oracle costs and across-seed statistics.
pub fn emit_csv(report: &RegretReport, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|source| HarnessError::Io { path: out_dir.to_path_buf(), source })?;
    let mut written = Vec::new();

    for trial in &report.trials {
        let path = out_dir.join(format!("{}_seed{}.csv", trial.controller, trial.seed));
        let bytes =
            csv_bytes(&path, &["t", "cost", "moving_avg", "cum_cost"], timeseries_rows(trial))?;
        write_file(&path, &bytes)?;
        written.push(path);
    }

    let summary_path = out_dir.join("summary.csv");
    let bytes = csv_bytes(
        &summary_path,
        &["controller", "seed", "total_cost", "regret_fro", "regret_l1op", "trace_hash"],
        report.trials.iter().map(|trial| {
            vec![
                trial.controller.clone(),
                trial.seed.to_string(),
                num(trial.total_cost),
                num(trial.regret_fro),
                opt(trial.regret_l1op),
                trial.trace_hash.to_string(),
            ]
        }),
    )?;
    write_file(&summary_path, &bytes)?;
    written.push(summary_path);

    let aggregate_path = out_dir.join("aggregate.csv");
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(report.aggregates.len() * report.t);
    for agg in &report.aggregates {
        let trials: Vec<&TrialRecord> =
            report.trials.iter().filter(|tr| tr.controller == agg.controller).collect();
        let costs: Vec<Vec<f64>> = trials.iter().map(|tr| tr.costs.clone()).collect();
        let avgs: Vec<Vec<f64>> = trials.iter().map(|tr| tr.moving_avg.clone()).collect();
        let cums: Vec<Vec<f64>> = trials
            .iter()
            .map(|tr| {
                tr.costs
                    .iter()
                    .scan(0.0, |acc, c| {
                        *acc += c;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        for t in 0..report.t {
            let (cost_mean, cost_std) = band(&costs, t);
            let (avg_mean, avg_std) = band(&avgs, t);
            let (cum_mean, cum_std) = band(&cums, t);
            rows.push(vec![
                agg.controller.clone(),
                (t + 1).to_string(),
                num(cost_mean),
                num(cost_std),
                num(avg_mean),
                num(avg_std),
                num(cum_mean),
                num(cum_std),
            ]);
        }
    }
    let bytes = csv_bytes(
        &aggregate_path,
        &[
            "controller",
            "t",
            "cost_mean",
            "cost_std",
            "moving_avg_mean",
            "moving_avg_std",
            "cum_cost_mean",
            "cum_cost_std",
        ],
        rows.into_iter(),
    )?;
    write_file(&aggregate_path, &bytes)?;
    written.push(aggregate_path);

    let report_path = out_dir.join("report.json");
    let json = serde_json::to_vec_pretty(report)
        .map_err(|source| HarnessError::Json { path: report_path.clone(), source })?;
    write_file(&report_path, &json)?;
    written.push(report_path);

    Ok(written)
}

/// Writes the identification study as `estimate.csv` under `out_dir`
/// (created if missing) and returns its path.
pub fn emit_estimate_csv(
    records: &[EstimationRecord],
    out_dir: &Path,
) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|source| HarnessError::Io { path: out_dir.to_path_buf(), source })?;
    let path = out_dir.join("estimate.csv");
    let bytes = csv_bytes(
        &path,
        &["seed", "n", "residual", "err_l1_op", "rank_deficient"],
        records.iter().map(|r| {
            vec![
                r.seed.to_string(),
                r.n.to_string(),
                num(r.residual),
                num(r.err_l1_op),
                r.rank_deficient.to_string(),
            ]
        }),
    )?;
    write_file(&path, &bytes)?;
    Ok(path)
}
