//! Report generation: aggregates per-seed artifacts (training metrics
//! and sweep tables) into tidy CSVs, one per figure family, with
//! median and interquartile range across seeds.
//!
//! Inputs are classified by their header row, so any mix of metrics and
//! sweep files can be passed in one call. NaN cells (e.g. mean energy
//! over an all-infeasible iteration) are dropped before aggregation;
//! a group with no surviving values reports NaN quantiles.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::csvio::write_rows_csv;
use super::metrics::{read_metrics, MetricsRow};
use super::sweep::SweepRow;
use super::{io_err, HarnessError};

/// Exact header of a training-metrics file.
const METRICS_HEADER: &str = "iteration,mean_reward,mean_minmax_energy_mj,\
infeasible_fraction,active_ratio,passive_ratio,idle_ratio,mean_rho_active,mean_t2_seconds";

/// Exact header of a sweep table.
const SWEEP_HEADER: &str = "axis,value,seed,mean_minmax_energy_mj,\
infeasible_fraction,active_ratio,passive_ratio,idle_ratio,mean_rho_active,mean_t2_seconds";

/// Numeric metrics-file columns, in output order.
const METRIC_COLUMNS: [(&str, fn(&MetricsRow) -> f64); 8] = [
    ("mean_reward", |r| r.mean_reward),
    ("mean_minmax_energy_mj", |r| r.mean_minmax_energy_mj),
    ("infeasible_fraction", |r| r.infeasible_fraction),
    ("active_ratio", |r| r.active_ratio),
    ("passive_ratio", |r| r.passive_ratio),
    ("idle_ratio", |r| r.idle_ratio),
    ("mean_rho_active", |r| r.mean_rho_active),
    ("mean_t2_seconds", |r| r.mean_t2_seconds),
];

/// Mode-ratio sweep columns, in output order.
const RATIO_COLUMNS: [(&str, fn(&SweepRow) -> f64); 3] = [
    ("active_ratio", |r| r.active_ratio),
    ("passive_ratio", |r| r.passive_ratio),
    ("idle_ratio", |r| r.idle_ratio),
];

/// Amplification and transmission-time sweep columns, in output order.
const AMP_TIME_COLUMNS: [(&str, fn(&SweepRow) -> f64); 2] = [
    ("mean_rho_active", |r| r.mean_rho_active),
    ("mean_t2_seconds", |r| r.mean_t2_seconds),
];

/// One aggregated convergence point.
#[derive(Debug, Serialize)]
struct ConvergenceRow {
    iteration: u64,
    metric: &'static str,
    seeds: usize,
    median: f64,
    q25: f64,
    q75: f64,
}

/// One aggregated energy-vs-axis point.
#[derive(Debug, Serialize)]
struct EnergyRow {
    axis: String,
    value: f64,
    seeds: usize,
    median: f64,
    q25: f64,
    q75: f64,
}

/// One aggregated metric-vs-axis point (long format).
#[derive(Debug, Serialize)]
struct AxisMetricRow {
    axis: String,
    value: f64,
    metric: &'static str,
    seeds: usize,
    median: f64,
    q25: f64,
    q75: f64,
}

/// Files a report run produced.
#[derive(Debug, Clone)]
pub struct ReportOutcome {
    /// Every CSV written, in a stable order.
    pub written: Vec<PathBuf>,
}

/// Quantile with linear interpolation between order statistics (the
/// common "type 7" definition); `sorted` must be ascending and NaN-free.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

/// Drops NaNs, sorts, and summarizes as (count, median, q25, q75).
fn summarize(values: &[f64]) -> (usize, f64, f64, f64) {
    let mut kept: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    kept.sort_by(f64::total_cmp);
    (kept.len(), quantile(&kept, 0.5), quantile(&kept, 0.25), quantile(&kept, 0.75))
}

/// Reads the first line of a file (the CSV header).
fn header_line(path: &Path) -> Result<String, HarnessError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut line = String::new();
    std::io::BufReader::new(file).read_line(&mut line).map_err(io_err(path))?;
    Ok(line.trim_end().to_string())
}

fn read_sweep_rows(path: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| {
        if source.is_io_error() {
            HarnessError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(source.to_string()),
            }
        } else {
            HarnessError::SchemaMismatch {
                path: path.display().to_string(),
                detail: source.to_string(),
            }
        }
    })?;
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|source| HarnessError::SchemaMismatch {
                path: path.display().to_string(),
                detail: source.to_string(),
            })
        })
        .collect()
}

/// Aggregates training-metrics and sweep CSVs into tidy report tables in
/// `out_dir`:
///
/// - `convergence.csv` (`iteration,metric,seeds,median,q25,q75`) from
///   metrics files, one long-format row per iteration and metric;
/// - `energy_vs_axis.csv` (`axis,value,seeds,median,q25,q75`) from sweep
///   tables, aggregating min-max energy across seeds;
/// - `ratios_vs_axis.csv` and `amp_time_vs_axis.csv`
///   (`axis,value,metric,seeds,median,q25,q75`) likewise for mode
///   ratios, amplification, and transmission time.
///
/// Inputs are classified by header; an unrecognized header is a
/// [`HarnessError::SchemaMismatch`], and inputs that contribute zero
/// data rows overall are [`HarnessError::EmptyInput`].
pub fn run_report(inputs: &[PathBuf], out_dir: &Path) -> Result<ReportOutcome, HarnessError> {
    if inputs.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let mut metric_rows: Vec<MetricsRow> = Vec::new();
    let mut sweep_rows: Vec<SweepRow> = Vec::new();
    for path in inputs {
        match header_line(path)?.as_str() {
            METRICS_HEADER => metric_rows.extend(read_metrics(path)?),
            SWEEP_HEADER => sweep_rows.extend(read_sweep_rows(path)?),
            other => {
                return Err(HarnessError::SchemaMismatch {
                    path: path.display().to_string(),
                    detail: format!(
                        "unrecognized header {other:?}; expected a metrics or sweep table"
                    ),
                })
            }
        }
    }
    if metric_rows.is_empty() && sweep_rows.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();

    if !metric_rows.is_empty() {
        // Group by iteration, preserving numeric order.
        let mut iterations: Vec<u64> = metric_rows.iter().map(|r| r.iteration).collect();
        iterations.sort_unstable();
        iterations.dedup();
        let mut out = Vec::new();
        for iteration in iterations {
            let group: Vec<&MetricsRow> =
                metric_rows.iter().filter(|r| r.iteration == iteration).collect();
            for (metric, accessor) in METRIC_COLUMNS {
                let values: Vec<f64> = group.iter().map(|r| accessor(r)).collect();
                let (seeds, median, q25, q75) = summarize(&values);
                out.push(ConvergenceRow { iteration, metric, seeds, median, q25, q75 });
            }
        }
        let path = out_dir.join("convergence.csv");
        write_rows_csv(&path, &out)?;
        written.push(path);
    }

    if !sweep_rows.is_empty() {
        // Group by (axis, value) in lexicographic-then-numeric order.
        let mut keys: Vec<(String, f64)> =
            sweep_rows.iter().map(|r| (r.axis.clone(), r.value)).collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.dedup_by(|a, b| a.0 == b.0 && a.1.total_cmp(&b.1).is_eq());

        let mut energy = Vec::new();
        let mut ratios = Vec::new();
        let mut amp_time = Vec::new();
        for (axis, value) in keys {
            let group: Vec<&SweepRow> = sweep_rows
                .iter()
                .filter(|r| r.axis == axis && r.value.total_cmp(&value).is_eq())
                .collect();
            let energies: Vec<f64> = group.iter().map(|r| r.mean_minmax_energy_mj).collect();
            let (seeds, median, q25, q75) = summarize(&energies);
            energy.push(EnergyRow { axis: axis.clone(), value, seeds, median, q25, q75 });
            for (metric, accessor) in RATIO_COLUMNS {
                let values: Vec<f64> = group.iter().map(|r| accessor(r)).collect();
                let (seeds, median, q25, q75) = summarize(&values);
                ratios.push(AxisMetricRow {
                    axis: axis.clone(),
                    value,
                    metric,
                    seeds,
                    median,
                    q25,
                    q75,
                });
            }
            for (metric, accessor) in AMP_TIME_COLUMNS {
                let values: Vec<f64> = group.iter().map(|r| accessor(r)).collect();
                let (seeds, median, q25, q75) = summarize(&values);
                amp_time.push(AxisMetricRow {
                    axis: axis.clone(),
                    value,
                    metric,
                    seeds,
                    median,
                    q25,
                    q75,
                });
            }
        }
        let path = out_dir.join("energy_vs_axis.csv");
        write_rows_csv(&path, &energy)?;
        written.push(path);
        let path = out_dir.join("ratios_vs_axis.csv");
        write_rows_csv(&path, &ratios)?;
        written.push(path);
        let path = out_dir.join("amp_time_vs_axis.csv");
        write_rows_csv(&path, &amp_time)?;
        written.push(path);
    }

    Ok(ReportOutcome { written })
}
