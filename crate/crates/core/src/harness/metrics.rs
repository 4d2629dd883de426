//! Per-iteration training metrics: aggregation from step records and the
//! stable CSV schema they are stored in.
//!
//! Column order (fixed, part of the external contract):
//! `iteration, mean_reward, mean_minmax_energy_mj, infeasible_fraction,
//! active_ratio, passive_ratio, idle_ratio, mean_rho_active,
//! mean_t2_seconds`.
//!
//! Energy, ρ, and t₂ means are taken over the steps where they exist
//! (feasible steps; active elements). When an iteration has none, the
//! column holds NaN — readers must treat NaN as "no observation", not
//! zero.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::env::StepRecord;

/// One row of a training metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// 0-based training iteration.
    pub iteration: u64,
    /// Mean reward over every step of the iteration.
    pub mean_reward: f64,
    /// Mean min-max energy over feasible steps, in millijoules (NaN when
    /// no step was feasible).
    pub mean_minmax_energy_mj: f64,
    /// Fraction of steps whose instance was infeasible.
    pub infeasible_fraction: f64,
    /// Mean fraction of elements in active mode.
    pub active_ratio: f64,
    /// Mean fraction of elements in passive mode.
    pub passive_ratio: f64,
    /// Mean fraction of elements idle.
    pub idle_ratio: f64,
    /// Mean amplification over active element-instances (NaN when none
    /// was active).
    pub mean_rho_active: f64,
    /// Mean total phase-2 time Σ_j t₂ over feasible steps, seconds (NaN
    /// when no step was feasible).
    pub mean_t2_seconds: f64,
}

impl MetricsRow {
    /// Aggregates one iteration's step records.
    ///
    /// Panics on an empty record set (an iteration always has steps).
    pub fn from_records(iteration: u64, records: &[StepRecord]) -> Self {
        assert!(!records.is_empty(), "an iteration has at least one step");
        let steps = records.len() as f64;
        let mean_reward = records.iter().map(|r| r.reward).sum::<f64>() / steps;

        let mut feasible = 0usize;
        let mut energy_sum = 0.0;
        let mut t2_sum = 0.0;
        let mut ratio_sums = (0.0, 0.0, 0.0);
        let mut rho_sum = 0.0;
        let mut rho_count = 0usize;
        for rec in records {
            let (active, passive, idle) = rec.modes.mode_counts();
            let total = (idle + passive + active) as f64;
            ratio_sums.0 += active as f64 / total;
            ratio_sums.1 += passive as f64 / total;
            ratio_sums.2 += idle as f64 / total;
            for n in 0..rec.modes.len() {
                if rec.modes.mode(n) == crate::sysmodel::Mode::Active {
                    rho_sum += rec.modes.rho(n);
                    rho_count += 1;
                }
            }
            if rec.solution.is_feasible() {
                feasible += 1;
                energy_sum += rec.solution.objective;
                t2_sum += rec.solution.allocation.t2.iter().sum::<f64>();
            }
        }

        let nan_if_zero = |sum: f64, count: usize| {
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        };
        MetricsRow {
            iteration,
            mean_reward,
            mean_minmax_energy_mj: nan_if_zero(energy_sum * 1e3, feasible),
            infeasible_fraction: (records.len() - feasible) as f64 / steps,
            active_ratio: ratio_sums.0 / steps,
            passive_ratio: ratio_sums.1 / steps,
            idle_ratio: ratio_sums.2 / steps,
            mean_rho_active: nan_if_zero(rho_sum, rho_count),
            mean_t2_seconds: nan_if_zero(t2_sum, feasible),
        }
    }

    /// Checks the row invariants: mode ratios sum to 1 (±1e-9) and the
    /// energy column is nonnegative where it holds an observation.
    pub fn validate(&self) -> Result<(), String> {
        let ratio_sum = self.active_ratio + self.passive_ratio + self.idle_ratio;
        if (ratio_sum - 1.0).abs() > 1e-9 {
            return Err(format!("mode ratios sum to {ratio_sum}, expected 1"));
        }
        if !self.mean_minmax_energy_mj.is_nan() && self.mean_minmax_energy_mj < 0.0 {
            return Err(format!("negative energy {}", self.mean_minmax_energy_mj));
        }
        if !(0.0..=1.0).contains(&self.infeasible_fraction) {
            return Err(format!("infeasible fraction {}", self.infeasible_fraction));
        }
        Ok(())
    }
}

/// Appends one row to a metrics CSV, writing the header first when the
/// file is new or empty, and flushes so interrupted runs keep their rows.
pub fn append_metrics_row(path: &Path, row: &MetricsRow) -> Result<(), HarnessError> {
    let new_file = !path.exists() || std::fs::metadata(path).map_err(io_err(path))?.len() == 0;
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut writer = csv::WriterBuilder::new().has_headers(new_file).from_writer(file);
    writer.serialize(row).map_err(|source| super::CsvError::Encode {
        path: path.display().to_string(),
        source: Box::new(source),
    })?;
    writer
        .into_inner()
        .map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?
        .flush()
        .map_err(io_err(path))?;
    Ok(())
}

/// Reads a complete metrics file.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| {
        if source.is_io_error() {
            HarnessError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(source.to_string()),
            }
        } else {
            super::CsvError::Encode {
                path: path.display().to_string(),
                source: Box::new(source),
            }
            .into()
        }
    })?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: MetricsRow = record.map_err(|source| HarnessError::SchemaMismatch {
            path: path.display().to_string(),
            detail: source.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Rewrites a metrics file keeping only iterations `< upto` (used when
/// resuming from a checkpoint older than the last appended rows).
pub fn truncate_metrics(path: &Path, upto: u64) -> Result<(), HarnessError> {
    if !path.exists() {
        return Ok(());
    }
    let rows = read_metrics(path)?;
    let kept: Vec<&MetricsRow> = rows.iter().filter(|r| r.iteration < upto).collect();
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        for row in kept {
            writer.serialize(row).map_err(|source| super::CsvError::Encode {
                path: path.display().to_string(),
                source: Box::new(source),
            })?;
        }
        writer.flush().map_err(io_err(path))?;
    }
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::users_on_circle;
    use crate::env::{EnvConfig, RisEnv};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn records_from_small_env(q_min: f64, actions: &[Vec<usize>]) -> Vec<StepRecord> {
        let mut cfg = EnvConfig::default_desk();
        cfg.geometry.ris_elements = 4;
        cfg.geometry.ehs_elements = 8;
        cfg.geometry.user_pos = users_on_circle(2, 0.5);
        cfg.params.q_min = q_min;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut env = RisEnv::new(cfg, &mut rng).unwrap();
        actions
            .iter()
            .map(|a| env.step(a, &mut rng).unwrap())
            .collect()
    }

    #[test]
    fn aggregation_counts_modes_and_energy() {
        // Two steps: all passive, then 2 active + 1 passive + 1 idle.
        let records = records_from_small_env(
            1.5,
            &[
                vec![1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0],
                vec![1, 1, 4, 1, 0, 0, 0, 0, 0, 1, 1, 9],
            ],
        );
        let row = MetricsRow::from_records(3, &records);
        row.validate().unwrap();
        assert_eq!(row.iteration, 3);
        // Step 1 ratios (0, 1, 0); step 2 ratios (0.5, 0.25, 0.25).
        assert!((row.active_ratio - 0.25).abs() < 1e-12);
        assert!((row.passive_ratio - 0.625).abs() < 1e-12);
        assert!((row.idle_ratio - 0.125).abs() < 1e-12);
        // Active ρ instances: 50 and 100.
        assert!((row.mean_rho_active - 75.0).abs() < 1e-12);
        if row.infeasible_fraction == 0.0 {
            assert!(row.mean_minmax_energy_mj > 0.0);
            assert!(row.mean_t2_seconds >= 0.0);
        }
    }

    #[test]
    fn all_infeasible_iteration_reports_nan_energy() {
        let records =
            records_from_small_env(40.0, &[vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]]);
        let row = MetricsRow::from_records(0, &records);
        row.validate().unwrap();
        assert_eq!(row.infeasible_fraction, 1.0);
        assert!(row.mean_minmax_energy_mj.is_nan());
        assert!(row.mean_t2_seconds.is_nan());
        assert!(row.mean_rho_active.is_nan());
        assert_eq!(row.idle_ratio, 1.0);
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![
            MetricsRow {
                iteration: 0,
                mean_reward: -2.5,
                mean_minmax_energy_mj: 2.5,
                infeasible_fraction: 0.0,
                active_ratio: 0.5,
                passive_ratio: 0.25,
                idle_ratio: 0.25,
                mean_rho_active: 60.0,
                mean_t2_seconds: 0.7,
            },
            MetricsRow {
                iteration: 1,
                mean_reward: -10.0,
                mean_minmax_energy_mj: f64::NAN,
                infeasible_fraction: 1.0,
                active_ratio: 0.0,
                passive_ratio: 0.0,
                idle_ratio: 1.0,
                mean_rho_active: f64::NAN,
                mean_t2_seconds: f64::NAN,
            },
        ];
        for row in &rows {
            append_metrics_row(&path, row).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "iteration,mean_reward,mean_minmax_energy_mj,infeasible_fraction,\
             active_ratio,passive_ratio,idle_ratio,mean_rho_active,mean_t2_seconds"
        ));
        assert_eq!(text.lines().count(), 3, "one header + two rows");
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], rows[0]);
        assert_eq!(back[1].iteration, 1);
        assert!(back[1].mean_minmax_energy_mj.is_nan());
    }

    #[test]
    fn truncate_keeps_only_earlier_iterations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        for i in 0..5 {
            let row = MetricsRow {
                iteration: i,
                mean_reward: -(i as f64),
                mean_minmax_energy_mj: 1.0,
                infeasible_fraction: 0.0,
                active_ratio: 0.0,
                passive_ratio: 1.0,
                idle_ratio: 0.0,
                mean_rho_active: f64::NAN,
                mean_t2_seconds: 0.5,
            };
            row.validate().unwrap();
            append_metrics_row(&path, &row).unwrap();
        }
        truncate_metrics(&path, 3).unwrap();
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.last().unwrap().iteration, 2);
        // Appending after truncation must not duplicate the header.
        append_metrics_row(
            &path,
            &MetricsRow {
                iteration: 3,
                mean_reward: 0.0,
                mean_minmax_energy_mj: 1.0,
                infeasible_fraction: 0.0,
                active_ratio: 0.0,
                passive_ratio: 1.0,
                idle_ratio: 0.0,
                mean_rho_active: f64::NAN,
                mean_t2_seconds: 0.5,
            },
        )
        .unwrap();
        assert_eq!(read_metrics(&path).unwrap().len(), 4);
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "iteration,wrong\n0,1\n").unwrap();
        assert!(matches!(
            read_metrics(&path),
            Err(HarnessError::SchemaMismatch { .. })
        ));
    }
}
