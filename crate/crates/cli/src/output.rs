//! Result tables on disk.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use rare_core::ptraj::{snr_breakdown_with, TrajectoryModel};
use rare_core::scene::time_grid;

use crate::config::ExperimentConfig;
use crate::harness::{design_trajectory, point_scene, HarnessError, Result, ResultRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(format!("`{s}` is not csv or jsonl")),
        }
    }
}

pub fn write_rows<W: Write, R: Serialize>(rows: &[R], format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut w = BufWriter::new(out);
            for r in rows {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Writes sweep rows with the fixed column order of [`ResultRow`].
pub fn emit_results(rows: &[ResultRow], format: Format, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(HarnessError::NoRows);
    }
    write_rows(rows, format, File::create(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub p_tx: f64,
    /// Detuning of the reference field, rad/s.
    pub delta: f64,
    pub snr_itn: f64,
    pub snr_etn: f64,
    pub snr_total: f64,
}

/// Designed trajectory of the configured mode at the first sweep value,
/// with its per-sample SNR decomposition at the nominal target range.
pub fn trajectory_table(cfg: &ExperimentConfig) -> Result<Vec<TrajectoryRow>> {
    cfg.check()?;
    let scene = point_scene(cfg, cfg.sweep.values[0])?;
    let grid = cfg.trajectory_grid;
    let traj = design_trajectory(cfg.trajectory_mode, &scene, grid)?;
    let model = TrajectoryModel::new(&scene, grid)?;
    let snr = snr_breakdown_with(&model, &traj.samples);
    let t = time_grid(grid, scene.waveform.symbol_duration);
    Ok((0..grid)
        .map(|s| TrajectoryRow {
            t: t[s],
            p_tx: traj.samples[s],
            delta: model.delta[s],
            snr_itn: snr.snr_itn[s],
            snr_etn: snr.snr_etn[s],
            snr_total: snr.snr_total[s],
        })
        .collect())
}
