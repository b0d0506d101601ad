//! Runs one base config across the values of a single axis.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ScheduleSpec, Strategy};
use crate::experiment::{self, Summary};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Eps,
    Seed,
    Lr,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Eps => "eps",
            Axis::Seed => "seed",
            Axis::Lr => "lr",
        }
    }
}

pub const AGGREGATE_HEADER: [&str; 8] = ["axis", "value", "status", "final_loss", "final_l2re", "steps", "total_epochs", "dir"];

/// `base` with one axis set to `value`.
///
/// For `eps` a classical run trains at `value`; a path run keeps the schedule
/// entries above `value` and ends there. For `lr` every segment gets the rate.
pub fn cell_config(base: &ExperimentConfig, axis: Axis, value: f64) -> Result<ExperimentConfig, CliError> {
    let mut c = base.clone();
    match axis {
        Axis::Seed => {
            if !(value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                return Err(CliError::Config(format!("seed values must be non-negative integers, got {value}")));
            }
            c.seed = value as u64;
        }
        Axis::Lr => {
            if !(value > 0.0) {
                return Err(CliError::Config(format!("learning rates must be positive, got {value}")));
            }
            c.set_lr(value);
        }
        Axis::Eps => {
            let values = if c.strategy == Strategy::Classical {
                vec![value]
            } else {
                let mut v: Vec<f64> = c.schedule.resolve()?.values().iter().copied().filter(|&e| e > value).collect();
                v.push(value);
                v
            };
            c.schedule = ScheduleSpec::Values(values);
        }
    }
    c.validate()?;
    Ok(c)
}

fn cell_dir(out: &Path, axis: Axis, value: f64) -> PathBuf {
    out.join(format!("{}-{value}", axis.name()))
}

/// One finished cell of a sweep.
#[derive(Clone, Debug)]
pub struct Cell {
    pub value: f64,
    pub dir: PathBuf,
    pub summary: Summary,
}

/// Runs every cell with at most `jobs` in flight and writes `aggregate.csv`
/// in value order. A failing cell is recorded and does not stop the others.
pub fn sweep(base: &ExperimentConfig, axis: Axis, values: &[f64], jobs: usize, out: &Path) -> Result<Vec<Cell>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let configs = values.iter().map(|&v| cell_config(base, axis, v)).collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(out)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Cell>>> = Mutex::new(vec![None; values.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, values.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= values.len() {
                    break;
                }
                let dir = cell_dir(out, axis, values[i]);
                let summary = match experiment::run(&configs[i], Some(&dir)) {
                    Ok(s) => s,
                    // the failure summary is on disk; fall back to a bare record if it is not
                    Err(e) => Summary::read(&dir.join("summary.json")).unwrap_or_else(|_| {
                        panic!("cell {} failed and left no summary: {e}", values[i]);
                    }),
                };
                results.lock().unwrap()[i] = Some(Cell { value: values[i], dir, summary });
            });
        }
    });
    let cells: Vec<Cell> = results.into_inner().unwrap().into_iter().map(|c| c.expect("every cell ran")).collect();
    write_aggregate(&out.join("aggregate.csv"), axis, &cells)?;
    Ok(cells)
}

fn write_aggregate(path: &Path, axis: Axis, cells: &[Cell]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for c in cells {
        let s = &c.summary;
        w.write_record([
            axis.name().to_string(),
            c.value.to_string(),
            s.status.clone(),
            s.final_loss.to_string(),
            s.final_l2re.map(|v| v.to_string()).unwrap_or_default(),
            s.steps.to_string(),
            s.total_epochs.to_string(),
            c.dir.display().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
