//! Parameter sweeps: one configuration per sweep value, solved on a worker
//! pool, flattened into one table row per (value, method).

use rayon::prelude::*;

use crate::config::{ExperimentConfig, SweepBlock, SweepVariable};
use crate::error::CliError;
use crate::run::{solve_point, ResultRow};

/// Copy of `base` with the swept quantity set to `value`.
pub fn apply(base: &ExperimentConfig, variable: SweepVariable, value: f64) -> ExperimentConfig {
    let mut cfg = base.clone();
    match variable {
        SweepVariable::Power => cfg.constants.transmit_power = value,
        SweepVariable::Frequency => cfg.constants.frequency = value,
        SweepVariable::Aperture => {
            let side = value.sqrt();
            for g in [&mut cfg.tx, &mut cfg.rx] {
                g.lx = side;
                g.ly = side;
            }
        }
        SweepVariable::Distance => {
            let tx = cfg.tx.aperture();
            let n = tx.normal();
            cfg.rx.center = std::array::from_fn(|k| tx.center[k] + value * n[k]);
        }
        SweepVariable::Spacing => cfg.metasurface.spacing = Some(value),
    }
    cfg
}

/// Default worker count: the number of available cores.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs the sweep described by `sweep` on `jobs` workers. Failed points are
/// recorded in the `status` column and do not stop the sweep.
pub fn run_sweep(base: &ExperimentConfig, sweep: &SweepBlock, jobs: usize) -> Result<Vec<ResultRow>, CliError> {
    let mut cfg = base.clone();
    cfg.sweep = Some(sweep.clone());
    cfg.validate()?;
    let points = sweep.points();
    let name = sweep.variable.as_str();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Output(format!("cannot start worker pool: {e}")))?;
    let per_point: Vec<Vec<ResultRow>> = pool.install(|| {
        points
            .par_iter()
            .map(|&value| {
                let point = apply(base, sweep.variable, value);
                match point.validate().and_then(|_| solve_point(&point)) {
                    Ok(outcomes) => outcomes
                        .iter()
                        .map(|o| ResultRow::from_outcome(name, Some(value), o))
                        .collect(),
                    Err(e) => base
                        .methods
                        .iter()
                        .map(|&m| ResultRow::failed(name, Some(value), m, &e))
                        .collect(),
                }
            })
            .collect()
    });
    Ok(per_point.into_iter().flatten().collect())
}
