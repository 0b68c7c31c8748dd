//! Single-threaded timing of WMMSE against Fourier-SVD over a grid of
//! carrier frequencies and aperture areas.

use std::time::Instant;

use capa_core::{build_wavenumber_channel, fourier_svd_solve, solve, Method, SolverConfig};
use serde::Serialize;

use crate::config::{ExperimentConfig, SweepVariable};
use crate::error::CliError;
use crate::run::Link;
use crate::sweep::apply;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub frequencies: Vec<f64>,
    pub areas: Vec<f64>,
    pub repeats: usize,
    pub iterations: usize,
    pub streams: usize,
    pub order: usize,
    /// Charge channel construction to WMMSE instead of Fourier-SVD.
    pub swap_channel_accounting: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            frequencies: vec![2.4e9, 5e9, 7.8e9],
            areas: vec![0.2, 0.3, 0.4],
            repeats: 5,
            iterations: 100,
            streams: 10,
            order: 10,
            swap_channel_accounting: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub frequency: f64,
    pub area: f64,
    pub method: Method,
    pub median_ms: f64,
    /// Standard deviation over mean of the repeats.
    pub cv: f64,
    pub samples_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchTable {
    pub frequencies: Vec<f64>,
    pub areas: Vec<f64>,
    pub cells: Vec<BenchCell>,
}

impl BenchTable {
    pub fn get(&self, frequency: f64, area: f64, method: Method) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.frequency == frequency && c.area == area && c.method == method)
    }

    /// Median times of one method over the whole grid.
    pub fn medians(&self, method: Method) -> Vec<f64> {
        self.cells.iter().filter(|c| c.method == method).map(|c| c.median_ms).collect()
    }

    /// Wide table: one row per frequency, one `<method>_A<area>_ms` column
    /// per (area, method).
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["frequency_hz".to_string()];
        for a in &self.areas {
            for m in [Method::Wmmse, Method::FourierSvd] {
                header.push(format!("{m}_A{a}_ms"));
            }
        }
        let err = |e: csv::Error| CliError::Output(format!("cannot encode CSV: {e}"));
        w.write_record(&header).map_err(err)?;
        for &f in &self.frequencies {
            let mut row = vec![f.to_string()];
            for &a in &self.areas {
                for m in [Method::Wmmse, Method::FourierSvd] {
                    row.push(self.get(f, a, m).map_or(String::new(), |c| format!("{:.3}", c.median_ms)));
                }
            }
            w.write_record(&row).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if mean > 0.0 {
        var.sqrt() / mean
    } else {
        0.0
    }
}

/// Restores the global linear-algebra parallelism on drop.
struct SequentialGuard(faer::Par);

impl SequentialGuard {
    fn new() -> Self {
        let prev = faer::get_global_parallelism();
        faer::set_global_parallelism(faer::Par::Seq);
        Self(prev)
    }
}

impl Drop for SequentialGuard {
    fn drop(&mut self) {
        faer::set_global_parallelism(self.0);
    }
}

/// Times both methods on every (frequency, area) cell of the grid, using
/// the rest of `base` (distance, noise, power, seed) unchanged. Cells run
/// one after another on a single thread.
pub fn run_bench(base: &ExperimentConfig, opts: &BenchOptions) -> Result<BenchTable, CliError> {
    if opts.repeats == 0 || opts.iterations == 0 || opts.streams == 0 || opts.order < 2 {
        return Err(CliError::Field {
            field: "bench".into(),
            message: "repeats, iterations and streams must be at least 1 and order at least 2".into(),
        });
    }
    if opts.frequencies.is_empty() || opts.areas.is_empty() {
        return Err(CliError::Field {
            field: "bench".into(),
            message: "frequency and area grids must not be empty".into(),
        });
    }
    let _seq = SequentialGuard::new();
    let mut table = BenchTable {
        frequencies: opts.frequencies.clone(),
        areas: opts.areas.clone(),
        cells: Vec::new(),
    };
    for &frequency in &opts.frequencies {
        for &area in &opts.areas {
            let cfg = apply(&apply(base, SweepVariable::Frequency, frequency), SweepVariable::Aperture, area);
            cfg.validate()?;
            let link = Link::new(&cfg)?;
            let scfg = SolverConfig {
                fixed_iterations: true,
                ..SolverConfig::new(opts.streams)
                    .with_init(cfg.solver.init_mode())
                    .with_max_iter(opts.iterations)
                    .with_threshold(cfg.solver.threshold)
            };
            let (mut wmmse, mut fourier) = (Vec::new(), Vec::new());
            for _ in 0..opts.repeats {
                let t0 = Instant::now();
                let chan = link.sampled_channel(opts.order)?;
                let channel_ms = t0.elapsed().as_secs_f64() * 1e3;

                let t1 = Instant::now();
                solve(&chan, &scfg)?;
                let solve_ms = t1.elapsed().as_secs_f64() * 1e3;

                let t2 = Instant::now();
                let wchan = build_wavenumber_channel(&chan);
                let project_ms = t2.elapsed().as_secs_f64() * 1e3;
                let streams = opts.streams.min(wchan.tx_modes().min(wchan.rx_modes()));
                let t3 = Instant::now();
                fourier_svd_solve(&wchan, streams, &link.constants)?;
                let svd_ms = t3.elapsed().as_secs_f64() * 1e3;

                if opts.swap_channel_accounting {
                    wmmse.push(channel_ms + solve_ms);
                    fourier.push(svd_ms);
                } else {
                    wmmse.push(solve_ms);
                    fourier.push(project_ms + svd_ms);
                }
            }
            for (method, samples) in [(Method::Wmmse, wmmse), (Method::FourierSvd, fourier)] {
                table.cells.push(BenchCell {
                    frequency,
                    area,
                    method,
                    median_ms: median(&samples),
                    cv: coefficient_of_variation(&samples),
                    samples_ms: samples,
                });
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((coefficient_of_variation(&[1.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn table_shape() {
        let opts = BenchOptions {
            frequencies: vec![2.4e9],
            areas: vec![0.05, 0.1],
            repeats: 2,
            iterations: 3,
            streams: 2,
            order: 4,
            swap_channel_accounting: false,
        };
        let table = run_bench(&ExperimentConfig::paper_default(), &opts).unwrap();
        assert_eq!(table.cells.len(), 4);
        let csv = table.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "frequency_hz,wmmse_A0.05_ms,fourier_svd_A0.05_ms,wmmse_A0.1_ms,fourier_svd_A0.1_ms"
        );
        assert!(lines.next().unwrap().starts_with("2400000000,"));
    }
}
