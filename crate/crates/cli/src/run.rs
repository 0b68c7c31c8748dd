//! Single-configuration runs: every requested method on one link, plus the
//! DoF curve and stream-correlation reports.

use std::path::Path;
use std::time::Instant;

use capa_core::{
    build_grid, build_sampled_channel, build_spda_channel, build_wavenumber_channel,
    dense_optimal_solve, dof_estimate, dof_far_field, dof_uniform_sampling, fourier_svd_solve,
    gauss_legendre, metasurface_rate, reconstruct_continuous, solve, spda_svd_solve,
    stream_correlation, ApertureGeometry, CorrelationMap, DenseOptions, DofOptions, DofWeighting,
    Method, ModeOrders, PhysicalConstants, SampledChannel, SolveReport, SolverConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{AutoStreams, ExperimentConfig, OutputFormat, StreamSpec};
use crate::error::CliError;

/// Result of one method on one configuration.
#[derive(Debug)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: Result<SolveReport, CliError>,
}

/// One line of the combined results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_var: String,
    pub value: Option<f64>,
    pub method: String,
    pub rate_bits: Option<f64>,
    pub iters: Option<usize>,
    pub wall_ms: Option<f64>,
    pub status: String,
}

impl ResultRow {
    pub fn from_outcome(sweep_var: &str, value: Option<f64>, outcome: &MethodOutcome) -> Self {
        let (rate_bits, iters, wall_ms, status) = match &outcome.result {
            Ok(r) => (Some(r.rate_bits), Some(r.iterations), Some(r.wall_ms), "ok".to_string()),
            Err(e) => (None, None, None, format!("error: {e}")),
        };
        Self {
            sweep_var: sweep_var.to_string(),
            value,
            method: outcome.method.to_string(),
            rate_bits,
            iters,
            wall_ms,
            status,
        }
    }

    pub fn failed(sweep_var: &str, value: Option<f64>, method: Method, error: &CliError) -> Self {
        Self {
            sweep_var: sweep_var.to_string(),
            value,
            method: method.to_string(),
            rate_bits: None,
            iters: None,
            wall_ms: None,
            status: format!("error: {error}"),
        }
    }
}

/// Link description derived from a configuration.
pub struct Link {
    pub constants: PhysicalConstants,
    pub tx: ApertureGeometry,
    pub rx: ApertureGeometry,
}

impl Link {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let link = Self {
            constants: cfg.constants(),
            tx: cfg.tx.aperture(),
            rx: cfg.rx.aperture(),
        };
        link.constants.validate()?;
        link.tx.validate()?;
        link.rx.validate()?;
        Ok(link)
    }

    pub fn sampled_channel(&self, order: usize) -> Result<SampledChannel, CliError> {
        let rule = gauss_legendre(order)?;
        Ok(build_sampled_channel(
            &build_grid(&self.tx, &rule)?,
            &build_grid(&self.rx, &rule)?,
            &self.constants,
        )?)
    }

    /// `min(M̃_R, M̃_T)`.
    pub fn fourier_streams(&self) -> usize {
        let lambda = self.constants.wavelength();
        ModeOrders::for_aperture(&self.tx, lambda)
            .count()
            .min(ModeOrders::for_aperture(&self.rx, lambda).count())
    }

    /// Smallest quadrature order that resolves every retained Fourier mode,
    /// `2 · max ceil(L/λ) + 2`.
    pub fn fourier_resolving_order(&self) -> usize {
        let lambda = self.constants.wavelength();
        let widest = [ModeOrders::for_aperture(&self.tx, lambda), ModeOrders::for_aperture(&self.rx, lambda)]
            .iter()
            .flat_map(|o| [o.x, o.y])
            .max()
            .unwrap_or(0);
        2 * widest + 2
    }
}

/// Quadrature order for the Fourier projection: the configured value, else
/// the solver order raised to what the mode set needs.
pub fn fourier_order(cfg: &ExperimentConfig, link: &Link) -> usize {
    cfg.solver
        .fourier_order
        .unwrap_or_else(|| cfg.solver.order.max(link.fourier_resolving_order()))
}

/// Stream count requested by the configuration before per-method caps.
pub fn requested_streams(cfg: &ExperimentConfig, link: &Link) -> Result<usize, CliError> {
    Ok(match cfg.solver.streams {
        StreamSpec::Count(n) => n,
        StreamSpec::Auto(AutoStreams::AutoFourier) => link.fourier_streams(),
        StreamSpec::Auto(AutoStreams::AutoDof) => {
            let opts = DofOptions {
                order: cfg.solver.order,
                threshold_db: cfg.solver.dof_threshold_db,
                weighting: DofWeighting::SquareRoot,
            };
            dof_estimate(&link.tx, &link.rx, &link.constants, &opts)?.max(1)
        }
    })
}

pub fn solver_config(cfg: &ExperimentConfig, streams: usize) -> SolverConfig {
    let mut sc = SolverConfig::new(streams)
        .with_init(cfg.solver.init_mode())
        .with_max_iter(cfg.solver.max_iter)
        .with_threshold(cfg.solver.threshold);
    sc.fixed_iterations = cfg.solver.fixed_iterations;
    sc
}

/// Runs every configured method on one link. The quadrature-sampled
/// channel is built once and shared by WMMSE and Fourier-SVD.
pub fn solve_point(cfg: &ExperimentConfig) -> Result<Vec<MethodOutcome>, CliError> {
    let link = Link::new(cfg)?;
    let requested = requested_streams(cfg, &link)?;
    let mut chan: Option<SampledChannel> = None;
    let mut outcomes = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let result = match method {
            Method::Wmmse => shared_channel(&mut chan, &link, cfg.solver.order)
                .and_then(|ch| run_wmmse(cfg, &link, ch, requested)),
            Method::FourierSvd => {
                let order = fourier_order(cfg, &link);
                if order == cfg.solver.order {
                    shared_channel(&mut chan, &link, order).and_then(|ch| run_fourier(cfg, &link, ch, requested))
                } else {
                    link.sampled_channel(order).and_then(|ch| run_fourier(cfg, &link, &ch, requested))
                }
            }
            Method::Spda => run_spda(cfg, &link),
            Method::DenseOptimal => run_dense(cfg, &link),
            Method::WmmseCorrelated => Err(CliError::Field {
                field: "methods".into(),
                message: "wmmse_correlated is not available from the command line".into(),
            }),
        };
        outcomes.push(MethodOutcome { method, result });
    }
    Ok(outcomes)
}

fn shared_channel<'a>(
    slot: &'a mut Option<SampledChannel>,
    link: &Link,
    order: usize,
) -> Result<&'a SampledChannel, CliError> {
    if slot.is_none() {
        *slot = Some(link.sampled_channel(order)?);
    }
    Ok(slot.as_ref().expect("channel was just built"))
}

/// Metasurface pitch and element area in metres, if configured.
fn metasurface(cfg: &ExperimentConfig, link: &Link) -> Option<(f64, f64)> {
    let lambda = link.constants.wavelength();
    cfg.metasurface
        .spacing
        .map(|d| (d * lambda, (cfg.metasurface.element_side * lambda).powi(2)))
}

fn annotate(report: &mut SolveReport, extra: serde_json::Value) {
    let base = std::mem::take(&mut report.config);
    let mut obj = match base {
        serde_json::Value::Object(m) => m,
        serde_json::Value::Null => serde_json::Map::new(),
        other => {
            let mut m = serde_json::Map::new();
            m.insert("solver".into(), other);
            m
        }
    };
    if let serde_json::Value::Object(e) = extra {
        obj.extend(e);
    }
    report.config = serde_json::Value::Object(obj);
}

fn run_wmmse(cfg: &ExperimentConfig, link: &Link, chan: &SampledChannel, requested: usize) -> Result<SolveReport, CliError> {
    let streams = requested.min(chan.tx_len());
    let sol = solve(chan, &solver_config(cfg, streams))?;
    let mut report = sol.report;
    annotate(&mut report, json!({ "order": cfg.solver.order }));
    if let Some((spacing, area)) = metasurface(cfg, link) {
        let rate = metasurface_rate(&link.tx, &link.rx, &link.constants, spacing, area, |s, _| {
            reconstruct_continuous(&sol.beamformer, chan, s)
        })?;
        let extra = json!({ "continuous_rate_bits": report.rate_bits, "metasurface_spacing": cfg.metasurface.spacing });
        annotate(&mut report, extra);
        report.rate_bits = rate;
    }
    Ok(report)
}

fn run_fourier(cfg: &ExperimentConfig, link: &Link, chan: &SampledChannel, requested: usize) -> Result<SolveReport, CliError> {
    let started = Instant::now();
    let wchan = build_wavenumber_channel(chan);
    let streams = requested.min(wchan.tx_modes().min(wchan.rx_modes()));
    let result = fourier_svd_solve(&wchan, streams, &link.constants)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let mut report = result.to_report();
    report.wall_ms = wall_ms;
    annotate(
        &mut report,
        json!({
            "order": fourier_order(cfg, link),
            "tx_modes": wchan.tx_modes(),
            "rx_modes": wchan.rx_modes(),
        }),
    );
    if let Some((spacing, area)) = metasurface(cfg, link) {
        let coeffs = result.beamformer();
        let rate = metasurface_rate(&link.tx, &link.rx, &link.constants, spacing, area, |_, p| {
            Ok(wchan.evaluate(coeffs.as_ref(), p[0], p[1]))
        })?;
        let extra = json!({ "continuous_rate_bits": report.rate_bits, "metasurface_spacing": cfg.metasurface.spacing });
        annotate(&mut report, extra);
        report.rate_bits = rate;
    }
    Ok(report)
}

fn run_spda(cfg: &ExperimentConfig, link: &Link) -> Result<SolveReport, CliError> {
    let started = Instant::now();
    let dchan = build_spda_channel(&link.tx, &link.rx, &link.constants)?;
    let available = dchan.tx.len().min(dchan.rx.len());
    let streams = match cfg.solver.streams {
        StreamSpec::Count(n) => n.min(available),
        StreamSpec::Auto(_) => available,
    };
    let result = spda_svd_solve(&dchan, streams, &link.constants)?;
    let mut report = result.to_report();
    report.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    annotate(&mut report, json!({ "tx_elements": dchan.tx.len(), "rx_elements": dchan.rx.len() }));
    Ok(report)
}

pub fn dense_options(cfg: &ExperimentConfig) -> DenseOptions {
    DenseOptions {
        samples_per_axis: cfg.solver.dense_samples,
        streams: match cfg.solver.streams {
            StreamSpec::Count(n) => Some(n),
            StreamSpec::Auto(_) => None,
        },
        sample_budget: cfg.solver.dense_budget,
        seed: cfg.solver.seed,
        ..DenseOptions::default()
    }
}

fn run_dense(cfg: &ExperimentConfig, link: &Link) -> Result<SolveReport, CliError> {
    let opts = dense_options(cfg);
    let result = dense_optimal_solve(&link.tx, &link.rx, &link.constants, &opts)?;
    let mut report = result.to_report();
    let lambda = link.constants.wavelength();
    let per_axis = opts.samples_per_axis.unwrap_or_else(|| {
        DenseOptions::default_samples(&link.tx, lambda).max(DenseOptions::default_samples(&link.rx, lambda))
    });
    annotate(&mut report, json!({ "samples_per_axis": per_axis }));
    Ok(report)
}

/// Writes one pretty-printed JSON report per successful method and the
/// combined table (`solve.csv` or `solve.json`) into `dir`.
pub fn write_solve_outputs(dir: &Path, format: OutputFormat, outcomes: &[MethodOutcome]) -> Result<(), CliError> {
    create_dir(dir)?;
    for o in outcomes {
        if let Ok(report) = &o.result {
            let path = dir.join(format!("{}.json", o.method));
            let text = serde_json::to_string_pretty(report)
                .map_err(|e| CliError::Output(format!("cannot encode report: {e}")))?;
            write_file(&path, text + "\n")?;
        }
    }
    let rows: Vec<ResultRow> = outcomes.iter().map(|o| ResultRow::from_outcome("none", None, o)).collect();
    write_rows(dir, "solve", format, &rows)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// RFC 4180 CSV with the header taken from the record's field order.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Output(format!("cannot encode CSV: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Output(format!("cannot encode CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
}

/// Writes `rows` to `dir/stem.csv` or `dir/stem.json`.
pub fn write_rows<T: Serialize>(dir: &Path, stem: &str, format: OutputFormat, rows: &[T]) -> Result<(), CliError> {
    create_dir(dir)?;
    match format {
        OutputFormat::Csv => write_file(&dir.join(format!("{stem}.csv")), rows_to_csv(rows)?),
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(rows).map_err(|e| CliError::Output(e.to_string()))?;
            write_file(&dir.join(format!("{stem}.json")), text + "\n")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofRow {
    /// `D² / A_R`.
    pub ratio: f64,
    pub distance: f64,
    pub dof_quadrature: usize,
    pub dof_uniform: Option<usize>,
    pub dof_far_field: f64,
}

/// DoF estimates with the receiver moved along the transmit normal to
/// distance `sqrt(F · A_R)` for each ratio `F`.
pub fn dof_curve(cfg: &ExperimentConfig, ratios: &[f64], oracle_samples: Option<usize>) -> Result<Vec<DofRow>, CliError> {
    let link = Link::new(cfg)?;
    let opts = DofOptions {
        order: cfg.solver.order,
        threshold_db: cfg.solver.dof_threshold_db,
        weighting: DofWeighting::SquareRoot,
    };
    let normal = link.tx.normal();
    ratios
        .iter()
        .map(|&ratio| {
            if !(ratio.is_finite() && ratio > 0.0) {
                return Err(CliError::Field {
                    field: "ratios".into(),
                    message: format!("must be positive, got {ratio}"),
                });
            }
            let distance = (ratio * link.rx.area()).sqrt();
            let mut rx = link.rx.clone();
            rx.center = std::array::from_fn(|k| link.tx.center[k] + distance * normal[k]);
            let dof_quadrature = dof_estimate(&link.tx, &rx, &link.constants, &opts)?;
            let dof_uniform = oracle_samples
                .map(|s| dof_uniform_sampling(&link.tx, &rx, &link.constants, s, opts.threshold_db))
                .transpose()?;
            Ok(DofRow {
                ratio,
                distance,
                dof_quadrature,
                dof_uniform,
                dof_far_field: dof_far_field(link.tx.area(), rx.area(), link.constants.wavelength(), distance),
            })
        })
        .collect()
}

/// `count` ratios spaced logarithmically over `[lo, hi]`.
pub fn log_ratios(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Solves WMMSE on the configured link and returns the stream
/// cross-correlation map of the result.
pub fn correlation(cfg: &ExperimentConfig) -> Result<(SolveReport, CorrelationMap), CliError> {
    let link = Link::new(cfg)?;
    let chan = link.sampled_channel(cfg.solver.order)?;
    let streams = requested_streams(cfg, &link)?.min(chan.tx_len());
    let sol = solve(&chan, &solver_config(cfg, streams))?;
    let map = stream_correlation(sol.beamformer.w.as_ref(), &chan, link.constants.noise_power)?;
    Ok((sol.report, map))
}

/// Headline numbers of a correlation map.
pub fn correlation_summary(map: &CorrelationMap) -> serde_json::Value {
    json!({
        "streams": map.streams(),
        "rate_bits": map.rate_bits,
        "parallel_rate_bits": map.parallel_rate(),
        "leakage_ratio": map.leakage_ratio(1e-6),
    })
}
