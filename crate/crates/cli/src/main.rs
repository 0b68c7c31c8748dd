use std::path::PathBuf;
use std::process::ExitCode;

use capa_cli::bench::{run_bench, BenchOptions};
use capa_cli::config::{
    OutputFormat, StreamSpec, SweepBlock, SweepScale, SweepVariable, CONFIG_ENV,
};
use capa_cli::run::{
    correlation, correlation_summary, dof_curve, log_ratios, solve_point, write_file, write_rows,
    write_solve_outputs, create_dir,
};
use capa_cli::sweep::{default_jobs, run_sweep};
use capa_cli::{CliError, ExperimentConfig};
use capa_core::Method;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "capa", version, about = "Beamforming experiments for continuous-aperture MIMO links")]
struct Cli {
    /// Configuration file; the bundled defaults are used when neither this
    /// nor the environment variable is set.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method once.
    Solve(Overrides),
    /// Run the configured methods across a parameter range.
    Sweep(SweepArgs),
    /// Spatial DoF estimates as the receiver moves away.
    Dof(DofArgs),
    /// Stream cross-correlation of the WMMSE solution.
    Correlate(Overrides),
    /// Single-threaded timing of WMMSE and Fourier-SVD.
    Bench(BenchArgs),
    /// Parse and check the configuration, then print it.
    ValidateConfig,
}

#[derive(Args, Default)]
struct Overrides {
    /// Methods to run (repeatable); replaces the configured list.
    #[arg(long = "method", value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long)]
    seed: Option<u64>,
    /// Integer, `auto-fourier` or `auto-dof`.
    #[arg(long)]
    streams: Option<StreamSpec>,
    /// Gauss-Legendre points per axis.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    power: Option<f64>,
    /// Carrier frequency in Hz.
    #[arg(long)]
    frequency: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output directory.
    #[arg(long)]
    output: Option<String>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarArg {
    Power,
    Aperture,
    Distance,
    Frequency,
    Spacing,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Swept variable; replaces the configured sweep together with
    /// --start/--stop/--steps.
    #[arg(long, value_enum, requires_all = ["start", "stop", "steps"])]
    var: Option<VarArg>,
    #[arg(long)]
    start: Option<f64>,
    #[arg(long)]
    stop: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Space the points logarithmically.
    #[arg(long)]
    log: bool,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct DofArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Smallest D²/A_R.
    #[arg(long, default_value_t = 1.0)]
    min_ratio: f64,
    /// Largest D²/A_R.
    #[arg(long, default_value_t = 100.0)]
    max_ratio: f64,
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Also count with this many uniform samples per axis.
    #[arg(long)]
    oracle: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// WMMSE iterations per run.
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 10)]
    bench_streams: usize,
    /// Carrier frequencies in Hz.
    #[arg(long, value_delimiter = ',', default_value = "2.4e9,5e9,7.8e9")]
    frequencies: Vec<f64>,
    /// Aperture areas in m².
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4")]
    areas: Vec<f64>,
    /// Charge channel construction to WMMSE instead of Fourier-SVD.
    #[arg(long)]
    swap_channel_accounting: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown method `{s}`; expected wmmse, fourier_svd, spda or dense_optimal"))
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if !self.methods.is_empty() {
            cfg.methods = self.methods.clone();
        }
        if let Some(s) = self.seed {
            cfg.solver.seed = s;
        }
        if let Some(s) = self.streams {
            cfg.solver.streams = s;
        }
        if let Some(m) = self.order {
            cfg.solver.order = m;
        }
        if let Some(p) = self.power {
            cfg.constants.transmit_power = p;
        }
        if let Some(f) = self.frequency {
            cfg.constants.frequency = f;
        }
        if let Some(n) = self.max_iter {
            cfg.solver.max_iter = n;
        }
        if let Some(o) = &self.output {
            cfg.output.path = o.clone();
        }
        if let Some(f) = self.format {
            cfg.output.format = match f {
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Json => OutputFormat::Json,
            };
        }
        cfg.validate()
    }
}

fn load(cli_config: &Option<PathBuf>, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(cli_config.as_deref())?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn fmt_rate(r: &Result<capa_core::SolveReport, CliError>) -> String {
    match r {
        Ok(rep) => format!("{:>10.4} bits/s/Hz  {:>4} iters  {:>10.1} ms", rep.rate_bits, rep.iterations, rep.wall_ms),
        Err(e) => format!("failed: {e}"),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ValidateConfig => {
            let cfg = ExperimentConfig::load(cli.config.as_deref())?;
            print!("{}", cfg.to_toml_string()?);
            eprintln!("configuration is valid");
            Ok(())
        }
        Command::Solve(o) => {
            let cfg = load(&cli.config, &o)?;
            let outcomes = solve_point(&cfg)?;
            for out in &outcomes {
                println!("{:<14} {}", out.method.as_str(), fmt_rate(&out.result));
            }
            write_solve_outputs(cfg.output.path.as_ref(), cfg.output.format, &outcomes)?;
            match outcomes.into_iter().find_map(|o| o.result.err()) {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Sweep(a) => {
            let mut cfg = load(&cli.config, &a.overrides)?;
            if let (Some(v), Some(start), Some(stop), Some(steps)) = (a.var, a.start, a.stop, a.steps) {
                let variable = match v {
                    VarArg::Power => SweepVariable::Power,
                    VarArg::Aperture => SweepVariable::Aperture,
                    VarArg::Distance => SweepVariable::Distance,
                    VarArg::Frequency => SweepVariable::Frequency,
                    VarArg::Spacing => SweepVariable::Spacing,
                };
                let scale = if a.log { SweepScale::Log } else { SweepScale::Linear };
                cfg.sweep = Some(SweepBlock::range(variable, start, stop, steps, scale));
            }
            let sweep = cfg.sweep.clone().ok_or_else(|| CliError::Field {
                field: "sweep".into(),
                message: "no sweep block in the configuration and no --var given".into(),
            })?;
            let rows = run_sweep(&cfg, &sweep, a.jobs.unwrap_or_else(default_jobs))?;
            for r in &rows {
                let rate = r.rate_bits.map_or("-".to_string(), |x| format!("{x:.4}"));
                println!("{}={:<12} {:<14} {:>10}  {}", r.sweep_var, r.value.unwrap_or(f64::NAN), r.method, rate, r.status);
            }
            write_rows(cfg.output.path.as_ref(), "sweep", cfg.output.format, &rows)
        }
        Command::Dof(a) => {
            let cfg = load(&cli.config, &a.overrides)?;
            let rows = dof_curve(&cfg, &log_ratios(a.min_ratio, a.max_ratio, a.count), a.oracle)?;
            for r in &rows {
                let oracle = r.dof_uniform.map_or("-".to_string(), |d| d.to_string());
                println!("F={:<10.3} D={:<8.3} DoF={:<4} uniform={:<4} far-field={:.2}", r.ratio, r.distance, r.dof_quadrature, oracle, r.dof_far_field);
            }
            write_rows(cfg.output.path.as_ref(), "dof", cfg.output.format, &rows)
        }
        Command::Correlate(o) => {
            let cfg = load(&cli.config, &o)?;
            let (report, map) = correlation(&cfg)?;
            let summary = correlation_summary(&map);
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            let dir: &std::path::Path = cfg.output.path.as_ref();
            create_dir(dir)?;
            write_file(&dir.join("correlation.csv"), map.to_csv())?;
            let text = serde_json::to_string_pretty(&serde_json::json!({ "summary": summary, "report": report }))
                .map_err(|e| CliError::Output(e.to_string()))?;
            write_file(&dir.join("correlation.json"), text + "\n")
        }
        Command::Bench(a) => {
            let cfg = load(&cli.config, &a.overrides)?;
            let opts = BenchOptions {
                frequencies: a.frequencies,
                areas: a.areas,
                repeats: a.repeats,
                iterations: a.iterations,
                streams: a.bench_streams,
                order: a.overrides.order.unwrap_or(10),
                swap_channel_accounting: a.swap_channel_accounting,
            };
            let table = run_bench(&cfg, &opts)?;
            let csv = table.to_csv()?;
            print!("{csv}");
            let dir: &std::path::Path = cfg.output.path.as_ref();
            create_dir(dir)?;
            write_file(&dir.join("bench.csv"), csv)?;
            write_rows(dir, "bench_cells", OutputFormat::Csv, &table.cells.iter().map(|c| BenchRow {
                frequency_hz: c.frequency,
                area_m2: c.area,
                method: c.method.to_string(),
                median_ms: c.median_ms,
                cv: c.cv,
                repeats: c.samples_ms.len(),
            }).collect::<Vec<_>>())
        }
    }
}

#[derive(serde::Serialize)]
struct BenchRow {
    frequency_hz: f64,
    area_m2: f64,
    method: String,
    median_ms: f64,
    cv: f64,
    repeats: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
