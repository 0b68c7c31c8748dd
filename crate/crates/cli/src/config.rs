//! Experiment configuration: a TOML document with constants, the two
//! aperture poses, the methods to run and solver, sweep and output blocks.

use std::path::Path;

use capa_core::{ApertureGeometry, InitMode, Method, PhysicalConstants};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the configuration file used when no
/// `--config` flag is given.
pub const CONFIG_ENV: &str = "CAPA_CONFIG";

/// Bundled defaults: two 0.5 m × 0.5 m apertures facing each other 10 m
/// apart at 2.4 GHz.
pub const PAPER_DEFAULT: &str = include_str!("../configs/paper_default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub constants: ConstantsBlock,
    pub tx: GeometryBlock,
    pub rx: GeometryBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub metasurface: MetasurfaceBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Wmmse, Method::FourierSvd, Method::Spda, Method::DenseOptimal]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsBlock {
    /// Carrier frequency in Hz.
    pub frequency: f64,
    pub speed_of_light: f64,
    pub impedance: f64,
    pub noise_power: f64,
    pub transmit_power: f64,
    /// Converts `transmit_power` into the units of the channel (mA² → A²).
    pub power_scale: f64,
}

impl Default for ConstantsBlock {
    fn default() -> Self {
        PhysicalConstants::default().into()
    }
}

impl From<PhysicalConstants> for ConstantsBlock {
    fn from(c: PhysicalConstants) -> Self {
        Self {
            frequency: c.frequency,
            speed_of_light: c.speed_of_light,
            impedance: c.impedance,
            noise_power: c.noise_power,
            transmit_power: c.transmit_power,
            power_scale: c.power_scale,
        }
    }
}

impl ConstantsBlock {
    pub fn physical(&self) -> PhysicalConstants {
        PhysicalConstants {
            frequency: self.frequency,
            speed_of_light: self.speed_of_light,
            impedance: self.impedance,
            noise_power: self.noise_power,
            transmit_power: self.transmit_power,
            power_scale: self.power_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    #[serde(rename = "L_x")]
    pub lx: f64,
    #[serde(rename = "L_y")]
    pub ly: f64,
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default = "default_polarization")]
    pub polarization: [f64; 3],
}

fn default_polarization() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

impl GeometryBlock {
    pub fn aperture(&self) -> ApertureGeometry {
        ApertureGeometry {
            lx: self.lx,
            ly: self.ly,
            center: self.center,
            alpha: self.alpha,
            beta: self.beta,
            phi: self.phi,
            polarization: self.polarization,
        }
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
}

/// Number of data streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StreamSpec {
    Count(usize),
    Auto(AutoStreams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoStreams {
    /// `min(M̃_R, M̃_T)` Fourier modes.
    AutoFourier,
    /// Numeric DoF estimate at the solver's quadrature order.
    AutoDof,
}

impl std::str::FromStr for StreamSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto-fourier" => Ok(StreamSpec::Auto(AutoStreams::AutoFourier)),
            "auto-dof" => Ok(StreamSpec::Auto(AutoStreams::AutoDof)),
            _ => s
                .parse::<usize>()
                .map(StreamSpec::Count)
                .map_err(|_| format!("expected a positive integer, `auto-fourier` or `auto-dof`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Random,
    MatchedFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    /// Gauss-Legendre points per axis (M).
    pub order: usize,
    /// Quadrature order used to project the channel onto Fourier modes.
    /// When absent, `order` raised to `2 · max ceil(L/λ) + 2` so that every
    /// retained mode is resolved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier_order: Option<usize>,
    pub streams: StreamSpec,
    pub threshold: f64,
    pub max_iter: usize,
    /// Run exactly `max_iter` WMMSE steps.
    pub fixed_iterations: bool,
    pub seed: u64,
    pub init: InitKind,
    /// Uniform samples per axis for the dense reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_samples: Option<usize>,
    pub dense_budget: usize,
    pub dof_threshold_db: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            order: 10,
            fourier_order: None,
            streams: StreamSpec::Auto(AutoStreams::AutoFourier),
            threshold: 1e-6,
            max_iter: 100,
            fixed_iterations: false,
            seed: 0,
            init: InitKind::Random,
            dense_samples: None,
            dense_budget: 4096,
            dof_threshold_db: 10.0,
        }
    }
}

impl SolverBlock {
    pub fn init_mode(&self) -> InitMode {
        match self.init {
            InitKind::Random => InitMode::Random { seed: self.seed },
            InitKind::MatchedFilter => InitMode::MatchedFilter,
        }
    }
}

/// Discrete metasurface realisation of the continuous beamformers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetasurfaceBlock {
    /// Element pitch in wavelengths. When set, WMMSE and Fourier-SVD rates
    /// are evaluated on the metasurface instead of the continuous aperture.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    /// Element edge length in wavelengths.
    pub element_side: f64,
}

impl Default for MetasurfaceBlock {
    fn default() -> Self {
        Self {
            spacing: None,
            element_side: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Transmit power, configuration units.
    Power,
    /// Area of both apertures in m², kept square.
    Aperture,
    /// Distance between the aperture centres along the Tx normal, metres.
    Distance,
    /// Carrier frequency in Hz.
    Frequency,
    /// Metasurface element pitch in wavelengths.
    Spacing,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariable::Power => "power",
            SweepVariable::Aperture => "aperture",
            SweepVariable::Distance => "distance",
            SweepVariable::Frequency => "frequency",
            SweepVariable::Spacing => "spacing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub variable: SweepVariable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default)]
    pub scale: SweepScale,
    /// Explicit points; replaces `start`/`stop`/`steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl SweepBlock {
    pub fn range(variable: SweepVariable, start: f64, stop: f64, steps: usize, scale: SweepScale) -> Self {
        Self {
            variable,
            start: Some(start),
            stop: Some(stop),
            steps: Some(steps),
            scale,
            values: None,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        let (Some(a), Some(b), Some(n)) = (self.start, self.stop, self.steps) else {
            return Vec::new();
        };
        if n == 1 {
            return vec![a];
        }
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                match self.scale {
                    SweepScale::Linear => a + t * (b - a),
                    SweepScale::Log => (a.ln() + t * (b.ln() - a.ln())).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub format: OutputFormat,
    /// Directory receiving reports and tables.
    pub path: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            format: OutputFormat::Csv,
            path: "results".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn paper_default() -> Self {
        Self::from_toml_str(PAPER_DEFAULT, "<paper_default>").expect("bundled configuration is valid")
    }

    /// Parses and validates a configuration document. `origin` names the
    /// source in diagnostics.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Explicit path, else `$CAPA_CONFIG`, else the bundled defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::from_path(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::from_path(Path::new(&p)),
                _ => Ok(Self::paper_default()),
            },
        }
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Output(format!("cannot serialize configuration: {e}")))
    }

    pub fn constants(&self) -> PhysicalConstants {
        self.constants.physical()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, message: String| Err(CliError::Field {
            field: name.to_string(),
            message,
        });
        let positive = |name: &str, v: f64| -> Result<(), CliError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                field(name, format!("must be a positive finite number, got {v}"))
            }
        };

        if self.methods.is_empty() {
            return field("methods", "at least one method is required".into());
        }
        if let Some(m) = self.methods.iter().find(|m| **m == Method::WmmseCorrelated) {
            return field("methods", format!("`{m}` is a library-only solver; use wmmse, fourier_svd, spda or dense_optimal"));
        }

        let c = &self.constants;
        positive("constants.frequency", c.frequency)?;
        positive("constants.speed_of_light", c.speed_of_light)?;
        positive("constants.impedance", c.impedance)?;
        positive("constants.noise_power", c.noise_power)?;
        positive("constants.transmit_power", c.transmit_power)?;
        positive("constants.power_scale", c.power_scale)?;

        for (side, g) in [("tx", &self.tx), ("rx", &self.rx)] {
            positive(&format!("{side}.L_x"), g.lx)?;
            positive(&format!("{side}.L_y"), g.ly)?;
            for (name, v) in [("alpha", g.alpha), ("beta", g.beta), ("phi", g.phi)] {
                if !v.is_finite() {
                    return field(&format!("{side}.{name}"), format!("must be finite, got {v}"));
                }
            }
            if g.center.iter().any(|v| !v.is_finite()) {
                return field(&format!("{side}.center"), "must be finite".into());
            }
            let n = g.polarization.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((n - 1.0).abs() < 1e-6) {
                return field(&format!("{side}.polarization"), format!("must be a unit vector, has norm {n}"));
            }
        }

        let s = &self.solver;
        if s.order < 2 {
            return field("solver.order", format!("must be at least 2, got {}", s.order));
        }
        if let Some(m) = s.fourier_order {
            if m < 2 {
                return field("solver.fourier_order", format!("must be at least 2, got {m}"));
            }
        }
        if s.streams == StreamSpec::Count(0) {
            return field("solver.streams", "must be at least 1".into());
        }
        positive("solver.threshold", s.threshold)?;
        if s.max_iter == 0 {
            return field("solver.max_iter", "must be at least 1".into());
        }
        if s.dense_samples == Some(0) {
            return field("solver.dense_samples", "must be at least 1".into());
        }
        if s.dense_budget == 0 {
            return field("solver.dense_budget", "must be at least 1".into());
        }
        positive("solver.dof_threshold_db", s.dof_threshold_db)?;

        positive("metasurface.element_side", self.metasurface.element_side)?;
        if let Some(d) = self.metasurface.spacing {
            positive("metasurface.spacing", d)?;
            if d < self.metasurface.element_side {
                return field(
                    "metasurface.spacing",
                    format!("must be at least element_side = {}, got {d}", self.metasurface.element_side),
                );
            }
        }

        if let Some(sw) = &self.sweep {
            match &sw.values {
                Some(v) => {
                    if v.is_empty() {
                        return field("sweep.values", "must not be empty".into());
                    }
                    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                        return field("sweep.values", format!("must be positive and finite, got {x}"));
                    }
                }
                None => {
                    let (Some(a), Some(b), Some(n)) = (sw.start, sw.stop, sw.steps) else {
                        return field("sweep", "needs either `values` or all of `start`, `stop`, `steps`".into());
                    };
                    positive("sweep.start", a)?;
                    positive("sweep.stop", b)?;
                    if n == 0 {
                        return field("sweep.steps", "must be at least 1".into());
                    }
                }
            }
            if sw.variable == SweepVariable::Spacing {
                if let Some(x) = sw.points().iter().find(|x| **x < self.metasurface.element_side) {
                    return field("sweep.values", format!("spacing {x} is below metasurface.element_side"));
                }
            }
        }

        if self.output.path.is_empty() {
            return field("output.path", "must not be empty".into());
        }
        Ok(())
    }
}
