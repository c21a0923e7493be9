//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smpde_core::averaging::sigma_bar;
use smpde_core::convolution::{RegularityWindow, SigmaSpec, SpaceProfile, TimeProfile};
use smpde_core::heat::Backend;
use smpde_core::measure::WeightSpec;
use smpde_core::solver::{
    AffineTerm, CoefficientSet, InitialCondition, QuadraticTerm, SolverConfig, Start, DEFAULT_MARGIN,
};
use smpde_core::GridSpec;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Average,
    Regularity,
    BesovCheck,
    SmSample,
    KernelTable,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Average => "average",
            Command::Regularity => "regularity",
            Command::BesovCheck => "besov-check",
            Command::SmSample => "sm-sample",
            Command::KernelTable => "kernel-table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Wiener,
    WeightedWiener {
        #[serde(default)]
        weight: WeightSpec,
    },
    Fbm {
        hurst: f64,
    },
    AlphaStable {
        alpha: f64,
    },
    Lebesgue,
    Zero,
    /// A sample written by `sm-sample`; relative paths resolve against the
    /// config file's directory.
    File {
        path: PathBuf,
    },
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig::Wiener
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Heat,
    #[default]
    Burgers,
    /// Everything zero; supply the terms explicitly.
    Custom,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<InitialCondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<AffineTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g1: Option<AffineTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2: Option<QuadraticTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
}

impl CoefficientsConfig {
    pub fn resolve(&self) -> CoefficientSet {
        let mut c = match self.preset {
            Preset::Heat => CoefficientSet::heat(),
            Preset::Burgers => CoefficientSet::burgers(),
            Preset::Custom => CoefficientSet {
                u0: InitialCondition::Zero,
                f: AffineTerm::zero(),
                g1: AffineTerm::zero(),
                g2: QuadraticTerm::default(),
                sigma: SigmaSpec::zero(),
            },
        };
        if let Some(u0) = &self.u0 {
            c.u0 = u0.clone();
        }
        if let Some(f) = &self.f {
            c.f = f.clone();
        }
        if let Some(g1) = &self.g1 {
            c.g1 = g1.clone();
        }
        if let Some(g2) = self.g2 {
            c.g2 = g2;
        }
        if let Some(sigma) = &self.sigma {
            c.sigma = sigma.clone();
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_cutoff: Option<f64>,
    pub adaptive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_weight: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub max_retries: usize,
    pub margin: f64,
    pub backend: Backend,
    pub start: Start,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            n_cutoff: None,
            adaptive: true,
            lambda_weight: None,
            tol: 1e-8,
            max_iter: 60,
            max_retries: 4,
            margin: DEFAULT_MARGIN,
            backend: Backend::Fft,
            start: Start::HeatPlusNoise,
        }
    }
}

impl SolverBlock {
    pub fn solver_config(&self, grid: GridSpec) -> SolverConfig {
        SolverConfig {
            grid,
            n_cutoff: self.n_cutoff,
            lambda_weight: self.lambda_weight,
            max_iter: self.max_iter,
            tol: self.tol,
            adaptive_n: self.adaptive,
            max_retries: self.max_retries,
            margin: self.margin,
            backend: self.backend,
            start: self.start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingBlock {
    pub epsilons: Vec<f64>,
    /// Replaces the period of a sine time factor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl Default for AveragingBlock {
    fn default() -> Self {
        AveragingBlock {
            epsilons: vec![1.0, 0.25, 0.0625, 0.015625],
            period: None,
        }
    }
}

impl AveragingBlock {
    pub fn sigma(&self, base: &SigmaSpec) -> SigmaSpec {
        let mut sigma = base.clone();
        if let (Some(p), TimeProfile::Sine { period, .. }) = (self.period, &mut sigma.time) {
            *period = p;
        }
        sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BesovBlock {
    pub alpha: f64,
    pub constant: f64,
    /// Integrand evaluated at cell centers of each unit interval.
    pub q: SpaceProfile,
    /// Unit intervals `(j, j+1]`; all intervals of the box when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<i64>>,
}

impl Default for BesovBlock {
    fn default() -> Self {
        BesovBlock {
            alpha: 0.75,
            constant: 1.0,
            q: SpaceProfile::Gaussian {
                amplitude: 1.0,
                rate: 1.0,
            },
            intervals: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelTableBlock {
    pub times: Vec<f64>,
    /// Every `stride`-th cell center of the grid.
    pub stride: usize,
}

impl Default for KernelTableBlock {
    fn default() -> Self {
        KernelTableBlock {
            times: vec![0.01, 0.1, 1.0],
            stride: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    /// Times of the CSV slices of space-time fields, snapped to the nearest
    /// level; empty means `0, t_max/2, t_max`.
    pub slice_times: Vec<f64>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json, Format::Binary],
            slice_times: Vec::new(),
        }
    }
}

impl OutputBlock {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "GridSpec::default_rig")]
    pub grid: GridSpec,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub coefficients: CoefficientsConfig,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub averaging: AveragingBlock,
    #[serde(default)]
    pub besov: BesovBlock,
    #[serde(default)]
    pub regularity: RegularityWindow,
    #[serde(default)]
    pub kernel_table: KernelTableBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// A validation failure tied to a dotted key such as `besov.alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Invalid {
    pub key: String,
    pub message: String,
}

fn invalid(key: &str, message: impl ToString) -> Invalid {
    Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn core<T>(key: &str, r: smpde_core::Result<T>) -> Result<T, Invalid> {
    r.map_err(|e| invalid(key, e))
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        ExperimentConfig::parse_with(text, path, None)
    }

    /// Parse, replace the command if `command` is given, then validate.
    pub fn parse_with(text: &str, path: &Path, command: Option<Command>) -> Result<Self, CliError> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        if let Some(c) = command {
            config.command = c;
        }
        config.validate().map_err(|bad| CliError::Config {
            path: path.to_path_buf(),
            line: locate_key(text, &bad.key),
            key: bad.key,
            message: bad.message,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        ExperimentConfig::load_with(path, None)
    }

    pub fn load_with(path: &Path, command: Option<Command>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = ExperimentConfig::parse_with(&text, path, command)?;
        if let MeasureConfig::File { path: sample } = &mut config.measure {
            if sample.is_relative() {
                if let Some(dir) = path.parent() {
                    *sample = dir.join(&*sample);
                }
            }
            if !sample.is_file() {
                return Err(CliError::Config {
                    path: path.to_path_buf(),
                    line: locate_key(&text, "measure.path"),
                    key: "measure.path".into(),
                    message: format!("sample file {} does not exist", sample.display()),
                });
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks the preconditions the selected command will rely on.
    pub fn validate(&self) -> Result<(), Invalid> {
        core("grid", self.grid.validate())?;
        match &self.measure {
            MeasureConfig::WeightedWiener { weight } => core("measure.weight", weight.validate())?,
            MeasureConfig::Fbm { hurst } if !(*hurst > 0.5 && *hurst < 1.0) => {
                return Err(invalid("measure.hurst", format!("hurst = {hurst} must lie in (1/2, 1)")))
            }
            MeasureConfig::AlphaStable { alpha } if !(*alpha > 0.0 && *alpha <= 2.0 && *alpha != 1.0) => {
                return Err(invalid(
                    "measure.alpha",
                    format!("alpha = {alpha} must lie in (0, 1) ∪ (1, 2]"),
                ))
            }
            _ => {}
        }
        let coeffs = self.coefficients.resolve();
        core("coefficients", coeffs.validate())?;
        core("coefficients.u0", coeffs.u0.field(&self.grid))?;
        core("solver", self.solver.solver_config(self.grid).validate())?;
        for &t in &self.output.slice_times {
            if !(0.0..=self.grid.t_max).contains(&t) {
                return Err(invalid("output.slice_times", format!("slice time {t} outside [0, t_max]")));
            }
        }
        match self.command {
            Command::Average => {
                let sigma = self.averaging.sigma(&coeffs.sigma);
                if let Some(p) = self.averaging.period {
                    if !(p > 0.0 && p.is_finite()) {
                        return Err(invalid("averaging.period", format!("period = {p} must be positive")));
                    }
                }
                core("coefficients.sigma", sigma_bar(&sigma))?;
                let eps = &self.averaging.epsilons;
                if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(invalid("averaging.epsilons", "epsilons must be positive and non-empty"));
                }
                if eps.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(invalid("averaging.epsilons", "epsilons must be strictly decreasing"));
                }
            }
            Command::BesovCheck => {
                let b = &self.besov;
                if !(b.alpha > 0.5 && b.alpha < 1.0) {
                    return Err(invalid(
                        "besov.alpha",
                        format!("alpha = {} is outside the admissible range (1/2, 1)", b.alpha),
                    ));
                }
                if !(b.constant >= 0.0 && b.constant.is_finite()) {
                    return Err(invalid("besov.constant", "constant must be finite and non-negative"));
                }
                core(
                    "besov.q",
                    SigmaSpec::separable(TimeProfile::Constant { value: 1.0 }, b.q.clone()).validate(),
                )?;
                let units = match self.grid.cells_per_unit() {
                    Some(n) if n >= 4 => self.grid.unit_intervals(),
                    _ => {
                        return Err(invalid(
                            "grid",
                            "besov-check needs integer box ends and at least 4 cells per unit",
                        ))
                    }
                };
                if let Some(list) = &b.intervals {
                    if let Some(j) = list.iter().find(|j| !units.contains(j)) {
                        return Err(invalid("besov.intervals", format!("interval {j} is outside the box")));
                    }
                }
            }
            Command::Regularity => {
                let w = &self.regularity;
                if !(0.0..1.0).contains(&w.delta_fraction) {
                    return Err(invalid("regularity.delta_fraction", "delta_fraction must lie in [0, 1)"));
                }
                if !(w.x_abs_max > 0.0) {
                    return Err(invalid("regularity.x_abs_max", "x_abs_max must be positive"));
                }
                if w.max_space_lag < 2 || w.max_time_lag < 2 {
                    return Err(invalid("regularity", "maximal lags must be at least 2"));
                }
            }
            Command::KernelTable => {
                let k = &self.kernel_table;
                if k.times.is_empty() || k.times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return Err(invalid("kernel_table.times", "times must be positive and non-empty"));
                }
                if k.stride == 0 {
                    return Err(invalid("kernel_table.stride", "stride must be at least 1"));
                }
            }
            Command::SmSample => {
                if self.grid.cells_per_unit().is_none() {
                    return Err(invalid("grid", "sm-sample needs integer box ends and whole cells per unit interval"));
                }
            }
            Command::Solve => {}
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of a dotted key: `key = ...` inside `[table]`, a `[table.key]`
/// sub-table, or failing that the `[table]` header itself.
pub fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let (table, key) = dotted.split_once('.').unwrap_or(("", dotted));
    let mut current = String::new();
    let mut fallback = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == dotted {
                return Some(n + 1);
            }
            if current == table || (table.is_empty() && current == key) {
                fallback.get_or_insert(n + 1);
            }
            continue;
        }
        if let Some((lhs, _)) = line.split_once('=') {
            if current == table && lhs.trim() == key {
                return Some(n + 1);
            }
        }
    }
    fallback
}
