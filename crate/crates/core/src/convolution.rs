//! The stochastic convolution
//! `ϑ(t,x) = ∫_ℝ ∫_0^t p(t-s, x-y) σ(s,y) ds dμ(y) = ∫_ℝ q(t,x,y) dμ(y)`.
//!
//! Noise coefficients are separable, `σ(s,y) = φ(s/ε)·c(y)`. On a grid the
//! inner kernel becomes one lag table per time level,
//! `Q_i(l) = Σ_nodes w·φ((t_i - r)/ε)·p(r, l·dx)`, and `ϑ(t_i) = Q_i * (c·μ)`.
//! The time quadrature uses sub-steps no longer than `dt` and `εP/8` for a
//! period `P`, so fast oscillations are resolved rather than sub-sampled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::besov::{dyadic_lags, holder_fit_pooled, HolderFit};
use crate::grid::{check_finite, sup_of};
use crate::heat::{convolve, value_profile, Backend, LagKernel, Spectral};
use crate::measure::{dyadic_energy, unit_masses, MeasureSample};
use crate::quadrature::{GaussLegendre, StepRule, TimeNode};
use crate::{Error, Field, GridSpec, Result, SpaceTimeField};

/// Time factor `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude·sin(2π s/period + phase)`.
    Sine {
        mean: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `intercept + slope·s`; has no time average unless `slope = 0`.
    Linear { intercept: f64, slope: f64 },
    /// Linear interpolation of `values` at `s = k·step`; periodic tables wrap
    /// with period `step·len`, others hold the last value.
    Table {
        step: f64,
        values: Vec<f64>,
        #[serde(default)]
        periodic: bool,
    },
}

impl TimeProfile {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            TimeProfile::Constant { value } => *value,
            TimeProfile::Sine {
                mean,
                amplitude,
                period,
                phase,
            } => mean + amplitude * (2.0 * std::f64::consts::PI * s / period + phase).sin(),
            TimeProfile::Linear { intercept, slope } => intercept + slope * s,
            TimeProfile::Table {
                step,
                values,
                periodic,
            } => {
                let n = values.len();
                let mut u = s / step;
                if *periodic {
                    u = u.rem_euclid(n as f64);
                } else if u >= (n - 1) as f64 {
                    return values[n - 1];
                } else if u <= 0.0 {
                    return values[0];
                }
                let k = (u.floor() as usize).min(n - 1);
                let frac = u - k as f64;
                let next = if k + 1 < n { values[k + 1] } else { values[0] };
                values[k] * (1.0 - frac) + next * frac
            }
        }
    }

    /// Smallest known period; `None` for aperiodic profiles. Constants report
    /// `None` as well: they need no period to be averaged.
    pub fn period(&self) -> Option<f64> {
        match self {
            TimeProfile::Sine { period, .. } => Some(*period),
            TimeProfile::Table {
                step,
                values,
                periodic: true,
            } => Some(step * values.len() as f64),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            TimeProfile::Constant { .. } => true,
            TimeProfile::Sine { amplitude, .. } => *amplitude == 0.0,
            TimeProfile::Linear { slope, .. } => *slope == 0.0,
            TimeProfile::Table { values, .. } => values.iter().all(|v| *v == values[0]),
        }
    }

    /// `sup_{0 ≤ s ≤ horizon} |φ(s)|`.
    pub fn sup_abs(&self, horizon: f64) -> f64 {
        match self {
            TimeProfile::Constant { value } => value.abs(),
            TimeProfile::Sine {
                mean, amplitude, ..
            } => mean.abs() + amplitude.abs(),
            TimeProfile::Linear { intercept, slope } => {
                intercept.abs().max((intercept + slope * horizon).abs())
            }
            TimeProfile::Table { values, .. } => sup_of(values),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        let ok = match self {
            TimeProfile::Constant { value } => finite(*value),
            TimeProfile::Sine {
                mean,
                amplitude,
                period,
                phase,
            } => finite(*mean) && finite(*amplitude) && finite(*phase) && *period > 0.0 && finite(*period),
            TimeProfile::Linear { intercept, slope } => finite(*intercept) && finite(*slope),
            TimeProfile::Table { step, values, .. } => {
                *step > 0.0 && finite(*step) && !values.is_empty() && values.iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("time profile {self:?}")))
        }
    }
}

/// Space factor `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceProfile {
    Constant {
        value: f64,
    },
    /// `amplitude·exp(-rate·y²)`.
    Gaussian { amplitude: f64, rate: f64 },
    /// Linear interpolation of `values` at `y = x_min + k·step`, constant
    /// beyond the ends.
    Table {
        x_min: f64,
        step: f64,
        values: Vec<f64>,
    },
}

impl SpaceProfile {
    pub fn value(&self, y: f64) -> f64 {
        match self {
            SpaceProfile::Constant { value } => *value,
            SpaceProfile::Gaussian { amplitude, rate } => amplitude * (-rate * y * y).exp(),
            SpaceProfile::Table {
                x_min,
                step,
                values,
            } => {
                let n = values.len();
                let u = (y - x_min) / step;
                if u <= 0.0 {
                    values[0]
                } else if u >= (n - 1) as f64 {
                    values[n - 1]
                } else {
                    let k = u.floor() as usize;
                    let frac = u - k as f64;
                    values[k] * (1.0 - frac) + values[k + 1] * frac
                }
            }
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            SpaceProfile::Constant { value } => value.abs(),
            SpaceProfile::Gaussian { amplitude, .. } => amplitude.abs(),
            SpaceProfile::Table { values, .. } => sup_of(values),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            SpaceProfile::Constant { .. } => 0.0,
            SpaceProfile::Gaussian { amplitude, rate } => {
                amplitude.abs() * (2.0 * rate).sqrt() * (-0.5f64).exp()
            }
            SpaceProfile::Table { step, values, .. } => values
                .windows(2)
                .map(|w| (w[1] - w[0]).abs() / step)
                .fold(0.0, f64::max),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SpaceProfile::Constant { value } => value.is_finite(),
            SpaceProfile::Gaussian { amplitude, rate } => {
                amplitude.is_finite() && rate.is_finite() && *rate > 0.0
            }
            SpaceProfile::Table {
                x_min,
                step,
                values,
            } => {
                x_min.is_finite()
                    && *step > 0.0
                    && step.is_finite()
                    && !values.is_empty()
                    && values.iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("space profile {self:?}")))
        }
    }
}

fn one() -> f64 {
    1.0
}

/// `σ(s, y) = φ(s / time_scale)·c(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    pub time: TimeProfile,
    pub space: SpaceProfile,
    #[serde(default = "one")]
    pub time_scale: f64,
}

/// Bound `|σ| ≤ c_sigma` and Hölder bound
/// `|σ(s,y1) - σ(s,y2)| ≤ l_sigma·|y1 - y2|^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaConstants {
    pub c_sigma: f64,
    pub l_sigma: f64,
    pub beta: f64,
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::constant(1.0)
    }
}

impl SigmaSpec {
    pub fn constant(value: f64) -> Self {
        SigmaSpec {
            time: TimeProfile::Constant { value: 1.0 },
            space: SpaceProfile::Constant { value },
            time_scale: 1.0,
        }
    }

    pub fn zero() -> Self {
        SigmaSpec::constant(0.0)
    }

    pub fn separable(time: TimeProfile, space: SpaceProfile) -> Self {
        SigmaSpec {
            time,
            space,
            time_scale: 1.0,
        }
    }

    /// `σ(s/ε, y)`.
    pub fn with_time_scale(&self, epsilon: f64) -> Self {
        SigmaSpec {
            time_scale: self.time_scale * epsilon,
            ..self.clone()
        }
    }

    pub fn family(&self) -> &'static str {
        let tabulated = matches!(self.time, TimeProfile::Table { .. })
            || matches!(self.space, SpaceProfile::Table { .. });
        if tabulated {
            "custom_table"
        } else if self.time.is_constant() && matches!(self.space, SpaceProfile::Constant { .. }) {
            "constant"
        } else {
            "separable_periodic"
        }
    }

    pub fn time_factor(&self, s: f64) -> f64 {
        self.time.value(s / self.time_scale)
    }

    pub fn value(&self, s: f64, y: f64) -> f64 {
        self.time_factor(s) * self.space.value(y)
    }

    pub fn is_zero(&self) -> bool {
        self.space.sup_abs() == 0.0 || (self.time.is_constant() && self.time.value(0.0) == 0.0)
    }

    /// Period of `s ↦ φ(s/ε)`.
    pub fn period(&self) -> Option<f64> {
        self.time.period().map(|p| p * self.time_scale)
    }

    /// Constants on `[0, t_max] × ℝ`. Lipschitz space factors are Hölder of
    /// every order `β ≤ 1` with `l_sigma = sup|φ|·max(Lip c, 2 sup|c|)`.
    pub fn constants(&self, t_max: f64, beta: f64) -> SigmaConstants {
        let phi = self.time.sup_abs(t_max / self.time_scale);
        SigmaConstants {
            c_sigma: phi * self.space.sup_abs(),
            l_sigma: phi * self.space.lipschitz().max(2.0 * self.space.sup_abs()),
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.time.validate()?;
        self.space.validate()?;
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::out_of_range("time_scale", self.time_scale, "(0, ∞)"));
        }
        Ok(())
    }

    /// Check declared constants on 1000 random `(s, y1, y2)` triples.
    pub fn spot_check(&self, t_max: f64, k: &SigmaConstants, seed: u64) -> Result<()> {
        self.validate()?;
        if !(k.beta > 0.5 && k.beta < 1.0) {
            return Err(Error::out_of_range("beta", k.beta, "(1/2, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let s = rng.random_range(0.0..=t_max);
            let y1: f64 = rng.random_range(-20.0..20.0);
            let y2 = y1 + rng.random_range(-2.0..2.0);
            let a = self.value(s, y1);
            let b = self.value(s, y2);
            let tol = 1e-12 * (1.0 + k.c_sigma);
            if a.abs() > k.c_sigma + tol {
                return Err(Error::Unsupported(format!(
                    "|σ({s}, {y1})| = {} exceeds C_σ = {}",
                    a.abs(),
                    k.c_sigma
                )));
            }
            if (a - b).abs() > k.l_sigma * (y1 - y2).abs().powf(k.beta) + tol {
                return Err(Error::Unsupported(format!(
                    "σ({s}, ·) breaks the Hölder bound between {y1} and {y2}"
                )));
            }
        }
        Ok(())
    }

    fn substep_limit(&self) -> f64 {
        match self.period() {
            Some(p) if !self.time.is_constant() => p / 8.0,
            _ => f64::INFINITY,
        }
    }
}

fn check_positive_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("t", t, "(0, ∞)"))
    }
}

/// Nodes in `r = t - s` covering `[0, t]` with sub-steps of at most `h_max`.
fn elapsed_nodes(t: f64, h_max: f64) -> Vec<TimeNode> {
    let n = (t / h_max).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let rule = StepRule::default();
    (0..n).flat_map(|o| rule.nodes(o, h)).collect()
}

/// `q(t,x,y) = ∫_0^t p(t-s, x-y) σ(s,y) ds`.
pub fn q_kernel(t: f64, x: f64, y: f64, sigma: &SigmaSpec) -> Result<f64> {
    check_positive_time(t)?;
    sigma.validate()?;
    let c = sigma.space.value(y);
    if c == 0.0 {
        return Ok(0.0);
    }
    let h_max = (t / 64.0).min(sigma.substep_limit());
    let d = x - y;
    let integral: f64 = elapsed_nodes(t, h_max)
        .iter()
        .map(|n| n.weight * crate::heat::p(n.r, d) * sigma.time_factor(t - n.r))
        .sum();
    Ok(c * integral)
}

/// Precomputed lag tables for one `(grid, σ)` pair; reusable across samples.
pub struct StochasticConvolution {
    grid: GridSpec,
    sigma: SigmaSpec,
    backend: Backend,
    tables: Vec<LagKernel>,
    space: Vec<f64>,
    spectral: Option<(Spectral, Vec<Vec<Complex64>>)>,
}

const LEVEL_BLOCK: usize = 16;

impl StochasticConvolution {
    pub fn new(grid: &GridSpec, sigma: &SigmaSpec, backend: Backend) -> Result<Self> {
        grid.validate()?;
        sigma.validate()?;
        let tables = if sigma.is_zero() {
            vec![LagKernel::zeros(grid.nx); grid.nt + 1]
        } else if sigma.time.is_constant() {
            constant_time_tables(grid, sigma.time.value(0.0))
        } else {
            oscillating_tables(grid, sigma)
        };
        let space = grid.x_centers().iter().map(|&y| sigma.space.value(y)).collect();
        let spectral = match backend {
            Backend::Direct => None,
            Backend::Fft => {
                let plan = Spectral::new(grid.nx);
                let spectra = tables.par_iter().map(|k| plan.kernel(k)).collect();
                Some((plan, spectra))
            }
        };
        Ok(StochasticConvolution {
            grid: *grid,
            sigma: sigma.clone(),
            backend,
            tables,
            space,
            spectral,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sigma(&self) -> &SigmaSpec {
        &self.sigma
    }

    /// `q(t_i, l·dx)` without the space factor.
    pub fn table(&self, i: usize) -> &LagKernel {
        &self.tables[i]
    }

    fn weighted(&self, sample: &MeasureSample) -> Result<Vec<f64>> {
        self.grid.check_same(sample.grid())?;
        Ok(self
            .space
            .iter()
            .zip(sample.increments())
            .map(|(c, m)| c * m)
            .collect())
    }

    pub fn theta(&self, sample: &MeasureSample, i: usize) -> Result<Field> {
        if i > self.grid.nt {
            return Err(Error::out_of_range("t_index", i as f64, "0..=nt"));
        }
        let data = self.weighted(sample)?;
        let values = convolve(self.backend, &self.tables[i], &data);
        check_finite(&values)?;
        Field::new(self.grid, values, self.grid.t_level(i))
    }

    pub fn theta_all(&self, sample: &MeasureSample) -> Result<SpaceTimeField> {
        let data = self.weighted(sample)?;
        let rows: Vec<Vec<f64>> = match &self.spectral {
            None => self.tables.par_iter().map(|k| k.apply(&data)).collect(),
            Some((plan, spectra)) => {
                let dh = plan.data(&data);
                spectra
                    .par_iter()
                    .map(|kh| {
                        let prod: Vec<Complex64> = kh.iter().zip(&dh).map(|(a, b)| a * b).collect();
                        plan.invert(&prod)
                    })
                    .collect()
            }
        };
        let mut field = SpaceTimeField::from_rows(self.grid, rows)?;
        field.row_mut(0).iter_mut().for_each(|v| *v = 0.0);
        Ok(field)
    }

    /// `Σ_j (Q_i(k-j)·c_j)²·dx`: the variance of `ϑ(t_i, x_k)` under a Wiener
    /// measure.
    pub fn wiener_variance(&self, i: usize, k: usize) -> f64 {
        let dx = self.grid.dx();
        let table = &self.tables[i];
        (0..self.grid.nx)
            .map(|j| {
                let v = table.tap(k as isize - j as isize) * self.space[j];
                v * v
            })
            .sum::<f64>()
            * dx
    }
}

/// φ constant: `Q_i` is a running sum over elapsed-time steps.
fn constant_time_tables(grid: &GridSpec, phi: f64) -> Vec<LagKernel> {
    let rule = StepRule::default();
    let dt = grid.dt();
    let dx = grid.dx();
    let steps: Vec<LagKernel> = (0..grid.nt)
        .into_par_iter()
        .map(|m| {
            let mut k = LagKernel::zeros(grid.nx);
            for node in rule.nodes(m, dt) {
                k.add_scaled(&value_profile(grid, node.r), node.weight * phi / dx);
            }
            k
        })
        .collect();
    let mut tables = Vec::with_capacity(grid.nt + 1);
    let mut acc = LagKernel::zeros(grid.nx);
    tables.push(acc.clone());
    for step in &steps {
        acc.add_scaled(step, 1.0);
        tables.push(acc.clone());
    }
    tables
}

/// General φ: each level needs its own weighting of the elapsed-time nodes.
/// Levels are processed in fixed blocks so the summation order never depends
/// on scheduling.
fn oscillating_tables(grid: &GridSpec, sigma: &SigmaSpec) -> Vec<LagKernel> {
    let dt = grid.dt();
    let dx = grid.dx();
    let sub = (dt / sigma.substep_limit()).ceil().max(1.0) as usize;
    let h = dt / sub as f64;
    let rule = StepRule::default();
    let blocks: Vec<(usize, usize)> = (0..=grid.nt)
        .step_by(LEVEL_BLOCK)
        .map(|lo| (lo, (lo + LEVEL_BLOCK).min(grid.nt + 1)))
        .collect();
    blocks
        .into_par_iter()
        .flat_map_iter(|(lo, hi)| {
            let mut block: Vec<LagKernel> = (lo..hi).map(|_| LagKernel::zeros(grid.nx)).collect();
            let last = hi - 1;
            for o in 0..last * sub {
                for node in rule.nodes(o, h) {
                    let profile = value_profile(grid, node.r);
                    for (b, i) in (lo..hi).enumerate() {
                        if o < i * sub {
                            let t = grid.t_level(i);
                            let w = node.weight * sigma.time_factor(t - node.r) / dx;
                            block[b].add_scaled(&profile, w);
                        }
                    }
                }
            }
            block
        })
        .collect()
}

/// `ϑ(t_i, ·)` for one sample.
pub fn theta(t_index: usize, sample: &MeasureSample, sigma: &SigmaSpec) -> Result<Field> {
    StochasticConvolution::new(sample.grid(), sigma, Backend::Fft)?.theta(sample, t_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeParams {
    pub alpha: f64,
    pub theta: f64,
    pub lambda_tilde: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        EnvelopeParams {
            alpha: 0.75,
            theta: 2.0,
            lambda_tilde: 0.15,
        }
    }
}

impl EnvelopeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(Error::out_of_range("alpha", self.alpha, "(1/2, 1)"));
        }
        if !(self.theta > 1.0) {
            return Err(Error::out_of_range("theta", self.theta, "(1, ∞)"));
        }
        if !(self.lambda_tilde > 0.0 && self.lambda_tilde < 0.25) {
            return Err(Error::out_of_range("lambda_tilde", self.lambda_tilde, "(0, 1/4)"));
        }
        Ok(())
    }
}

/// `g²(x) = Σ_j (|j|+1)^θ e^{2(1-(|x-j|-1)²)λ̃/T} (μ²((j,j+1]) + E_j)` over the
/// unit intervals of the box, `E_j` the dyadic energy.
#[derive(Debug, Clone)]
pub struct Envelope {
    rate: f64,
    terms: Vec<(f64, f64)>,
}

impl Envelope {
    pub fn new(sample: &MeasureSample, params: &EnvelopeParams, t_max: f64) -> Result<Self> {
        params.validate()?;
        check_positive_time(t_max)?;
        let terms = unit_masses(sample)?
            .into_iter()
            .map(|(j, mass)| {
                let energy = dyadic_energy(sample, j, params.alpha)?;
                let weight = ((j.abs() + 1) as f64).powf(params.theta) * (mass * mass + energy);
                Ok((j as f64, weight))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Envelope {
            rate: 2.0 * params.lambda_tilde / t_max,
            terms,
        })
    }

    pub fn squared(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|(j, w)| {
                let d = (x - j).abs() - 1.0;
                w * ((1.0 - d * d) * self.rate).exp()
            })
            .sum()
    }

    pub fn value(&self, x: f64) -> f64 {
        self.squared(x).sqrt()
    }
}

pub fn envelope(x: f64, sample: &MeasureSample, params: &EnvelopeParams, t_max: f64) -> Result<f64> {
    Ok(Envelope::new(sample, params, t_max)?.value(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// Spatial exponent on `t ∈ [δ, T]`; `None` when ϑ has no variation.
    pub gamma1: Option<HolderFit>,
    pub gamma2: Option<HolderFit>,
    pub sup_bound: f64,
    pub l2_trace: Vec<f64>,
}

/// Window and lag choices for [`regularity_of`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularityWindow {
    /// Fraction of `T` excluded at the start.
    pub delta_fraction: f64,
    /// Only `|x| ≤ x_abs_max` enters the fits.
    pub x_abs_max: f64,
    /// Largest lags; clipped to the length of the data.
    pub max_space_lag: usize,
    pub max_time_lag: usize,
}

impl Default for RegularityWindow {
    fn default() -> Self {
        RegularityWindow {
            delta_fraction: 0.1,
            x_abs_max: 5.0,
            max_space_lag: 64,
            max_time_lag: 32,
        }
    }
}

pub fn regularity_of(theta: &SpaceTimeField, window: &RegularityWindow) -> Result<RegularityReport> {
    let g = *theta.grid();
    let first = (window.delta_fraction * g.nt as f64).ceil() as usize;
    let cols: Vec<usize> = (0..g.nx)
        .filter(|&i| g.x_center(i).abs() <= window.x_abs_max)
        .collect();
    if cols.is_empty() || first > g.nt {
        return Err(Error::Degenerate("empty regularity window".into()));
    }
    let (c0, c1) = (cols[0], cols[cols.len() - 1] + 1);
    let space_rows: Vec<&[f64]> = (first..=g.nt).map(|k| &theta.row(k)[c0..c1]).collect();
    let gamma1 = optional_fit(holder_fit_pooled(
        &space_rows,
        g.dx(),
        &dyadic_lags(window.max_space_lag.min(c1 - c0 - 1)),
    ))?;
    let time_series: Vec<Vec<f64>> = (c0..c1)
        .map(|i| (first..=g.nt).map(|k| theta.row(k)[i]).collect())
        .collect();
    let time_rows: Vec<&[f64]> = time_series.iter().map(|v| v.as_slice()).collect();
    let gamma2 = optional_fit(holder_fit_pooled(
        &time_rows,
        g.dt(),
        &dyadic_lags(window.max_time_lag.min(g.nt - first)),
    ))?;
    Ok(RegularityReport {
        gamma1,
        gamma2,
        sup_bound: theta.sup_abs(),
        l2_trace: theta.l2_trace(),
    })
}

fn optional_fit(fit: Result<HolderFit>) -> Result<Option<HolderFit>> {
    match fit {
        Ok(f) => Ok(Some(f)),
        Err(Error::Degenerate(msg)) if msg.starts_with("no variation") => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn regularity_report(
    sample: &MeasureSample,
    sigma: &SigmaSpec,
    window: &RegularityWindow,
) -> Result<RegularityReport> {
    let theta = StochasticConvolution::new(sample.grid(), sigma, Backend::Fft)?.theta_all(sample)?;
    regularity_of(&theta, window)
}

/// `(1/P)∫_0^P φ` by composite Gauss–Legendre.
pub(crate) fn period_mean(time: &TimeProfile, period: f64) -> f64 {
    let rule = GaussLegendre::new(8);
    let panels = 256;
    let h = period / panels as f64;
    (0..panels)
        .map(|k| rule.integrate(k as f64 * h, (k + 1) as f64 * h, |s| time.value(s)))
        .sum::<f64>()
        / period
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{deterministic_lebesgue, sample_wiener, MeasureKind};
    use std::f64::consts::PI;

    fn sine() -> SigmaSpec {
        SigmaSpec::separable(
            TimeProfile::Sine {
                mean: 1.0,
                amplitude: 1.0,
                period: 1.0,
                phase: 0.0,
            },
            SpaceProfile::Gaussian {
                amplitude: 1.0,
                rate: 1.0,
            },
        )
    }

    #[test]
    fn q_kernel_closed_forms() {
        assert_eq!(q_kernel(1.0, 0.3, 0.1, &SigmaSpec::zero()).unwrap(), 0.0);
        let q = q_kernel(1.0, 0.0, 0.0, &SigmaSpec::constant(1.0)).unwrap();
        assert!((q - 1.0 / PI.sqrt()).abs() < 1e-7, "{q}");
        assert!((q - 0.564_189_6).abs() < 1e-7);
        assert!(q_kernel(0.0, 0.0, 0.0, &SigmaSpec::constant(1.0)).is_err());
    }

    #[test]
    fn q_kernel_gaussian_decay() {
        let s = SigmaSpec::constant(1.0);
        let c = q_kernel(1.0, 0.0, 0.0, &s).unwrap();
        for i in 1..80 {
            let d = 0.1 * i as f64;
            let q = q_kernel(1.0, d, 0.0, &s).unwrap();
            assert!(q <= c * (-d * d / 4.0).exp() * (1.0 + 1e-9), "d={d}");
        }
    }

    #[test]
    fn q_increment_bound_sweep() {
        // |q(t,x,y+h) - q(t,x,y)| ≤ C h^β e^{-λ̃(x-y)²/T}: fit C on one lattice,
        // validate twice that constant on an interleaved one.
        let s = sine();
        let (beta, lt) = (0.75, 0.15);
        let ratio = |d: f64, h: f64| {
            let a = q_kernel(1.0, d, 0.0, &s).unwrap();
            let b = q_kernel(1.0, d, h, &s).unwrap();
            (a - b).abs() / (h.powf(beta) * (-lt * d * d).exp())
        };
        let hs = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
        let mut c: f64 = 0.0;
        for i in -16..=16 {
            for &h in &hs {
                c = c.max(ratio(0.5 * i as f64, h));
            }
        }
        for i in -15..15 {
            for &h in &hs {
                assert!(ratio(0.5 * i as f64 + 0.25, 1.7 * h) <= 2.0 * c);
            }
        }
    }

    #[test]
    fn lebesgue_theta_is_elapsed_time() {
        let g = GridSpec::new(-10.0, 10.0, 1024, 1.0, 64).unwrap();
        let s = deterministic_lebesgue(&g);
        let th = StochasticConvolution::new(&g, &SigmaSpec::constant(1.0), Backend::Fft)
            .unwrap()
            .theta_all(&s)
            .unwrap();
        assert!(th.row(0).iter().all(|v| *v == 0.0));
        for k in [1, 16, 64] {
            let t = g.t_level(k);
            for i in 0..g.nx {
                if g.x_center(i).abs() < 5.0 {
                    assert!(((th.row(k)[i] - t) / t).abs() < 1e-3);
                }
            }
        }
    }

    #[test]
    fn zero_sigma_gives_zero() {
        let g = GridSpec::new(-4.0, 4.0, 128, 1.0, 40).unwrap();
        let s = sample_wiener(&g, 3);
        let th = StochasticConvolution::new(&g, &SigmaSpec::zero(), Backend::Fft)
            .unwrap()
            .theta_all(&s)
            .unwrap();
        assert_eq!(th.sup_abs(), 0.0);
        let rep = regularity_of(&th, &RegularityWindow::default()).unwrap();
        assert!(rep.gamma1.is_none() && rep.gamma2.is_none());
        assert_eq!(rep.sup_bound, 0.0);
        assert!(rep.l2_trace.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tables_match_point_kernel() {
        let g = GridSpec::new(-6.0, 6.0, 384, 1.0, 32).unwrap();
        for sigma in [SigmaSpec::constant(1.0), sine(), sine().with_time_scale(0.25)] {
            let sc = StochasticConvolution::new(&g, &sigma, Backend::Direct).unwrap();
            let c0 = sigma.space.value(0.0);
            for &(i, l) in &[(32usize, 5isize), (32, 20), (9, -7), (20, 60)] {
                let t = g.t_level(i);
                let q = q_kernel(t, l as f64 * g.dx(), 0.0, &sigma).unwrap() / c0;
                let got = sc.table(i).tap(l);
                assert!((got - q).abs() < 2e-3 * q.abs().max(1e-3), "{sigma:?} i={i} l={l}: {got} vs {q}");
            }
            // At lag 0 the table is a cell average of the cusp of q.
            let t = g.t_level(32);
            let half = 0.5 * g.dx();
            let avg = GaussLegendre::new(8)
                .integrate(0.0, half, |d| q_kernel(t, d, 0.0, &sigma).unwrap() / c0)
                / half;
            let got = sc.table(32).tap(0);
            assert!((got - avg).abs() < 1e-2 * avg, "{got} vs {avg}");
        }
    }

    #[test]
    fn linear_in_measure_and_backends_agree() {
        let g = GridSpec::new(-4.0, 4.0, 128, 1.0, 16).unwrap();
        let a = sample_wiener(&g, 1);
        let b = sample_wiener(&g, 2);
        let mix = MeasureSample::linear_combination(0.7, &a, -1.3, &b).unwrap();
        let sc = StochasticConvolution::new(&g, &sine(), Backend::Fft).unwrap();
        let ta = sc.theta_all(&a).unwrap();
        let tb = sc.theta_all(&b).unwrap();
        let tm = sc.theta_all(&mix).unwrap();
        for k in 0..=g.nt {
            for i in 0..g.nx {
                let lin = 0.7 * ta.row(k)[i] - 1.3 * tb.row(k)[i];
                assert!((tm.row(k)[i] - lin).abs() < 1e-10);
            }
        }
        let direct = StochasticConvolution::new(&g, &sine(), Backend::Direct).unwrap();
        assert!(direct.theta_all(&a).unwrap().difference(&ta).unwrap().sup_abs() < 1e-10);
        let single = direct.theta(&a, 9).unwrap();
        for (x, y) in single.values().iter().zip(ta.row(9)) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn sigma_constants_spot_check() {
        let s = sine();
        let k = s.constants(1.0, 0.75);
        assert_eq!(k.c_sigma, 2.0);
        s.spot_check(1.0, &k, 1).unwrap();
        let bad = SigmaConstants {
            c_sigma: 1.0,
            ..k
        };
        assert!(s.spot_check(1.0, &bad, 1).is_err());
        let bad_beta = SigmaConstants { beta: 0.5, ..k };
        assert!(s.spot_check(1.0, &bad_beta, 1).is_err());
        let table = SigmaSpec::separable(
            TimeProfile::Table {
                step: 0.25,
                values: vec![0.0, 1.0, 0.0, -1.0],
                periodic: true,
            },
            SpaceProfile::Table {
                x_min: -1.0,
                step: 0.5,
                values: vec![0.0, 1.0, 2.0, 1.0, 0.0],
            },
        );
        assert_eq!(table.family(), "custom_table");
        table.spot_check(2.0, &table.constants(2.0, 0.9), 4).unwrap();
        assert!((table.time.value(1.125) - 0.5).abs() < 1e-15);
        assert!((table.space.value(-0.25) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn envelope_single_unit_mass() {
        let g = GridSpec::new(-2.0, 2.0, 256, 1.0, 1).unwrap();
        let mut inc = vec![0.0; g.nx];
        inc[128] = 1.0;
        let s = MeasureSample::from_parts(g, MeasureKind::Tabulated, 0, inc).unwrap();
        let p = EnvelopeParams {
            alpha: 0.75,
            theta: 2.0,
            lambda_tilde: 0.2,
        };
        // λ̃/T = 1 via T = λ̃. Only j = 0 carries mass; at x = 0 the exponent
        // is 2(1 - 1)·1 = 0 and every dyadic level sees the unit mass once.
        let energy: f64 = (1..=6).map(|n| 2f64.powf(n as f64 * (1.0 - 1.5))).sum();
        let g2 = Envelope::new(&s, &p, 0.2).unwrap().squared(0.0);
        assert!((g2 - (1.0 + energy)).abs() < 1e-12);
        let zero = MeasureSample::zero(g);
        assert_eq!(envelope(0.3, &zero, &p, 1.0).unwrap(), 0.0);
        assert!(Envelope::new(&s, &EnvelopeParams { theta: 1.0, ..p }, 1.0).is_err());
        assert!(Envelope::new(&s, &EnvelopeParams { alpha: 1.0, ..p }, 1.0).is_err());
    }

    #[test]
    fn wiener_regularity_single_seed() {
        let g = GridSpec::new(-10.0, 10.0, 1024, 1.0, 256).unwrap();
        let s = sample_wiener(&g, 11);
        let rep = regularity_report(&s, &SigmaSpec::constant(1.0), &RegularityWindow::default()).unwrap();
        let (g1, g2) = (rep.gamma1.unwrap(), rep.gamma2.unwrap());
        assert!(g1.exponent >= 0.4, "{g1:?}");
        assert!(g2.exponent >= 0.2, "{g2:?}");
        assert_eq!(rep.l2_trace.len(), g.nt + 1);
        assert!(rep.sup_bound.is_finite() && rep.sup_bound > 0.0);
    }

    #[test]
    fn wiener_variance_matches_isometry() {
        // ∫ K_t(z)² dz, K_t(z) = ∫_0^t p(r, z) dr in closed form, trapezoid on [0, 60].
        let exact = |t: f64| {
            let k = |z: f64| (t / PI).sqrt() * (-z * z / (4.0 * t)).exp() - 0.5 * z * statrs::function::erf::erfc(z / (2.0 * t.sqrt()));
            let n = 200_000;
            let h = 60.0 / n as f64;
            let inner: f64 = (1..n).map(|m| k(m as f64 * h).powi(2)).sum();
            2.0 * h * (inner + 0.5 * (k(0.0).powi(2) + k(60.0).powi(2)))
        };
        assert!((exact(1.0) - 0.311_593_3).abs() < 1e-6);
        let g = GridSpec::new(-10.0, 10.0, 1024, 1.0, 64).unwrap();
        let conv = StochasticConvolution::new(&g, &SigmaSpec::constant(1.0), Backend::Fft).unwrap();
        for i in [16, 64] {
            let rel = conv.wiener_variance(i, g.nx / 2) / exact(g.t_level(i)) - 1.0;
            assert!(rel.abs() < 0.02, "{i}: {rel}");
        }
    }

    #[test]
    fn period_mean_of_sine() {
        let t = TimeProfile::Sine {
            mean: 2.0,
            amplitude: 1.0,
            period: 1.0,
            phase: 0.3,
        };
        assert!((period_mean(&t, 1.0) - 2.0).abs() < 1e-14);
    }
}
