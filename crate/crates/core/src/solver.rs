//! Mild solutions of `u_t = u_xx + f(x,u) + ∂_x g(x,u) + σ(t,x) ∂μ/∂x` by
//! Picard iteration of
//!
//! `(Au)(t) = P_t u0 + J1[f(π_N u)](t) + J2[-g(π_N u)](t) + ϑ(t)`,
//!
//! where `π_N` is the radial projection onto the `L²` ball of radius `N`.
//! A fixed point with every `‖u(t)‖ ≤ N` also solves the uncut equation;
//! [`SolveReport::cutoff_active`] records whether that held, and the solver can
//! double `N` and start over when it did not.
//!
//! Iterates are compared in `‖u‖²_λ = ∫_0^T e^{-λt} ‖u(t)‖² dt` (trapezoid
//! rule over the time levels).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::convolution::{SigmaSpec, SpaceProfile, StochasticConvolution};
use crate::grid::{l2_of, l4_of, sup_of};
use crate::heat::{heat_flow, Backend, Duhamel};
use crate::measure::MeasureSample;
use crate::{Error, Field, GridSpec, Result, SpaceTimeField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    /// `p(time, x)`.
    HeatKernel { time: f64 },
    /// `A·exp(-(x-center)²/(2 width²))` scaled to the given `L²` norm.
    GaussianBump {
        center: f64,
        width: f64,
        l2_norm: f64,
    },
    Indicator { lo: f64, hi: f64, value: f64 },
    /// Cell values on the solver grid.
    Table { values: Vec<f64> },
}

impl InitialCondition {
    pub fn field(&self, grid: &GridSpec) -> Result<Field> {
        match self {
            InitialCondition::Zero => Ok(Field::zeros(*grid, 0.0)),
            InitialCondition::HeatKernel { time } => {
                crate::heat::kernel(*time, 0.0)?;
                Field::from_fn(*grid, 0.0, |x| crate::heat::p(*time, x))
            }
            InitialCondition::GaussianBump {
                center,
                width,
                l2_norm,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::out_of_range("width", *width, "(0, ∞)"));
                }
                let amplitude = l2_norm / (width * std::f64::consts::PI.sqrt()).sqrt();
                Field::from_fn(*grid, 0.0, |x| {
                    amplitude * (-(x - center).powi(2) / (2.0 * width * width)).exp()
                })
            }
            InitialCondition::Indicator { lo, hi, value } => {
                Field::from_fn(*grid, 0.0, |x| if x > *lo && x < *hi { *value } else { 0.0 })
            }
            InitialCondition::Table { values } => Field::new(*grid, values.clone(), 0.0),
        }
    }
}

/// `source(y) + linear(y)·r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTerm {
    pub source: SpaceProfile,
    pub linear: SpaceProfile,
}

impl AffineTerm {
    pub fn zero() -> Self {
        AffineTerm {
            source: SpaceProfile::Constant { value: 0.0 },
            linear: SpaceProfile::Constant { value: 0.0 },
        }
    }

    pub fn is_zero(&self) -> bool {
        self.source.sup_abs() == 0.0 && self.linear.sup_abs() == 0.0
    }

    pub fn value(&self, y: f64, r: f64) -> f64 {
        self.source.value(y) + self.linear.value(y) * r
    }
}

impl Default for AffineTerm {
    fn default() -> Self {
        AffineTerm::zero()
    }
}

/// `offset + coefficient·r²`. The Burgers nonlinearity is `coefficient = 1/2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTerm {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub coefficient: f64,
}

impl QuadraticTerm {
    pub fn value(&self, r: f64) -> f64 {
        self.offset + self.coefficient * r * r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub u0: InitialCondition,
    #[serde(default)]
    pub f: AffineTerm,
    #[serde(default)]
    pub g1: AffineTerm,
    #[serde(default)]
    pub g2: QuadraticTerm,
    #[serde(default = "SigmaSpec::zero")]
    pub sigma: SigmaSpec,
}

/// Growth and Lipschitz constants implied by the coefficient forms:
/// `|f| ≤ a1(y) + k_f|r|`, `|g1| ≤ b1(y) + b2(y)|r|`, `|g2 - offset| ≤ k_g2 r²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub a1_sup: f64,
    pub k_f: f64,
    pub b1_sup: f64,
    pub b2_sup: f64,
    pub k_g2: f64,
}

impl CoefficientSet {
    /// Pure heat flow from `p(1, ·)`.
    pub fn heat() -> Self {
        CoefficientSet {
            u0: InitialCondition::HeatKernel { time: 1.0 },
            f: AffineTerm::zero(),
            g1: AffineTerm::zero(),
            g2: QuadraticTerm::default(),
            sigma: SigmaSpec::zero(),
        }
    }

    /// `g = r²/2`, unit-norm bump, `σ ≡ 1`.
    pub fn burgers() -> Self {
        CoefficientSet {
            u0: InitialCondition::GaussianBump {
                center: 0.0,
                width: 1.0,
                l2_norm: 1.0,
            },
            f: AffineTerm::zero(),
            g1: AffineTerm::zero(),
            g2: QuadraticTerm {
                offset: 0.0,
                coefficient: 0.5,
            },
            sigma: SigmaSpec::constant(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma.validate()?;
        for q in [self.g2.offset, self.g2.coefficient] {
            if !q.is_finite() {
                return Err(Error::Unsupported("non-finite g2 coefficient".into()));
            }
        }
        if let InitialCondition::HeatKernel { time } = self.u0 {
            crate::heat::kernel(time, 0.0)?;
        }
        Ok(())
    }

    pub fn growth(&self) -> GrowthConstants {
        GrowthConstants {
            a1_sup: self.f.source.sup_abs(),
            k_f: self.f.linear.sup_abs(),
            b1_sup: self.g1.source.sup_abs(),
            b2_sup: self.g1.linear.sup_abs(),
            k_g2: self.g2.coefficient.abs(),
        }
    }

    /// Check the growth bounds on 1000 random `(y, r)` points.
    pub fn spot_check(&self, seed: u64) -> Result<()> {
        use rand::{Rng, SeedableRng};
        let k = self.growth();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let y: f64 = rng.random_range(-20.0..20.0);
            let r: f64 = rng.random_range(-50.0..50.0);
            let slack = 1e-12 * (1.0 + r * r);
            let f = self.f.value(y, r).abs();
            let g1 = self.g1.value(y, r).abs();
            let g2 = (self.g2.value(r) - self.g2.offset).abs();
            if f > self.f.source.value(y).abs() + k.k_f * r.abs() + slack
                || g1 > self.g1.source.value(y).abs() + self.g1.linear.value(y).abs() * r.abs() + slack
                || g2 > k.k_g2 * r * r + slack
            {
                return Err(Error::Unsupported(format!(
                    "coefficient growth bound fails at y={y}, r={r}"
                )));
            }
        }
        Ok(())
    }
}

fn check_radius(n: f64) -> Result<()> {
    if n > 0.0 && n.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("N", n, "(0, ∞)"))
    }
}

/// Scales `values` in place onto the ball of radius `n`; returns whether it
/// was outside. The result never reports a norm above `n`, which makes the
/// projection exactly idempotent.
fn project_in_place(values: &mut [f64], dx: f64, n: f64) -> bool {
    let norm = l2_of(dx, values);
    if norm <= n {
        return false;
    }
    let scale = n / norm;
    values.iter_mut().for_each(|v| *v *= scale);
    while l2_of(dx, values) > n {
        values.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
    }
    true
}

/// `π_N v`: identity inside the ball, radial rescale to norm `N` outside.
pub fn project_pi_n(v: &Field, n: f64) -> Result<Field> {
    check_radius(n)?;
    let mut values = v.values().to_vec();
    project_in_place(&mut values, v.grid().dx(), n);
    Field::new(*v.grid(), values, v.t_label())
}

/// `∫_0^T e^{-λt} ‖u(t)‖² dt`, trapezoid rule over the time levels.
pub fn weighted_norm_sq(u: &SpaceTimeField, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::out_of_range("lambda_weight", lambda, "[0, ∞)"));
    }
    let g = u.grid();
    let dt = g.dt();
    let last = g.nt;
    Ok(u
        .l2_trace()
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let w = if k == 0 || k == last { 0.5 } else { 1.0 };
            w * dt * (-lambda * g.t_level(k)).exp() * n * n
        })
        .sum())
}

pub fn weighted_norm(u: &SpaceTimeField, lambda: f64) -> Result<f64> {
    Ok(weighted_norm_sq(u, lambda)?.sqrt())
}

fn weighted_distance(a: &SpaceTimeField, b: &SpaceTimeField, lambda: f64) -> Result<f64> {
    weighted_norm(&a.difference(b)?, lambda)
}

/// `R1 = sup_s (‖ζ‖²_{L²} + ‖ζ‖⁴_{L⁴} + ‖ζ‖²_{L∞})`, `R2 = sup_s ‖ζ‖²_{L∞}`.
pub fn compute_r1_r2(zeta: &SpaceTimeField) -> (f64, f64) {
    let dx = zeta.grid().dx();
    zeta.rows().fold((0.0f64, 0.0f64), |(r1, r2), row| {
        let l2 = l2_of(dx, row);
        let l4 = l4_of(dx, row);
        let sup = sup_of(row);
        (r1.max(l2 * l2 + l4.powi(4) + sup * sup), r2.max(sup * sup))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NSelection {
    pub n: f64,
    pub r1: f64,
    pub r2: f64,
}

pub const DEFAULT_MARGIN: f64 = 4.0;

/// `N = margin·(‖u0‖ + sup_t ‖ϑ(t)‖ + 1)`, with the `R1`, `R2` diagnostics of `ϑ`.
pub fn select_n(u0: &Field, theta: &SpaceTimeField, margin: f64) -> Result<NSelection> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::out_of_range("margin", margin, "(0, ∞)"));
    }
    let (r1, r2) = compute_r1_r2(theta);
    Ok(NSelection {
        n: margin * (u0.l2_norm()? + theta.sup_t_l2() + 1.0),
        r1,
        r2,
    })
}

/// First Picard iterate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// `P_t u0 + ϑ(t)`.
    #[default]
    HeatPlusNoise,
    /// Zero except for `u(0) = u0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    /// Cutoff radius; `None` selects it from the data.
    pub n_cutoff: Option<f64>,
    /// Weight of the iteration norm; `None` means `50/T`.
    pub lambda_weight: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub adaptive_n: bool,
    pub max_retries: usize,
    pub margin: f64,
    pub backend: Backend,
    pub start: Start,
}

impl SolverConfig {
    pub fn new(grid: GridSpec) -> Self {
        SolverConfig {
            grid,
            n_cutoff: None,
            lambda_weight: None,
            max_iter: 60,
            tol: 1e-8,
            adaptive_n: true,
            max_retries: 4,
            margin: DEFAULT_MARGIN,
            backend: Backend::Fft,
            start: Start::HeatPlusNoise,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_weight.unwrap_or(50.0 / self.grid.t_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if let Some(n) = self.n_cutoff {
            check_radius(n)?;
        }
        let lambda = self.lambda();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::out_of_range("lambda_weight", lambda, "(0, ∞)"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::out_of_range("tol", self.tol, "(0, ∞)"));
        }
        if self.max_iter == 0 {
            return Err(Error::out_of_range("max_iter", 0.0, "at least 1"));
        }
        if !(self.margin > 0.0) {
            return Err(Error::out_of_range("margin", self.margin, "(0, ∞)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Weighted-norm distances between successive iterates.
    pub successive_distances: Vec<f64>,
    /// `‖u - A u‖_λ` for the returned `u`, with the cutoff.
    pub final_residual: f64,
    /// Same residual without the cutoff; `None` while the cutoff is active.
    pub uncut_residual: Option<f64>,
    pub sup_t_l2_norm: f64,
    pub cutoff_active: bool,
    pub n_used: f64,
    pub n_retries: usize,
    pub lambda_weight: f64,
    pub selection: NSelection,
    pub wall_time_s: f64,
}

/// Everything `A` needs that does not change between iterations.
pub struct MildSolver {
    coeffs: CoefficientSet,
    grid: GridSpec,
    duhamel: Duhamel,
    u0: Field,
    heat: SpaceTimeField,
    theta: SpaceTimeField,
}

impl MildSolver {
    pub fn new(coeffs: &CoefficientSet, sample: &MeasureSample, backend: Backend) -> Result<Self> {
        coeffs.validate()?;
        let grid = *sample.grid();
        let theta = StochasticConvolution::new(&grid, &coeffs.sigma, backend)?.theta_all(sample)?;
        MildSolver::with_theta(coeffs, theta, backend)
    }

    /// Reuse a precomputed stochastic term.
    pub fn with_theta(coeffs: &CoefficientSet, theta: SpaceTimeField, backend: Backend) -> Result<Self> {
        coeffs.validate()?;
        let grid = *theta.grid();
        let u0 = coeffs.u0.field(&grid)?;
        let heat = heat_flow(&u0, backend)?;
        Ok(MildSolver {
            coeffs: coeffs.clone(),
            grid,
            duhamel: Duhamel::new(&grid, backend)?,
            u0,
            heat,
            theta,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn u0(&self) -> &Field {
        &self.u0
    }

    pub fn theta(&self) -> &SpaceTimeField {
        &self.theta
    }

    pub fn heat(&self) -> &SpaceTimeField {
        &self.heat
    }

    pub fn duhamel(&self) -> &Duhamel {
        &self.duhamel
    }

    /// `A u` with cutoff radius `n`; `None` applies the uncut operator.
    pub fn apply_a(&self, u: &SpaceTimeField, n: Option<f64>) -> Result<SpaceTimeField> {
        self.grid.check_same(u.grid())?;
        if let Some(n) = n {
            check_radius(n)?;
        }
        let dx = self.grid.dx();
        let ys = self.grid.x_centers();
        let levels = self.grid.nt + 1;
        let mut projected = u.clone();
        if let Some(n) = n {
            for k in 0..levels {
                project_in_place(projected.row_mut(k), dx, n);
            }
        }
        let c = &self.coeffs;
        let source = |op: &dyn Fn(f64, f64) -> f64| -> Result<SpaceTimeField> {
            let flat = projected
                .as_flat()
                .chunks(self.grid.nx)
                .flat_map(|row| row.iter().zip(&ys).map(|(r, y)| op(*y, *r)))
                .collect();
            SpaceTimeField::from_flat(self.grid, flat)
        };
        let f_field = if c.f.is_zero() {
            None
        } else {
            Some(source(&|y, r| c.f.value(y, r))?)
        };
        // A constant part of g has zero x-derivative on the line; on the
        // truncated box it would only produce edge artifacts, so it is dropped.
        let g_field = if c.g1.is_zero() && c.g2.coefficient == 0.0 {
            None
        } else {
            Some(source(&|y, r| -(c.g1.value(y, r) + c.g2.coefficient * r * r))?)
        };
        let drift = self.duhamel.apply(f_field.as_ref(), g_field.as_ref())?;
        let flat = self
            .heat
            .as_flat()
            .iter()
            .zip(drift.as_flat())
            .zip(self.theta.as_flat())
            .map(|((h, d), t)| h + d + t)
            .collect();
        SpaceTimeField::from_flat(self.grid, flat)
    }

    fn initial_iterate(&self, start: Start) -> Result<SpaceTimeField> {
        match start {
            Start::HeatPlusNoise => {
                let flat = self
                    .heat
                    .as_flat()
                    .iter()
                    .zip(self.theta.as_flat())
                    .map(|(h, t)| h + t)
                    .collect();
                SpaceTimeField::from_flat(self.grid, flat)
            }
            Start::Zero => {
                let mut u = SpaceTimeField::zeros(self.grid);
                u.row_mut(0).copy_from_slice(self.u0.values());
                Ok(u)
            }
        }
    }

    pub fn solve(&self, config: &SolverConfig) -> Result<(SpaceTimeField, SolveReport)> {
        config.validate()?;
        self.grid.check_same(&config.grid)?;
        let started = Instant::now();
        let lambda = config.lambda();
        let selection = select_n(&self.u0, &self.theta, config.margin)?;
        let mut n = config.n_cutoff.unwrap_or(selection.n);
        let mut retries = 0;
        loop {
            let (u, distances, cutoff_active) = self.iterate(config, n, lambda)?;
            if cutoff_active && config.adaptive_n {
                if retries >= config.max_retries {
                    return Err(Error::CutoffRetriesExhausted {
                        retries,
                        n_cutoff: n,
                    });
                }
                retries += 1;
                n *= 2.0;
                continue;
            }
            let final_residual = weighted_distance(&u, &self.apply_a(&u, Some(n))?, lambda)?;
            let uncut_residual = if cutoff_active {
                None
            } else {
                Some(weighted_distance(&u, &self.apply_a(&u, None)?, lambda)?)
            };
            let report = SolveReport {
                iterations: distances.len(),
                successive_distances: distances,
                final_residual,
                uncut_residual,
                sup_t_l2_norm: u.sup_t_l2(),
                cutoff_active,
                n_used: n,
                n_retries: retries,
                lambda_weight: lambda,
                selection,
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            return Ok((u, report));
        }
    }

    fn iterate(&self, config: &SolverConfig, n: f64, lambda: f64) -> Result<(SpaceTimeField, Vec<f64>, bool)> {
        let mut u = self.initial_iterate(config.start)?;
        let mut cutoff_active = u.sup_t_l2() > n;
        let mut distances = Vec::new();
        for _ in 0..config.max_iter {
            let next = self.apply_a(&u, Some(n))?;
            cutoff_active |= next.sup_t_l2() > n;
            let diff = next.difference(&u)?;
            let d = weighted_norm(&diff, lambda)?;
            distances.push(d);
            u = next;
            if d < config.tol && diff.sup_t_l2() < config.tol {
                return Ok((u, distances, cutoff_active));
            }
        }
        Err(Error::NonConvergence {
            iterations: config.max_iter,
            last: distances.last().copied().unwrap_or(f64::NAN),
            distances,
        })
    }
}

/// Solve for one measure realization.
pub fn picard_solve(
    coeffs: &CoefficientSet,
    sample: &MeasureSample,
    config: &SolverConfig,
) -> Result<(SpaceTimeField, SolveReport)> {
    config.grid.check_same(sample.grid())?;
    MildSolver::new(coeffs, sample, config.backend)?.solve(config)
}
