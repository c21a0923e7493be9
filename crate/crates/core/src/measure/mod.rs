//! Finite-resolution realizations of stochastic measures.
//!
//! A [`MeasureSample`] stores the value of `μ` on every cell of a grid. The
//! measure of any aligned interval is the sum of the cells it contains, so
//! additivity holds by construction. Integrands are step functions on the
//! same cells.
//!
//! Supported generators:
//!
//! * Wiener: independent `N(0, dx)` cell values.
//! * weighted Wiener `μ(A) = ∫ 1_A ξ dW`: `N(0, ∫_cell ξ²)`, midpoint rule for
//!   the variance.
//! * fractional Brownian motion, `1/2 < H < 1`: exact Cholesky sampling.
//! * symmetric α-stable, `α ∈ (0,1) ∪ (1,2]`: Chambers–Mallows–Stuck with cell
//!   scale `dx^{1/α}`, i.e. cell characteristic function `exp(-dx |u|^α)`.
//!   At `α = 2` a cell is `N(0, 2 dx)`.
//! * deterministic Lebesgue measure (cell value `dx`), the degenerate oracle.

mod fbm;
mod stable;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::grid::check_finite;
use crate::sum::compensated_sum;
use crate::{Error, Field, GridSpec, Result};

pub use fbm::{increment_covariance, FbmSampler};

/// Deterministic weight `ξ(t)` of a weighted Wiener measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Constant { value: f64 },
    /// `amplitude · exp(-rate · t²)`.
    Gaussian { amplitude: f64, rate: f64 },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Gaussian {
            amplitude: 1.0,
            rate: 1.0,
        }
    }
}

impl WeightSpec {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            WeightSpec::Constant { value } => value,
            WeightSpec::Gaussian { amplitude, rate } => amplitude * (-rate * t * t).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightSpec::Constant { value } if value.is_finite() => Ok(()),
            WeightSpec::Gaussian { amplitude, rate }
                if amplitude.is_finite() && rate.is_finite() && rate > 0.0 =>
            {
                Ok(())
            }
            other => Err(Error::Unsupported(format!("weight {other:?}"))),
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    /// `constant:<v>`, `gaussian` or `gaussian:<amplitude>:<rate>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Unsupported(format!("weight `{s}`")))
        };
        let spec = match parts.as_slice() {
            ["gaussian"] => WeightSpec::default(),
            ["gaussian", a, r] => WeightSpec::Gaussian {
                amplitude: num(a)?,
                rate: num(r)?,
            },
            ["constant", v] => WeightSpec::Constant { value: num(v)? },
            _ => return Err(Error::Unsupported(format!("weight `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Constant { value } => write!(f, "constant:{value}"),
            WeightSpec::Gaussian { amplitude, rate } => write!(f, "gaussian:{amplitude}:{rate}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    Wiener,
    WeightedWiener { weight: WeightSpec },
    Fbm { hurst: f64 },
    AlphaStable { alpha: f64 },
    DeterministicLebesgue,
    /// Increments supplied directly (combinations, files, zero measure).
    Tabulated,
}

impl MeasureKind {
    pub fn tag(&self) -> u8 {
        match self {
            MeasureKind::Wiener => 0,
            MeasureKind::WeightedWiener { .. } => 1,
            MeasureKind::Fbm { .. } => 2,
            MeasureKind::AlphaStable { .. } => 3,
            MeasureKind::DeterministicLebesgue => 4,
            MeasureKind::Tabulated => 5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::Wiener => "wiener",
            MeasureKind::WeightedWiener { .. } => "weighted_wiener",
            MeasureKind::Fbm { .. } => "fbm",
            MeasureKind::AlphaStable { .. } => "alpha_stable",
            MeasureKind::DeterministicLebesgue => "deterministic_lebesgue",
            MeasureKind::Tabulated => "tabulated",
        }
    }

    /// Fixed-width parameter block used by the binary sample format.
    pub fn params(&self) -> [f64; 3] {
        match *self {
            MeasureKind::WeightedWiener {
                weight: WeightSpec::Constant { value },
            } => [0.0, value, 0.0],
            MeasureKind::WeightedWiener {
                weight: WeightSpec::Gaussian { amplitude, rate },
            } => [1.0, amplitude, rate],
            MeasureKind::Fbm { hurst } => [hurst, 0.0, 0.0],
            MeasureKind::AlphaStable { alpha } => [alpha, 0.0, 0.0],
            _ => [0.0; 3],
        }
    }

    pub fn from_tag(tag: u8, params: [f64; 3]) -> Result<Self> {
        Ok(match tag {
            0 => MeasureKind::Wiener,
            1 => {
                let weight = if params[0] == 0.0 {
                    WeightSpec::Constant { value: params[1] }
                } else {
                    WeightSpec::Gaussian {
                        amplitude: params[1],
                        rate: params[2],
                    }
                };
                MeasureKind::WeightedWiener { weight }
            }
            2 => MeasureKind::Fbm { hurst: params[0] },
            3 => MeasureKind::AlphaStable { alpha: params[0] },
            4 => MeasureKind::DeterministicLebesgue,
            5 => MeasureKind::Tabulated,
            other => return Err(Error::Unsupported(format!("measure kind tag {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSample {
    grid: GridSpec,
    kind: MeasureKind,
    seed: u64,
    increments: Vec<f64>,
}

impl MeasureSample {
    pub fn from_parts(
        grid: GridSpec,
        kind: MeasureKind,
        seed: u64,
        increments: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        if increments.len() != grid.nx {
            return Err(Error::InvalidGrid(format!(
                "{} increments for {} cells",
                increments.len(),
                grid.nx
            )));
        }
        check_finite(&increments)?;
        Ok(MeasureSample {
            grid,
            kind,
            seed,
            increments,
        })
    }

    pub fn zero(grid: GridSpec) -> Self {
        MeasureSample {
            grid,
            kind: MeasureKind::Tabulated,
            seed: 0,
            increments: vec![0.0; grid.nx],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Cellwise `a·self + b·other`.
    pub fn linear_combination(a: f64, x: &MeasureSample, b: f64, y: &MeasureSample) -> Result<Self> {
        x.grid.check_same(&y.grid)?;
        let increments = x
            .increments
            .iter()
            .zip(&y.increments)
            .map(|(u, v)| a * u + b * v)
            .collect();
        MeasureSample::from_parts(x.grid, MeasureKind::Tabulated, 0, increments)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sample_wiener(grid: &GridSpec, seed: u64) -> MeasureSample {
    let sd = grid.dx().sqrt();
    let mut rng = rng(seed);
    let increments = (0..grid.nx)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    MeasureSample {
        grid: *grid,
        kind: MeasureKind::Wiener,
        seed,
        increments,
    }
}

pub fn sample_weighted_wiener(grid: &GridSpec, weight: WeightSpec, seed: u64) -> Result<MeasureSample> {
    weight.validate()?;
    let dx = grid.dx();
    let mut rng = rng(seed);
    let increments = (0..grid.nx)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            weight.value(grid.x_center(i)).abs() * dx.sqrt() * z
        })
        .collect();
    Ok(MeasureSample {
        grid: *grid,
        kind: MeasureKind::WeightedWiener { weight },
        seed,
        increments,
    })
}

pub fn sample_fbm(grid: &GridSpec, hurst: f64, seed: u64) -> Result<MeasureSample> {
    let sampler = FbmSampler::new(grid.nx, grid.dx(), hurst)?;
    Ok(sample_fbm_with(grid, &sampler, seed))
}

/// Draw with a pre-factored sampler (the factor must match the grid).
pub fn sample_fbm_with(grid: &GridSpec, sampler: &FbmSampler, seed: u64) -> MeasureSample {
    MeasureSample {
        grid: *grid,
        kind: MeasureKind::Fbm {
            hurst: sampler.hurst(),
        },
        seed,
        increments: sampler.sample(seed),
    }
}

pub fn sample_alpha_stable(grid: &GridSpec, alpha: f64, seed: u64) -> Result<MeasureSample> {
    if !(alpha > 0.0 && alpha <= 2.0) || alpha == 1.0 {
        return Err(Error::out_of_range("alpha_stable", alpha, "(0, 1) ∪ (1, 2]"));
    }
    let scale = grid.dx().powf(1.0 / alpha);
    let mut rng = rng(seed);
    let increments = (0..grid.nx)
        .map(|_| scale * stable::symmetric_stable(&mut rng, alpha))
        .collect();
    Ok(MeasureSample {
        grid: *grid,
        kind: MeasureKind::AlphaStable { alpha },
        seed,
        increments,
    })
}

pub fn deterministic_lebesgue(grid: &GridSpec) -> MeasureSample {
    MeasureSample {
        grid: *grid,
        kind: MeasureKind::DeterministicLebesgue,
        seed: 0,
        increments: vec![grid.dx(); grid.nx],
    }
}

/// `μ((lo, hi])` for cell-aligned endpoints.
pub fn measure_of(sample: &MeasureSample, lo: f64, hi: f64) -> Result<f64> {
    let range = sample.grid.cell_range(lo, hi)?;
    Ok(compensated_sum(sample.increments[range].iter().copied()))
}

/// `Σ_cells f(cell) μ(cell)` for a step function on the sample's cells.
pub fn integrate_cellwise(sample: &MeasureSample, f: &Field) -> Result<f64> {
    sample.grid.check_same(f.grid())?;
    Ok(compensated_sum(
        f.values()
            .iter()
            .zip(&sample.increments)
            .map(|(a, m)| a * m),
    ))
}

/// `∫_{(lo, hi]} f dμ` for step values `f` on the cells of `(lo, hi]`.
pub fn integrate_on(sample: &MeasureSample, lo: f64, hi: f64, f: &[f64]) -> Result<f64> {
    let range = sample.grid.cell_range(lo, hi)?;
    if range.len() != f.len() {
        return Err(Error::Misaligned { lo, hi });
    }
    Ok(compensated_sum(
        f.iter()
            .zip(&sample.increments[range])
            .map(|(a, m)| a * m),
    ))
}

/// `(j, μ((j, j+1]))` for every unit interval inside the box.
pub fn unit_masses(sample: &MeasureSample) -> Result<Vec<(i64, f64)>> {
    let g = &sample.grid;
    if g.cells_per_unit().is_none() {
        return Err(Error::Misaligned {
            lo: g.x_min,
            hi: g.x_min + 1.0,
        });
    }
    g.unit_intervals()
        .map(|j| Ok((j, measure_of(sample, j as f64, j as f64 + 1.0)?)))
        .collect()
}

fn check_dyadic_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.5 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::out_of_range("alpha", alpha, "(1/2, 1)"))
    }
}

/// `Σ_{n=1}^{n_max} 2^{n(1-2α)} Σ_{k=1}^{2ⁿ} |μ(Δ_kn)|²` over the dyadic cells of
/// `[j, j+1]`, with `n_max` the finest depth the grid resolves.
pub fn dyadic_energy(sample: &MeasureSample, j: i64, alpha: f64) -> Result<f64> {
    let depth = sample.grid.dyadic_depth().ok_or(Error::Misaligned {
        lo: j as f64,
        hi: j as f64 + 1.0,
    })?;
    dyadic_energy_to_depth(sample, j, alpha, depth)
}

/// Same sum truncated at depth `n_max`.
pub fn dyadic_energy_to_depth(sample: &MeasureSample, j: i64, alpha: f64, n_max: u32) -> Result<f64> {
    check_dyadic_alpha(alpha)?;
    let levels = dyadic_levels(sample, j)?;
    if n_max as usize > levels.len() {
        return Err(Error::out_of_range(
            "n_max",
            n_max as f64,
            "at most the dyadic depth of the grid",
        ));
    }
    Ok(levels
        .iter()
        .take(n_max as usize)
        .enumerate()
        .map(|(i, inner)| 2f64.powf((i + 1) as f64 * (1.0 - 2.0 * alpha)) * inner)
        .sum())
}

/// Inner sums `Σ_k |μ(Δ_kn)|²` for `n = 1..=depth`.
pub fn dyadic_levels(sample: &MeasureSample, j: i64) -> Result<Vec<f64>> {
    let g = &sample.grid;
    let misaligned = Error::Misaligned {
        lo: j as f64,
        hi: j as f64 + 1.0,
    };
    let depth = g.dyadic_depth().ok_or(misaligned.clone())?;
    let range = g.cell_range(j as f64, j as f64 + 1.0).map_err(|_| misaligned)?;
    let cells = &sample.increments[range];
    let mut out = Vec::with_capacity(depth as usize);
    for n in 1..=depth {
        let width = 1usize << (depth - n);
        let inner = cells
            .chunks_exact(width)
            .map(|c| compensated_sum(c.iter().copied()).powi(2))
            .sum();
        out.push(inner);
    }
    Ok(out)
}

/// `Σ_j (|j|+1)^θ μ²((j, j+1])` over unit intervals inside the box.
pub fn tail_weight(sample: &MeasureSample, theta: f64) -> Result<f64> {
    if !(theta > 1.0) {
        return Err(Error::out_of_range("theta", theta, "(1, ∞)"));
    }
    Ok(unit_masses(sample)?
        .into_iter()
        .map(|(j, m)| ((j.abs() + 1) as f64).powf(theta) * m * m)
        .sum())
}
