//! Heat kernel `p(t,x) = (4πt)^{-1/2} exp(-x²/4t)`, its spatial derivative,
//! and the convolution operators built from them.
//!
//! Spatial convolutions act on cell-centered samples through [`LagKernel`]
//! tables indexed by the cell lag `l = i - j`. Tables are point samples of the
//! kernel times `dx`, renormalized so the discrete operator keeps the exact
//! moments of the continuous one: value tables carry mass 1, derivative tables
//! first moment `-1`. As `t → 0` they collapse to the identity and to the
//! centered difference stencil respectively.

mod duhamel;
mod spectral;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::check_finite;
use crate::sum::compensated_sum;
use crate::{Error, Field, GridSpec, Result, SpaceTimeField};

pub use duhamel::Duhamel;
pub(crate) use spectral::{accumulate, Spectral};

/// Below this time the kernel is narrower than anything a grid resolves and
/// acts as the identity.
pub const DIRAC_THRESHOLD: f64 = 1e-12;

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("t", t, "(0, ∞)"))
    }
}

pub fn kernel(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    Ok(p(t, x))
}

/// `∂p/∂x (t, x) = -x/(2t) · p(t, x)`.
pub fn kernel_dx(t: f64, x: f64) -> Result<f64> {
    check_time(t)?;
    Ok(dp(t, x))
}

#[inline]
pub(crate) fn p(t: f64, x: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (2.0 * (PI * t).sqrt())
}

#[inline]
pub(crate) fn dp(t: f64, x: f64) -> f64 {
    -x / (2.0 * t) * p(t, x)
}

/// Convolution strategy. `Direct` is the O(nx²) reference; `Fft` must agree
/// with it to round-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Direct,
    #[default]
    Fft,
}

/// Convolution weights indexed by lag `l ∈ (-nx, nx)`, stored at `l + nx - 1`.
/// Applied as `out[i] = Σ_j k[i - j] · in[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagKernel {
    nx: usize,
    taps: Vec<f64>,
}

impl LagKernel {
    pub fn zeros(nx: usize) -> Self {
        LagKernel {
            nx,
            taps: vec![0.0; 2 * nx - 1],
        }
    }

    pub fn identity(nx: usize) -> Self {
        let mut k = LagKernel::zeros(nx);
        k.taps[nx - 1] = 1.0;
        k
    }

    pub fn from_fn(nx: usize, f: impl Fn(isize) -> f64) -> Self {
        let n = nx as isize;
        LagKernel {
            nx,
            taps: (-(n - 1)..n).map(f).collect(),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, lag: isize) -> f64 {
        let idx = lag + self.nx as isize - 1;
        if idx < 0 || idx as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[idx as usize]
        }
    }

    /// `Σ_l k[l]`.
    pub fn mass(&self) -> f64 {
        compensated_sum(self.taps.iter().copied())
    }

    /// `Σ_l l·dx·k[l]`.
    pub fn first_moment(&self, dx: f64) -> f64 {
        let n = self.nx as isize;
        compensated_sum(
            self.taps
                .iter()
                .enumerate()
                .map(|(i, k)| (i as isize - n + 1) as f64 * dx * k),
        )
    }

    pub(crate) fn add_scaled(&mut self, other: &LagKernel, w: f64) {
        for (a, b) in self.taps.iter_mut().zip(&other.taps) {
            *a += w * b;
        }
    }

    pub(crate) fn scale(&mut self, w: f64) {
        for a in &mut self.taps {
            *a *= w;
        }
    }

    /// Direct summation.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let n = self.nx;
        assert_eq!(input.len(), n, "lag kernel applied to a field of the wrong size");
        (0..n)
            .map(|i| {
                let row = &self.taps[i..i + n];
                row.iter().rev().zip(input).map(|(k, v)| k * v).sum()
            })
            .collect()
    }
}

/// `p(t, l·dx)·dx` normalized to mass 1.
pub fn value_profile(grid: &GridSpec, t: f64) -> LagKernel {
    let nx = grid.nx;
    if t < DIRAC_THRESHOLD {
        return LagKernel::identity(nx);
    }
    let dx = grid.dx();
    let mut k = LagKernel::from_fn(nx, |l| p(t, l as f64 * dx) * dx);
    let mass = k.mass();
    if !(mass.is_finite() && mass > 0.0) {
        return LagKernel::identity(nx);
    }
    k.scale(1.0 / mass);
    k
}

/// `∂p/∂x (t, l·dx)·dx` normalized to first moment `-1`.
pub fn slope_profile(grid: &GridSpec, t: f64) -> LagKernel {
    let nx = grid.nx;
    let dx = grid.dx();
    let stencil = || {
        let mut k = LagKernel::zeros(nx);
        if nx > 1 {
            k.taps[nx] = -0.5 / dx;
            k.taps[nx - 2] = 0.5 / dx;
        }
        k
    };
    if t < DIRAC_THRESHOLD {
        return stencil();
    }
    let mut k = LagKernel::from_fn(nx, |l| dp(t, l as f64 * dx) * dx);
    let moment = k.first_moment(dx);
    if !(moment.is_finite() && moment < -1e-280) {
        return stencil();
    }
    k.scale(-1.0 / moment);
    k
}

pub(crate) fn convolve(backend: Backend, k: &LagKernel, values: &[f64]) -> Vec<f64> {
    match backend {
        Backend::Direct => k.apply(values),
        Backend::Fft => Spectral::new(k.nx()).convolve(k, values),
    }
}

/// `P_t u0 = ∫ p(t, x-y) u0(y) dy` on the grid of `u0`.
pub fn apply_semigroup(u0: &Field, t: f64) -> Result<Field> {
    apply_semigroup_with(u0, t, Backend::Direct)
}

pub fn apply_semigroup_with(u0: &Field, t: f64, backend: Backend) -> Result<Field> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::out_of_range("t", t, "[0, ∞)"));
    }
    if t == 0.0 {
        return Field::new(*u0.grid(), u0.values().to_vec(), u0.t_label());
    }
    let k = value_profile(u0.grid(), t);
    let out = convolve(backend, &k, u0.values());
    check_finite(&out)?;
    Field::new(*u0.grid(), out, u0.t_label() + t)
}

/// `P_{t_k} u0` at every time level of the grid; row 0 is `u0` itself.
pub fn heat_flow(u0: &Field, backend: Backend) -> Result<SpaceTimeField> {
    let grid = *u0.grid();
    let spectral = Spectral::new(grid.nx);
    let u0_hat = spectral.data(u0.values());
    let rows: Vec<Vec<f64>> = (0..=grid.nt)
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                return u0.values().to_vec();
            }
            let table = value_profile(&grid, grid.t_level(k));
            match backend {
                Backend::Direct => table.apply(u0.values()),
                Backend::Fft => {
                    let mut prod = spectral.kernel(&table);
                    for (a, b) in prod.iter_mut().zip(&u0_hat) {
                        *a *= b;
                    }
                    spectral.invert(&prod)
                }
            }
        })
        .collect();
    SpaceTimeField::from_rows(grid, rows)
}
