//! Truncated space-time lattice and discrete function-space norms.
//!
//! The real line is truncated to `[x_min, x_max]` and split into `nx` cells;
//! fields are sampled at cell centers, so a field doubles as a piecewise
//! constant function and the rectangle rule below is exact for it.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Mass of the heat kernel outside the box above which a configuration is
/// considered under-resolved in space.
pub const TRUNCATION_MASS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_max: f64,
    pub nt: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, nx: usize, t_max: f64, nt: usize) -> Result<Self> {
        let grid = GridSpec {
            x_min,
            x_max,
            nx,
            t_max,
            nt,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Box `[-10, 10]` with 1024 cells, `T = 1` with 256 steps.
    pub fn default_rig() -> Self {
        GridSpec {
            x_min: -10.0,
            x_max: 10.0,
            nx: 1024,
            t_max: 1.0,
            nt: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.nx < 2 {
            return Err(Error::InvalidGrid(format!("nx = {} < 2", self.nx)));
        }
        if self.nt < 1 {
            return Err(Error::InvalidGrid("nt must be at least 1".into()));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidGrid(format!("t_max = {} must be > 0", self.t_max)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.nt as f64
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn x_centers(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x_center(i)).collect()
    }

    pub fn t_level(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Same spatial lattice, different time discretization.
    pub fn with_time(&self, t_max: f64, nt: usize) -> Result<Self> {
        GridSpec::new(self.x_min, self.x_max, self.nx, t_max, nt)
    }

    /// Index of the cell edge at `x`, if `x` lies on one.
    pub fn edge_index(&self, x: f64) -> Option<usize> {
        let pos = (x - self.x_min) / self.dx();
        let k = pos.round();
        if (pos - k).abs() > 1e-9 || k < 0.0 || k > self.nx as f64 {
            return None;
        }
        Some(k as usize)
    }

    /// Cell range `[lo, hi)` covering the aligned interval `(a, b]`.
    pub fn cell_range(&self, a: f64, b: f64) -> Result<std::ops::Range<usize>> {
        match (self.edge_index(a), self.edge_index(b)) {
            (Some(lo), Some(hi)) if lo <= hi => Ok(lo..hi),
            _ => Err(Error::Misaligned { lo: a, hi: b }),
        }
    }

    /// Number of cells per unit interval when unit intervals `(j, j+1]` are
    /// unions of whole cells.
    pub fn cells_per_unit(&self) -> Option<usize> {
        let per = 1.0 / self.dx();
        let n = per.round();
        if n < 1.0 || (per - n).abs() > 1e-9 || self.edge_index(self.x_min.ceil()).is_none() {
            return None;
        }
        Some(n as usize)
    }

    /// Depth `m` with `2^m` cells per unit interval, when the lattice refines
    /// the dyadic partitions of every unit interval.
    pub fn dyadic_depth(&self) -> Option<u32> {
        let n = self.cells_per_unit()?;
        if !n.is_power_of_two() || self.x_min.fract() != 0.0 {
            return None;
        }
        Some(n.trailing_zeros())
    }

    /// Unit intervals `(j, j+1]` contained in the box.
    pub fn unit_intervals(&self) -> std::ops::Range<i64> {
        (self.x_min.ceil() as i64)..(self.x_max.floor() as i64)
    }

    /// Mass of `p(t, ·)` (centered at the origin) falling outside the box.
    pub fn truncation_mass(&self, t: f64) -> f64 {
        let s = 2.0 * t.sqrt();
        0.5 * erfc(self.x_max / s) + 0.5 * erfc(-self.x_min / s)
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Samples of a function at the cell centers of a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
    t_label: f64,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>, t_label: f64) -> Result<Self> {
        if values.len() != grid.nx {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.nx
            )));
        }
        check_finite(&values)?;
        Ok(Field {
            grid,
            values,
            t_label,
        })
    }

    pub fn zeros(grid: GridSpec, t_label: f64) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.nx],
            t_label,
        }
    }

    pub fn from_fn(grid: GridSpec, t_label: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.x_centers().into_iter().map(f).collect();
        Field::new(grid, values, t_label)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn t_label(&self) -> f64 {
        self.t_label
    }

    pub fn l2_norm(&self) -> Result<f64> {
        l2_norm(self)
    }

    pub fn sup_norm(&self) -> Result<f64> {
        sup_norm(self)
    }

    /// Pointwise linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Field::new(self.grid, values, self.t_label)
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
            t_label: self.t_label,
        }
    }
}

/// A field at every time level `t_0 = 0, …, t_nt = T`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: GridSpec) -> Self {
        SpaceTimeField {
            grid,
            values: vec![0.0; (grid.nt + 1) * grid.nx],
        }
    }

    pub fn from_rows(grid: GridSpec, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != grid.nt + 1 {
            return Err(Error::InvalidGrid(format!(
                "{} rows for {} time levels",
                rows.len(),
                grid.nt + 1
            )));
        }
        let mut values = Vec::with_capacity((grid.nt + 1) * grid.nx);
        for row in rows {
            if row.len() != grid.nx {
                return Err(Error::InvalidGrid(format!(
                    "row of length {} on a grid with {} cells",
                    row.len(),
                    grid.nx
                )));
            }
            values.extend(row);
        }
        check_finite(&values)?;
        Ok(SpaceTimeField { grid, values })
    }

    pub fn from_flat(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != (grid.nt + 1) * grid.nx {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {}x{} field",
                values.len(),
                grid.nt + 1,
                grid.nx
            )));
        }
        check_finite(&values)?;
        Ok(SpaceTimeField { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn levels(&self) -> usize {
        self.grid.nt + 1
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.values[k * nx..(k + 1) * nx]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        let nx = self.grid.nx;
        &mut self.values[k * nx..(k + 1) * nx]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.grid.nx)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, k: usize) -> Field {
        Field {
            grid: self.grid,
            values: self.row(k).to_vec(),
            t_label: self.grid.t_level(k),
        }
    }

    /// `‖u(t_k)‖_{L²}` for every level.
    pub fn l2_trace(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        self.rows().map(|r| l2_of(dx, r)).collect()
    }

    pub fn sup_t_l2(&self) -> f64 {
        self.l2_trace().into_iter().fold(0.0, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn difference(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.grid.check_same(&other.grid)?;
        Ok(SpaceTimeField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `sup_t ‖self(t) − other(t)‖_{L²}`.
    pub fn sup_t_l2_distance(&self, other: &SpaceTimeField) -> Result<f64> {
        Ok(self.difference(other)?.sup_t_l2())
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn l2_of(dx: f64, values: &[f64]) -> f64 {
    (dx * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub(crate) fn l4_of(dx: f64, values: &[f64]) -> f64 {
    (dx * values.iter().map(|v| v.powi(4)).sum::<f64>()).powf(0.25)
}

pub(crate) fn sup_of(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `sqrt(dx · Σ v²)`.
pub fn l2_norm(f: &Field) -> Result<f64> {
    check_finite(&f.values)?;
    Ok(l2_of(f.grid.dx(), &f.values))
}

/// `(dx · Σ v⁴)^{1/4}`.
pub fn l4_norm(f: &Field) -> Result<f64> {
    check_finite(&f.values)?;
    Ok(l4_of(f.grid.dx(), &f.values))
}

pub fn sup_norm(f: &Field) -> Result<f64> {
    check_finite(&f.values)?;
    Ok(sup_of(&f.values))
}

pub fn l2_distance(f: &Field, g: &Field) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    check_finite(&f.values)?;
    check_finite(&g.values)?;
    let dx = f.grid.dx();
    let s: f64 = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((dx * s).sqrt())
}
