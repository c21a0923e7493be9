//! Averaging of a fast-oscillating noise coefficient `σ(t/ε, x)`.
//!
//! For a periodic time factor the limit coefficient is `σ̄(y) = ⟨φ⟩·c(y)`.
//! [`averaging_experiment`] solves the averaged equation once and the
//! oscillating one for each `ε`, all against the same measure realization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::besov::ols_slope;
use crate::convolution::{period_mean, SigmaSpec, TimeProfile};
use crate::quadrature::GaussLegendre;
use crate::solver::{CoefficientSet, MildSolver, SolveReport, SolverConfig};
use crate::measure::MeasureSample;
use crate::{Error, Result};

pub use crate::solver::compute_r1_r2;

/// `σ̄`: the time average of `σ`, as a spec with a constant time factor.
pub fn sigma_bar(sigma: &SigmaSpec) -> Result<SigmaSpec> {
    sigma.validate()?;
    let mean = if sigma.time.is_constant() {
        sigma.time.value(0.0)
    } else {
        match sigma.time.period() {
            Some(p) => period_mean(&sigma.time, p),
            None => {
                return Err(Error::NoTimeAverage(format!(
                    "time factor {:?} is not periodic",
                    sigma.time
                )))
            }
        }
    };
    Ok(SigmaSpec {
        time: TimeProfile::Constant { value: mean },
        space: sigma.space.clone(),
        time_scale: 1.0,
    })
}

const PRIMITIVE_CELLS: usize = 4096;

/// Running maximum of `|∫_0^r (φ(s) - mean) ds|` on `cells` equal steps over `[0, r_max]`.
fn primitive_sup(phi: &dyn Fn(f64) -> f64, mean: f64, r_max: f64, cells: usize) -> Vec<f64> {
    let rule = GaussLegendre::new(8);
    let h = r_max / cells as f64;
    let mut acc = 0.0;
    let mut best = 0.0f64;
    (0..cells)
        .map(|k| {
            acc += rule.integrate(k as f64 * h, (k + 1) as f64 * h, |s| phi(s) - mean);
            best = best.max(acc.abs());
            best
        })
        .collect()
}

/// `sup |G_σ(r, y)|` over `0 ≤ r ≤ r_max`, where `G_σ(r, y) = ∫_0^r (σ(s,y) - σ̄(y)) ds`.
///
/// Periodic factors are integrated over one period. Aperiodic ones are
/// checked for growth: the mean is taken over `[0, r_max/2]` and the sup over
/// `[0, r_max]` must not exceed the sup over the first half.
pub fn g_sigma_sup(sigma: &SigmaSpec, r_max: f64) -> Result<f64> {
    sigma.validate()?;
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::out_of_range("r_max", r_max, "(0, ∞)"));
    }
    let c = sigma.space.sup_abs();
    if sigma.time.is_constant() || c == 0.0 {
        return Ok(0.0);
    }
    let phi = |s: f64| sigma.time_factor(s);
    if let Some(p) = sigma.period() {
        let mean = sigma_bar(sigma)?.time.value(0.0);
        let window = p.min(r_max);
        let sup = primitive_sup(&phi, mean, window, PRIMITIVE_CELLS);
        return Ok(c * sup[PRIMITIVE_CELLS - 1]);
    }
    let half = PRIMITIVE_CELLS / 2;
    let rule = GaussLegendre::new(8);
    let h = r_max / PRIMITIVE_CELLS as f64;
    let mean = (0..half)
        .map(|k| rule.integrate(k as f64 * h, (k + 1) as f64 * h, phi))
        .sum::<f64>()
        / (0.5 * r_max);
    let sup = primitive_sup(&phi, mean, r_max, PRIMITIVE_CELLS);
    let (first, second) = (sup[half - 1], sup[PRIMITIVE_CELLS - 1]);
    if second > first * (1.0 + 1e-6) + 1e-12 {
        return Err(Error::UnboundedPrimitive { first, second });
    }
    Ok(c * second)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingScenario {
    /// Coefficients with the un-scaled `σ(s, y) = φ(s)·c(y)`.
    pub coeffs: CoefficientSet,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub solver: SolverConfig,
}

impl AveragingScenario {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.coeffs.validate()?;
        sigma_bar(&self.coeffs.sigma)?;
        if self.epsilons.is_empty() {
            return Err(Error::Degenerate("empty epsilon list".into()));
        }
        for (k, &e) in self.epsilons.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::out_of_range("epsilon", e, "(0, ∞)"));
            }
            if k > 0 && e >= self.epsilons[k - 1] {
                return Err(Error::Unsupported("epsilon list must be strictly decreasing".into()));
            }
        }
        Ok(())
    }
}

/// Slope of a log-log fit of `value` against `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub sup_t_l2_distance: f64,
    /// `sup_{t,x} |ϑ_ε - ϑ̄|`.
    pub xi_sup: f64,
    pub report: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub averaged: SolveReport,
    pub distance_rate: Option<RateFit>,
    pub xi_rate: Option<RateFit>,
}

fn rate_fit(eps: &[f64], values: &[f64]) -> Option<RateFit> {
    if eps.len() < 2 || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (exponent, std_error) = ols_slope(&xs, &ys);
    Some(RateFit {
        exponent,
        std_error,
    })
}

/// Solve `ū` and every `u_ε` against `sample`; rows follow `scenario.epsilons`.
pub fn averaging_experiment(scenario: &AveragingScenario, sample: &MeasureSample) -> Result<ConvergenceTable> {
    scenario.validate()?;
    scenario.solver.grid.check_same(sample.grid())?;
    let backend = scenario.solver.backend;
    let mut averaged_coeffs = scenario.coeffs.clone();
    averaged_coeffs.sigma = sigma_bar(&scenario.coeffs.sigma)?;
    let averaged = MildSolver::new(&averaged_coeffs, sample, backend)?;
    let (u_bar, averaged_report) = averaged.solve(&scenario.solver)?;
    let rows = scenario
        .epsilons
        .par_iter()
        .map(|&epsilon| {
            let annotate = |source: Error| Error::Averaging {
                epsilon,
                source: Box::new(source),
            };
            let mut coeffs = scenario.coeffs.clone();
            coeffs.sigma = scenario.coeffs.sigma.with_time_scale(epsilon);
            let solver = MildSolver::new(&coeffs, sample, backend).map_err(annotate)?;
            let (u, report) = solver.solve(&scenario.solver).map_err(annotate)?;
            let sup_t_l2_distance = u.difference(&u_bar).map_err(annotate)?.sup_t_l2();
            let xi_sup = solver
                .theta()
                .difference(averaged.theta())
                .map_err(annotate)?
                .sup_abs();
            Ok(ConvergenceRow {
                epsilon,
                sup_t_l2_distance,
                xi_sup,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let dist: Vec<f64> = rows.iter().map(|r| r.sup_t_l2_distance).collect();
    let xi: Vec<f64> = rows.iter().map(|r| r.xi_sup).collect();
    Ok(ConvergenceTable {
        distance_rate: rate_fit(&eps, &dist),
        xi_rate: rate_fit(&eps, &xi),
        rows,
        averaged: averaged_report,
    })
}

/// `n`-th term `Γ(1/4)^n z^{n/4-1} / Γ(n/4)`, evaluated in log space.
pub fn gronwall_term(n: usize, z: f64) -> f64 {
    let n = n as f64;
    (n * ln_gamma(0.25) - ln_gamma(n / 4.0) + (n / 4.0 - 1.0) * z.ln()).exp()
}

const GRONWALL_MAX_TERMS: usize = 1_000_000;

/// `h(z) = Σ_{n≥1} Γ(1/4)^n z^{n/4-1} / Γ(n/4)`, stopped once the next term
/// drops below `tol·|partial sum|`. Behaves like `Γ(1/4) z^{-3/4}/Γ(1/4)` as `z → 0`
/// and grows like `exp(Γ(1/4)^4 z)` for large `z`.
pub fn gronwall_series(z: f64, tol: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::out_of_range("z", z, "(0, ∞)"));
    }
    if !(tol > 0.0) {
        return Err(Error::out_of_range("tol", tol, "(0, ∞)"));
    }
    let mut sum = 0.0;
    for n in 1..=GRONWALL_MAX_TERMS {
        sum += gronwall_term(n, z);
        if !sum.is_finite() {
            return Err(Error::Degenerate(format!("series overflows at z = {z}")));
        }
        if gronwall_term(n + 1, z) < tol * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Degenerate(format!(
        "series not converged after {GRONWALL_MAX_TERMS} terms at z = {z}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::SpaceProfile;
    use crate::measure::sample_wiener;
    use crate::solver::InitialCondition;
    use crate::GridSpec;
    use std::f64::consts::PI;

    fn sine(mean: f64) -> SigmaSpec {
        SigmaSpec::separable(
            TimeProfile::Sine {
                mean,
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
    fn sigma_bar_cases() {
        let zero_mean = sigma_bar(&sine(0.0)).unwrap();
        assert!(zero_mean.time.value(0.0).abs() < 1e-14);
        let bar = sigma_bar(&sine(2.0)).unwrap();
        for y in [-1.5, 0.0, 0.3, 2.0] {
            assert!((bar.value(0.7, y) - 2.0 * (-y * y).exp()).abs() < 1e-13);
        }
        assert_eq!(sigma_bar(&bar).unwrap(), bar);
        let c = SigmaSpec::constant(1.7);
        assert_eq!(sigma_bar(&c).unwrap(), c);
        let scaled = sigma_bar(&sine(2.0).with_time_scale(1.0 / 16.0)).unwrap();
        assert!((scaled.value(0.0, 0.0) - 2.0).abs() < 1e-13);
        let drift = SigmaSpec::separable(
            TimeProfile::Linear {
                intercept: 0.0,
                slope: 1.0,
            },
            SpaceProfile::Constant { value: 1.0 },
        );
        assert!(matches!(sigma_bar(&drift), Err(Error::NoTimeAverage(_))));
        let table = SigmaSpec::separable(
            TimeProfile::Table {
                step: 0.25,
                values: vec![0.0, 1.0, 0.0, -1.0],
                periodic: true,
            },
            SpaceProfile::Constant { value: 1.0 },
        );
        assert!(sigma_bar(&table).unwrap().time.value(0.0).abs() < 1e-13);
    }

    #[test]
    fn g_sigma_sup_cases() {
        let s = SigmaSpec::separable(
            TimeProfile::Sine {
                mean: 0.0,
                amplitude: 1.0,
                period: 1.0,
                phase: 0.0,
            },
            SpaceProfile::Constant { value: 1.0 },
        );
        let closed = (0..=100_000)
            .map(|k| (1.0 - (2.0 * PI * k as f64 / 100_000.0).cos()) / (2.0 * PI))
            .fold(0.0, f64::max);
        let got = g_sigma_sup(&s, 10.0).unwrap();
        assert!((got - closed).abs() < 1e-9, "{got}");
        assert!((got - 1.0 / PI).abs() < 1e-9);
        let shifted = SigmaSpec::separable(
            TimeProfile::Sine {
                mean: 5.0,
                amplitude: 1.0,
                period: 1.0,
                phase: 0.0,
            },
            SpaceProfile::Constant { value: 1.0 },
        );
        assert!((g_sigma_sup(&shifted, 10.0).unwrap() - got).abs() < 1e-9);
        assert!((g_sigma_sup(&s.with_time_scale(0.25), 10.0).unwrap() - got / 4.0).abs() < 1e-9);
        assert_eq!(g_sigma_sup(&SigmaSpec::constant(3.0), 10.0).unwrap(), 0.0);
        let drift = SigmaSpec::separable(
            TimeProfile::Linear {
                intercept: 0.0,
                slope: 1.0,
            },
            SpaceProfile::Constant { value: 1.0 },
        );
        assert!(matches!(
            g_sigma_sup(&drift, 10.0),
            Err(Error::UnboundedPrimitive { .. })
        ));
    }

    #[test]
    fn r1_r2_ordering() {
        let g = GridSpec::new(-4.0, 4.0, 64, 1.0, 8).unwrap();
        let sample = sample_wiener(&g, 4);
        let theta = crate::convolution::StochasticConvolution::new(&g, &SigmaSpec::constant(1.0), Default::default())
            .unwrap()
            .theta_all(&sample)
            .unwrap();
        let (r1, r2) = compute_r1_r2(&theta);
        assert!(r2 <= r1 && r2 > 0.0);
    }

    fn brute(z: f64, terms: usize) -> f64 {
        (1..=terms).map(|n| gronwall_term(n, z)).sum()
    }

    #[test]
    fn gronwall_matches_partial_sums() {
        for z in [1e-3, 1e-2, 0.05] {
            let got = gronwall_series(z, 1e-12).unwrap();
            let oracle = brute(z, 200);
            assert!(((got - oracle) / oracle).abs() < 1e-10, "{z}");
        }
        let got = gronwall_series(1.0, 1e-12).unwrap();
        let oracle = brute(1.0, 4000);
        assert!(((got - oracle) / oracle).abs() < 1e-10);
    }

    #[test]
    fn gronwall_small_z() {
        for z in [1e-8, 1e-10] {
            let ratio = gronwall_series(z, 1e-12).unwrap() / gronwall_term(1, z);
            assert!((1.0..=1.5).contains(&ratio), "{ratio}");
        }
        let first = gronwall_term(1, 1e-6);
        assert!((first * 1e-6f64.powf(0.75) - 1.0).abs() < 1e-12);
        let zs: Vec<f64> = (1..=40).map(|k| 1e-9 * k as f64).collect();
        let vals: Vec<f64> = zs.iter().map(|z| gronwall_series(*z, 1e-12).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        assert!(gronwall_series(0.0, 1e-12).is_err());
        assert!(gronwall_series(-1.0, 1e-12).is_err());
    }

    fn scenario(sigma: SigmaSpec, g: GridSpec, eps: Vec<f64>) -> AveragingScenario {
        let mut coeffs = CoefficientSet::burgers();
        coeffs.sigma = sigma;
        coeffs.u0 = InitialCondition::GaussianBump {
            center: 0.0,
            width: 1.0,
            l2_norm: 0.5,
        };
        AveragingScenario {
            coeffs,
            epsilons: eps,
            solver: SolverConfig::new(g),
        }
    }

    #[test]
    fn constant_sigma_gives_identical_solutions() {
        let g = GridSpec::new(-6.0, 6.0, 128, 1.0, 32).unwrap();
        let sample = sample_wiener(&g, 9);
        let sc = scenario(SigmaSpec::constant(1.0), g, vec![1.0, 0.25]);
        let table = averaging_experiment(&sc, &sample).unwrap();
        for row in &table.rows {
            assert!(row.sup_t_l2_distance <= 2.0 * sc.solver.tol);
            assert_eq!(row.xi_sup, 0.0);
        }
    }

    #[test]
    fn oscillating_sigma_distance_shrinks() {
        let g = GridSpec::new(-6.0, 6.0, 128, 1.0, 64).unwrap();
        let sample = sample_wiener(&g, 9);
        let sc = scenario(sine(1.0), g, vec![1.0, 0.25, 1.0 / 16.0]);
        let table = averaging_experiment(&sc, &sample).unwrap();
        let d: Vec<f64> = table.rows.iter().map(|r| r.sup_t_l2_distance).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        let rate = table.xi_rate.unwrap();
        assert!(rate.exponent > 0.0 && rate.std_error.is_finite());
    }

    #[test]
    fn scenario_validation() {
        let g = GridSpec::new(-6.0, 6.0, 64, 1.0, 16).unwrap();
        assert!(scenario(sine(1.0), g, vec![]).validate().is_err());
        assert!(scenario(sine(1.0), g, vec![0.25, 1.0]).validate().is_err());
        assert!(scenario(sine(1.0), g, vec![1.0, -0.5]).validate().is_err());
        let drift = SigmaSpec::separable(
            TimeProfile::Linear {
                intercept: 1.0,
                slope: 1.0,
            },
            SpaceProfile::Constant { value: 1.0 },
        );
        assert!(scenario(drift, g, vec![1.0]).validate().is_err());
        assert!(scenario(sine(1.0), g, vec![1.0, 0.5]).validate().is_ok());
    }
}
