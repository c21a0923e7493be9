//! Discrete Besov `B^α_{2,2}([c,d])` norms, Hölder exponent fits and the
//! pathwise dyadic bound for integrals of step functions against a measure.
//!
//! The norm is `‖g‖_{L²} + (∫_0^{d-c} w₂(g,r)² r^{-2α-1} dr)^{1/2}` with
//! `w₂(g,r)² = sup_{0≤h≤r} ∫_c^{d-h} |g(y+h) - g(y)|² dy`. Shifts run over the
//! grid lattice `h = k·dx`; the `r` integral uses the midpoint of every
//! lattice cell `((k-1)dx, k·dx]`, where only shifts up to `(k-1)dx` are
//! admissible.

use serde::{Deserialize, Serialize};

use crate::grid::l2_of;
use crate::measure::{dyadic_energy, integrate_on, measure_of, MeasureSample};
use crate::{Error, Field, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovEstimate {
    pub alpha: f64,
    pub c: f64,
    pub d: f64,
    pub l2_part: f64,
    pub modulus_part: f64,
    pub total: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::out_of_range("alpha", alpha, "(0, 1)"))
    }
}

/// Norm of the restriction of `g` to the aligned interval `[c, d]`.
pub fn besov_norm(g: &Field, c: f64, d: f64, alpha: f64) -> Result<BesovEstimate> {
    let range = g.grid().cell_range(c, d)?;
    let mut est = besov_norm_cells(&g.values()[range], g.grid().dx(), alpha)?;
    est.c = c;
    est.d = d;
    Ok(est)
}

/// Norm of cell values `values` with cell width `dx`, on `[0, len·dx]`.
pub fn besov_norm_cells(values: &[f64], dx: f64, alpha: f64) -> Result<BesovEstimate> {
    check_alpha(alpha)?;
    let m = values.len();
    if m < 4 {
        return Err(Error::Degenerate(format!(
            "Besov interval spans {m} cells, at least 4 needed"
        )));
    }
    if !(dx > 0.0) {
        return Err(Error::out_of_range("dx", dx, "(0, ∞)"));
    }
    let shift_energy = |k: usize| -> f64 {
        dx * values[k..]
            .iter()
            .zip(values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let mut w2 = 0.0f64;
    let mut modulus_sq = 0.0;
    for k in 1..=m {
        // Shifts admissible for r ∈ ((k-1)dx, k dx] are 0..=(k-1).
        if k >= 2 {
            w2 = w2.max(shift_energy(k - 1));
        }
        let r = (k as f64 - 0.5) * dx;
        modulus_sq += dx * w2 * r.powf(-2.0 * alpha - 1.0);
    }
    let l2_part = l2_of(dx, values);
    let modulus_part = modulus_sq.sqrt();
    Ok(BesovEstimate {
        alpha,
        c: 0.0,
        d: m as f64 * dx,
        l2_part,
        modulus_part,
        total: l2_part + modulus_part,
    })
}

/// Least-squares Hölder exponent: slope of `log E|v(i+L) - v(i)|` against
/// `log(L·step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub exponent: f64,
    pub std_error: f64,
    pub lags: Vec<usize>,
    pub mean_increments: Vec<f64>,
}

/// Geometric lags `1, 2, 4, …` up to `max_lag`.
pub fn dyadic_lags(max_lag: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |l| Some(l * 2))
        .take_while(|l| *l <= max_lag)
        .collect()
}

pub fn holder_fit(values: &[f64], step: f64, lags: &[usize]) -> Result<HolderFit> {
    holder_fit_pooled(&[values], step, lags)
}

/// Fit with increments pooled over several independent rows of equal length.
pub fn holder_fit_pooled(rows: &[&[f64]], step: f64, lags: &[usize]) -> Result<HolderFit> {
    let n = rows.iter().map(|r| r.len()).min().unwrap_or(0);
    if n < 16 {
        return Err(Error::Degenerate(format!(
            "Hölder fit needs at least 16 samples, got {n}"
        )));
    }
    let (lo, hi) = match (lags.iter().min(), lags.iter().max()) {
        (Some(&lo), Some(&hi)) if lo >= 1 => (lo, hi),
        _ => return Err(Error::Degenerate("Hölder fit needs positive lags".into())),
    };
    if (hi as f64) < 10.0 * lo as f64 {
        return Err(Error::Degenerate(format!(
            "lags {lo}..{hi} span less than one decade"
        )));
    }
    if hi >= n {
        return Err(Error::Degenerate(format!(
            "lag {hi} does not fit in {n} samples"
        )));
    }
    let mut xs = Vec::with_capacity(lags.len());
    let mut ys = Vec::with_capacity(lags.len());
    let mut means = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut total = 0.0;
        let mut count = 0usize;
        for row in rows {
            for (a, b) in row[lag..].iter().zip(row.iter()) {
                total += (a - b).abs();
                count += 1;
            }
        }
        let mean = total / count as f64;
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::Degenerate(format!(
                "no variation at lag {lag}: exponent undefined"
            )));
        }
        xs.push((lag as f64 * step).ln());
        ys.push(mean.ln());
        means.push(mean);
    }
    let (slope, se) = ols_slope(&xs, &ys);
    Ok(HolderFit {
        exponent: slope,
        std_error: se,
        lags: lags.to_vec(),
        mean_increments: means,
    })
}

/// Slope and its standard error.
pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let se = if xs.len() > 2 {
        let intercept = my - slope * mx;
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, se)
}

/// Both sides of `|∫_{(j,j+1]} q dμ| ≤ |q(j) μ((j,j+1])| + C ‖q‖_{B^α_{22}} E_j^{1/2}`,
/// `E_j` the dyadic energy of `μ` on `[j, j+1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicCheck {
    pub j: i64,
    pub alpha: f64,
    pub constant: f64,
    pub lhs: f64,
    pub first_term: f64,
    pub besov: f64,
    pub energy: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `lhs / rhs`; 0 when both vanish.
    pub slack: f64,
    /// Smallest constant for which this pair satisfies the bound.
    pub required_constant: f64,
}

/// `q` holds one value per grid cell of `[j, j+1]`.
pub fn verify_dyadic_bound(
    q: &[f64],
    sample: &MeasureSample,
    j: i64,
    alpha: f64,
    constant: f64,
) -> Result<DyadicCheck> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::out_of_range("alpha", alpha, "(1/2, 1)"));
    }
    if !(constant >= 0.0) {
        return Err(Error::out_of_range("C", constant, "[0, ∞)"));
    }
    let (lo, hi) = (j as f64, j as f64 + 1.0);
    let lhs = integrate_on(sample, lo, hi, q)?.abs();
    let first_term = (q[0] * measure_of(sample, lo, hi)?).abs();
    let besov = besov_norm_cells(q, sample.grid().dx(), alpha)?.total;
    let energy = dyadic_energy(sample, j, alpha)?;
    let scale = besov * energy.sqrt();
    let rhs = first_term + constant * scale;
    let slack = if lhs == 0.0 && rhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    };
    let excess = lhs - first_term;
    let required_constant = if excess <= 0.0 {
        0.0
    } else if scale > 0.0 {
        excess / scale
    } else {
        f64::INFINITY
    };
    Ok(DyadicCheck {
        j,
        alpha,
        constant,
        lhs,
        first_term,
        besov,
        energy,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
        slack,
        required_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{sample_wiener, MeasureKind};
    use crate::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_has_no_modulus() {
        let e = besov_norm_cells(&[2.5; 64], 1.0 / 64.0, 0.7).unwrap();
        assert_eq!(e.modulus_part, 0.0);
        assert!((e.total - 2.5).abs() < 1e-14);
        assert!((e.l2_part - 2.5).abs() < 1e-14);
    }

    #[test]
    fn preconditions() {
        assert!(besov_norm_cells(&[1.0; 8], 0.1, 0.0).is_err());
        assert!(besov_norm_cells(&[1.0; 8], 0.1, 1.0).is_err());
        assert!(besov_norm_cells(&[1.0; 3], 0.1, 0.5).is_err());
        let g = GridSpec::new(0.0, 2.0, 128, 1.0, 1).unwrap();
        let f = Field::zeros(g, 0.0);
        assert!(besov_norm(&f, 0.0, 1.0, 0.5).is_ok());
        assert!(besov_norm(&f, 0.01, 1.0, 0.5).is_err());
    }

    /// Same definition evaluated directly from the formula, without the
    /// running maximum.
    fn oracle(values: &[f64], dx: f64, alpha: f64) -> f64 {
        let m = values.len();
        let energies: Vec<f64> = (0..m)
            .map(|k| {
                (0..m - k)
                    .map(|i| (values[i + k] - values[i]).powi(2))
                    .sum::<f64>()
                    * dx
            })
            .collect();
        let mut modulus = 0.0;
        for k in 1..=m {
            let w2 = energies[..k].iter().cloned().fold(0.0, f64::max);
            modulus += dx * w2 * ((k as f64 - 0.5) * dx).powf(-2.0 * alpha - 1.0);
        }
        let l2 = (values.iter().map(|v| v * v).sum::<f64>() * dx).sqrt();
        l2 + modulus.sqrt()
    }

    #[test]
    fn ramp_matches_refined_oracle() {
        let alpha = 0.6;
        let cells = |m: usize| -> Vec<f64> { (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect() };
        let m = 1024;
        let got = besov_norm_cells(&cells(m), 1.0 / m as f64, alpha).unwrap().total;
        let fine = 16 * m;
        let reference = oracle(&cells(fine), 1.0 / fine as f64, alpha);
        assert!(((got - reference) / reference).abs() < 0.02, "{got} vs {reference}");
    }

    #[test]
    fn spike_modulus_scales_as_power_of_resolution() {
        let alpha = 0.7;
        let spike = |m: usize| {
            let dx = 1.0 / m as f64;
            let mut v = vec![0.0; m];
            v[m / 2] = 1.0 / dx.sqrt();
            besov_norm_cells(&v, dx, alpha).unwrap().modulus_part
        };
        let ratio = spike(512) / spike(256);
        let target = 2f64.powf(alpha);
        assert!((ratio / target - 1.0).abs() < 0.15, "{ratio} vs {target}");
    }

    #[test]
    fn modulus_monotone_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut prev = 0.0;
        for i in 1..20 {
            let m = besov_norm_cells(&v, 1.0 / 64.0, i as f64 * 0.05).unwrap().modulus_part;
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn ramp_exponent_is_one() {
        let v: Vec<f64> = (0..256).map(|i| 0.3 * i as f64).collect();
        let fit = holder_fit(&v, 1.0 / 256.0, &dyadic_lags(64)).unwrap();
        assert!((fit.exponent - 1.0).abs() < 0.01);
    }

    #[test]
    fn brownian_exponent_is_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 4096;
        let dt = 1.0 / n as f64;
        let mut path = vec![0.0; n];
        for i in 1..n {
            let z: f64 = rng.sample(StandardNormal);
            path[i] = path[i - 1] + dt.sqrt() * z;
        }
        let fit = holder_fit(&path, dt, &dyadic_lags(256)).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.1, "{fit:?}");
        assert!(fit.std_error < 0.1);
    }

    #[test]
    fn holder_fit_errors() {
        assert!(matches!(
            holder_fit(&[1.0; 64], 1.0, &dyadic_lags(16)),
            Err(Error::Degenerate(_))
        ));
        let v: Vec<f64> = (0..64).map(|i| i as f64).collect();
        assert!(holder_fit(&v[..10], 1.0, &[1, 2]).is_err());
        assert!(holder_fit(&v, 1.0, &[1, 2, 4]).is_err());
        assert!(holder_fit(&v, 1.0, &[1, 100]).is_err());
    }

    fn unit_sample(seed: u64) -> MeasureSample {
        let g = GridSpec::new(-2.0, 2.0, 256, 1.0, 1).unwrap();
        sample_wiener(&g, seed)
    }

    #[test]
    fn dyadic_bound_trivial_cases() {
        let s = unit_sample(1);
        let zero = verify_dyadic_bound(&[0.0; 64], &s, 0, 0.75, 1.0).unwrap();
        assert_eq!((zero.lhs, zero.rhs, zero.slack), (0.0, 0.0, 0.0));
        assert!(zero.holds);
        let one = verify_dyadic_bound(&[1.0; 64], &s, -1, 0.75, 0.0).unwrap();
        assert!((one.lhs - one.first_term).abs() < 1e-15);
        assert!(one.holds);
        assert!(verify_dyadic_bound(&[1.0; 64], &s, 0, 0.5, 1.0).is_err());
        assert!(verify_dyadic_bound(&[1.0; 63], &s, 0, 0.75, 1.0).is_err());
    }

    #[test]
    fn slack_invariant_under_scaling_q() {
        let s = unit_sample(5);
        let q: Vec<f64> = (0..64).map(|i| (i as f64 * 0.2).sin()).collect();
        let a = verify_dyadic_bound(&q, &s, 1, 0.7, 0.3).unwrap();
        let scaled: Vec<f64> = q.iter().map(|v| -3.5 * v).collect();
        let b = verify_dyadic_bound(&scaled, &s, 1, 0.7, 0.3).unwrap();
        assert!((a.slack - b.slack).abs() < 1e-12);
        assert!((a.required_constant - b.required_constant).abs() < 1e-10);
    }

    #[test]
    fn lebesgue_measure_integrates_exactly() {
        let g = GridSpec::new(0.0, 1.0, 64, 1.0, 1).unwrap();
        let s = MeasureSample::from_parts(g, MeasureKind::DeterministicLebesgue, 0, vec![1.0 / 64.0; 64]).unwrap();
        let q: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
        let c = verify_dyadic_bound(&q, &s, 0, 0.75, 1.0).unwrap();
        assert!((c.lhs - q.iter().sum::<f64>() / 64.0).abs() < 1e-14);
        assert!(c.holds);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn besov_is_a_norm(a in prop::collection::vec(-2.0..2.0f64, 32), b in prop::collection::vec(-2.0..2.0f64, 32), s in -3.0..3.0f64, alpha in 0.05..0.95f64) {
                let dx = 1.0 / 32.0;
                let na = besov_norm_cells(&a, dx, alpha).unwrap().total;
                let nb = besov_norm_cells(&b, dx, alpha).unwrap().total;
                let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                let ns = besov_norm_cells(&sum, dx, alpha).unwrap().total;
                prop_assert!(ns <= na + nb + 1e-10);
                let scaled: Vec<f64> = a.iter().map(|x| s * x).collect();
                let nsc = besov_norm_cells(&scaled, dx, alpha).unwrap().total;
                prop_assert!((nsc - s.abs() * na).abs() < 1e-10 * (1.0 + na));
            }
        }
    }
}
