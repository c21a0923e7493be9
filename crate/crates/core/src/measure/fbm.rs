//! Exact fractional Gaussian noise on the cells of a grid via a Cholesky
//! factor of the increment covariance.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// `Cov(B_H(I_i), B_H(I_j))` for two cells of width `dx` that are `lag`
/// cells apart.
pub fn increment_covariance(lag: usize, dx: f64, hurst: f64) -> f64 {
    let k = lag as f64;
    let e = 2.0 * hurst;
    let second = (k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e);
    0.5 * dx.powf(e) * second
}

/// Reusable sampler: the `O(m³)` factorization is done once per grid and
/// Hurst index, each draw costs `O(m²)`.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    hurst: f64,
    factor: DMatrix<f64>,
}

impl FbmSampler {
    pub fn new(cells: usize, dx: f64, hurst: f64) -> Result<Self> {
        if !(hurst > 0.5 && hurst < 1.0) {
            return Err(Error::out_of_range("hurst", hurst, "(1/2, 1)"));
        }
        let cov = DMatrix::from_fn(cells, cells, |i, j| {
            increment_covariance(i.abs_diff(j), dx, hurst)
        });
        let variance = increment_covariance(0, dx, hurst);
        let mut jitter = 0.0;
        for attempt in 0..3 {
            let mut m = cov.clone();
            for i in 0..cells {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = m.cholesky() {
                return Ok(FbmSampler {
                    hurst,
                    factor: ch.l(),
                });
            }
            jitter = variance * 1e-12 * 100f64.powi(attempt);
        }
        Err(Error::NotPositiveDefinite { jitter })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.factor.nrows();
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        (&self.factor * z).iter().copied().collect()
    }
}
