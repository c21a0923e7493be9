//! Symmetric α-stable variates by the Chambers–Mallows–Stuck transform.
//!
//! Scale convention: the standard variate `S` has characteristic function
//! `E exp(iuS) = exp(-|u|^α)`. For `α = 2` this is `N(0, 2)`, not `N(0, 1)`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Uniform};

/// One standard symmetric α-stable draw; `α ∈ (0, 1) ∪ (1, 2]`.
pub(crate) fn symmetric_stable<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    let angle = Uniform::new(-FRAC_PI_2, FRAC_PI_2)
        .expect("non-empty range")
        .sample(rng);
    let w: f64 = Exp1.sample(rng);
    let a = (alpha * angle).sin() / angle.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * angle).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_two_is_gaussian_with_variance_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| symmetric_stable(&mut rng, 2.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 2.0).abs() < 0.03, "var = {var}");
    }

    #[test]
    fn cauchy_like_median_for_alpha_near_one() {
        // For the standard symmetric stable law the median of |S| tends to 1
        // (the Cauchy value) as α → 1.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v: Vec<f64> = (0..100_000)
            .map(|_| symmetric_stable(&mut rng, 0.999).abs())
            .collect();
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        assert!((median - 1.0).abs() < 0.03, "median = {median}");
    }
}
