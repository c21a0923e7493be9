use smpde_core::averaging::{averaging_experiment, AveragingScenario};
use smpde_core::convolution::{SigmaSpec, SpaceProfile, TimeProfile};
use smpde_core::heat::{kernel, Backend};
use smpde_core::measure::{sample_weighted_wiener, sample_wiener, WeightSpec};
use smpde_core::solver::{picard_solve, CoefficientSet, InitialCondition, SolverConfig};
use smpde_core::{GridSpec, MeasureSample};

/// Method-of-lines RK4 for `u_t = u_xx + ∂x(u²/2)` with zero data outside the box.
fn burgers_fd(x_min: f64, x_max: f64, nx: usize, t_end: f64, u0: impl Fn(f64) -> f64) -> Vec<f64> {
    let dx = (x_max - x_min) / nx as f64;
    let mut u: Vec<f64> = (0..nx).map(|i| u0(x_min + (i as f64 + 0.5) * dx)).collect();
    let steps = (t_end / (0.4 * dx * dx)).ceil() as usize;
    let dt = t_end / steps as f64;
    let rhs = |u: &[f64]| -> Vec<f64> {
        (0..nx)
            .map(|i| {
                let l = if i > 0 { u[i - 1] } else { 0.0 };
                let r = if i + 1 < nx { u[i + 1] } else { 0.0 };
                (r - 2.0 * u[i] + l) / (dx * dx) + (r * r - l * l) / (4.0 * dx)
            })
            .collect()
    };
    let axpy = |u: &[f64], k: &[f64], a: f64| -> Vec<f64> { u.iter().zip(k).map(|(u, k)| u + a * k).collect() };
    for _ in 0..steps {
        let k1 = rhs(&u);
        let k2 = rhs(&axpy(&u, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&u, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&u, &k3, dt));
        for i in 0..nx {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    u
}

fn bump(l2: f64, width: f64) -> impl Fn(f64) -> f64 {
    let a = l2 / (width * std::f64::consts::PI.sqrt()).sqrt();
    move |x| a * (-x * x / (2.0 * width * width)).exp()
}

#[test]
fn deterministic_burgers_against_fine_finite_differences() {
    let g = GridSpec::new(-8.0, 8.0, 256, 0.5, 64).unwrap();
    let mut c = CoefficientSet::burgers();
    c.sigma = SigmaSpec::zero();
    c.u0 = InitialCondition::GaussianBump {
        center: 0.0,
        width: 0.8,
        l2_norm: 1.5,
    };
    let (u, rep) = picard_solve(&c, &MeasureSample::zero(g), &SolverConfig::new(g)).unwrap();
    assert!(!rep.cutoff_active);
    let fine = burgers_fd(-8.0, 8.0, 1024, 0.5, bump(1.5, 0.8));
    let coarse: Vec<f64> = (0..256).map(|i| 0.5 * (fine[4 * i + 1] + fine[4 * i + 2])).collect();
    let got = u.row(64);
    let num: f64 = got.iter().zip(&coarse).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = coarse.iter().map(|b| b * b).sum();
    let rel = (num / den).sqrt();
    assert!(rel < 2e-2, "relative L2 error {rel}");
}

#[test]
fn heat_solve_tracks_kernel() {
    let g = GridSpec::new(-10.0, 10.0, 512, 1.0, 64).unwrap();
    let mut c = CoefficientSet::heat();
    c.g2.offset = 2.0;
    let (u, rep) = picard_solve(&c, &MeasureSample::zero(g), &SolverConfig::new(g)).unwrap();
    assert!(rep.iterations <= 2);
    for k in [8, 32, 64] {
        let t = g.t_level(k);
        let peak = kernel(1.0 + t, 0.0).unwrap();
        for (i, x) in g.x_centers().into_iter().enumerate() {
            assert!((u.row(k)[i] - kernel(1.0 + t, x).unwrap()).abs() <= 1e-3 * peak);
        }
    }
}

#[test]
fn backends_agree_on_stochastic_burgers() {
    let g = GridSpec::new(-8.0, 8.0, 128, 1.0, 32).unwrap();
    let sample = sample_weighted_wiener(&g, WeightSpec::default(), 5).unwrap();
    let c = CoefficientSet::burgers();
    let fft = picard_solve(&c, &sample, &SolverConfig::new(g)).unwrap().0;
    let direct_cfg = SolverConfig {
        backend: Backend::Direct,
        ..SolverConfig::new(g)
    };
    let direct = picard_solve(&c, &sample, &direct_cfg).unwrap().0;
    assert!(fft.difference(&direct).unwrap().sup_abs() < 1e-9);
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let g = GridSpec::new(-8.0, 8.0, 128, 1.0, 32).unwrap();
    let sample = sample_wiener(&g, 77);
    let sc = AveragingScenario {
        coeffs: CoefficientSet {
            sigma: SigmaSpec::separable(
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
            ),
            ..CoefficientSet::burgers()
        },
        epsilons: vec![1.0, 0.25],
        solver: SolverConfig::new(g),
    };
    let a = averaging_experiment(&sc, &sample).unwrap();
    let b = averaging_experiment(&sc, &sample).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.sup_t_l2_distance.to_bits(), y.sup_t_l2_distance.to_bits());
        assert_eq!(x.xi_sup.to_bits(), y.xi_sup.to_bits());
    }
}
