use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::{accumulate, slope_profile, value_profile, Backend, LagKernel, Spectral};
use crate::grid::check_finite;
use crate::quadrature::StepRule;
use crate::{Error, Field, GridSpec, Result, SpaceTimeField};

/// Duhamel integrals on a fixed grid:
///
/// `(J1 v)(t,x) = ∫_0^t ∫ p(t-s, x-y) v(s,y) dy ds`,
/// `(J2 w)(t,x) = ∫_0^t ∫ ∂p/∂y (t-s, x-y) w(s,y) dy ds`.
///
/// The integrand data is held at its value on the left end of every time step,
/// so `t_i` depends on levels `0..i` only. Over each step the kernel itself is
/// integrated in time by Gauss–Legendre nodes, with the substitution
/// `r = τ²` on the step nearest `s = t` where the kernel concentrates.
pub struct Duhamel {
    grid: GridSpec,
    backend: Backend,
    value_steps: Vec<LagKernel>,
    slope_steps: Vec<LagKernel>,
    spectral: Option<SpectralSteps>,
}

struct SpectralSteps {
    plan: Spectral,
    value: Vec<Vec<Complex64>>,
    slope: Vec<Vec<Complex64>>,
}

impl Duhamel {
    pub fn new(grid: &GridSpec, backend: Backend) -> Result<Self> {
        grid.validate()?;
        let dt = grid.dt();
        let rule = StepRule::default();
        let (value_steps, slope_steps): (Vec<_>, Vec<_>) = (0..grid.nt)
            .into_par_iter()
            .map(|m| {
                let mut a = LagKernel::zeros(grid.nx);
                let mut b = LagKernel::zeros(grid.nx);
                for node in rule.nodes(m, dt) {
                    a.add_scaled(&value_profile(grid, node.r), node.weight);
                    // ∂p/∂y (r, x-y) = -∂p/∂x (r, x-y).
                    b.add_scaled(&slope_profile(grid, node.r), -node.weight);
                }
                (a, b)
            })
            .unzip();
        let spectral = match backend {
            Backend::Direct => None,
            Backend::Fft => {
                let plan = Spectral::new(grid.nx);
                let value = value_steps.par_iter().map(|k| plan.kernel(k)).collect();
                let slope = slope_steps.par_iter().map(|k| plan.kernel(k)).collect();
                Some(SpectralSteps { plan, value, slope })
            }
        };
        Ok(Duhamel {
            grid: *grid,
            backend,
            value_steps,
            slope_steps,
            spectral,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Time-integrated value kernel of step `m`, i.e. over `r ∈ [m dt, (m+1) dt]`.
    pub fn value_step(&self, m: usize) -> &LagKernel {
        &self.value_steps[m]
    }

    pub fn slope_step(&self, m: usize) -> &LagKernel {
        &self.slope_steps[m]
    }

    fn check(&self, f: &SpaceTimeField) -> Result<()> {
        self.grid.check_same(f.grid())
    }

    fn check_level(&self, i: usize) -> Result<()> {
        if i > self.grid.nt {
            return Err(Error::out_of_range("t_index", i as f64, "0..=nt"));
        }
        Ok(())
    }

    pub fn j1(&self, v: &SpaceTimeField, i: usize) -> Result<Field> {
        self.level_field(Some(v), None, i)
    }

    pub fn j2(&self, w: &SpaceTimeField, i: usize) -> Result<Field> {
        self.level_field(None, Some(w), i)
    }

    pub fn j1_all(&self, v: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.apply(Some(v), None)
    }

    pub fn j2_all(&self, w: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.apply(None, Some(w))
    }

    fn level_field(
        &self,
        v: Option<&SpaceTimeField>,
        w: Option<&SpaceTimeField>,
        i: usize,
    ) -> Result<Field> {
        self.check_level(i)?;
        for f in v.iter().chain(w.iter()) {
            self.check(f)?;
        }
        let values = match &self.spectral {
            None => self.level_direct(v, w, i),
            Some(sp) => {
                let vh = v.map(|f| transform_rows(&sp.plan, f, i));
                let wh = w.map(|f| transform_rows(&sp.plan, f, i));
                self.level_spectral(sp, vh.as_deref(), wh.as_deref(), i)
            }
        };
        check_finite(&values)?;
        Field::new(self.grid, values, self.grid.t_level(i))
    }

    /// `J1 v + J2 w` at every level; row 0 is zero.
    pub fn apply(
        &self,
        v: Option<&SpaceTimeField>,
        w: Option<&SpaceTimeField>,
    ) -> Result<SpaceTimeField> {
        for f in v.iter().chain(w.iter()) {
            self.check(f)?;
        }
        let nt = self.grid.nt;
        let rows: Vec<Vec<f64>> = match &self.spectral {
            None => (0..=nt)
                .into_par_iter()
                .map(|i| self.level_direct(v, w, i))
                .collect(),
            Some(sp) => {
                let vh = v.map(|f| transform_rows(&sp.plan, f, nt));
                let wh = w.map(|f| transform_rows(&sp.plan, f, nt));
                (0..=nt)
                    .into_par_iter()
                    .map(|i| self.level_spectral(sp, vh.as_deref(), wh.as_deref(), i))
                    .collect()
            }
        };
        SpaceTimeField::from_rows(self.grid, rows)
    }

    fn level_direct(
        &self,
        v: Option<&SpaceTimeField>,
        w: Option<&SpaceTimeField>,
        i: usize,
    ) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.nx];
        for k in 0..i {
            let m = i - 1 - k;
            if let Some(v) = v {
                add_into(&mut acc, &self.value_steps[m].apply(v.row(k)));
            }
            if let Some(w) = w {
                add_into(&mut acc, &self.slope_steps[m].apply(w.row(k)));
            }
        }
        acc
    }

    fn level_spectral(
        &self,
        sp: &SpectralSteps,
        vh: Option<&[Vec<Complex64>]>,
        wh: Option<&[Vec<Complex64>]>,
        i: usize,
    ) -> Vec<f64> {
        if i == 0 {
            return vec![0.0; self.grid.nx];
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); sp.plan.bins()];
        for k in 0..i {
            let m = i - 1 - k;
            if let Some(vh) = vh {
                accumulate(&mut acc, &sp.value[m], &vh[k]);
            }
            if let Some(wh) = wh {
                accumulate(&mut acc, &sp.slope[m], &wh[k]);
            }
        }
        sp.plan.invert(&acc)
    }
}

fn transform_rows(plan: &Spectral, f: &SpaceTimeField, upto: usize) -> Vec<Vec<Complex64>> {
    (0..upto).into_par_iter().map(|k| plan.data(f.row(k))).collect()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::{dp, p};
    use statrs::function::erf::erfc;
    use std::f64::consts::PI;

    fn field(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> SpaceTimeField {
        let rows = (0..=grid.nt)
            .map(|k| {
                let t = grid.t_level(k);
                grid.x_centers().iter().map(|&x| f(t, x)).collect()
            })
            .collect();
        SpaceTimeField::from_rows(grid, rows).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = GridSpec::new(-4.0, 4.0, 128, 1.0, 16).unwrap();
        let d = Duhamel::new(&g, Backend::Fft).unwrap();
        let z = SpaceTimeField::zeros(g);
        assert_eq!(d.j1_all(&z).unwrap().sup_abs(), 0.0);
        assert_eq!(d.j2_all(&z).unwrap().sup_abs(), 0.0);
        assert!(d.j1(&z, 17).is_err());
    }

    #[test]
    fn step_tables_match_closed_forms() {
        // ∫_0^h p(r,d) dr = √(h/π) e^{-d²/4h} - |d|/2 · erfc(|d|/(2√h)),
        // ∫_0^h ∂p/∂x(r,d) dr = -sign(d)/2 · erfc(|d|/(2√h)).
        let g = GridSpec::new(-10.0, 10.0, 1024, 1.0, 64).unwrap();
        let d = Duhamel::new(&g, Backend::Direct).unwrap();
        let dx = g.dx();
        let h = g.dt();
        let value = |h: f64, x: f64| {
            (h / PI).sqrt() * (-x * x / (4.0 * h)).exp()
                - 0.5 * x.abs() * erfc(x.abs() / (2.0 * h.sqrt()))
        };
        let slope = |h: f64, x: f64| -0.5 * x.signum() * erfc(x.abs() / (2.0 * h.sqrt()));
        for m in [3usize, 10, 40] {
            let (a, b) = (m as f64 * h, (m + 1) as f64 * h);
            for l in [0isize, 5, -17, 60] {
                let x = l as f64 * dx;
                let exact_v = (value(b, x) - value(a, x)) * dx;
                let got_v = d.value_step(m).tap(l);
                assert!((got_v - exact_v).abs() < 1e-6 * exact_v.abs().max(1e-3 * dx), "m={m} l={l}");
                let exact_s = -(slope(b, x) - slope(a, x)) * dx;
                let got_s = d.slope_step(m).tap(l);
                assert!((got_s - exact_s).abs() < 1e-5 * exact_s.abs().max(1e-3 * dx), "m={m} l={l} {got_s} {exact_s}");
            }
        }
        for m in 0..g.nt {
            assert!((d.value_step(m).mass() - h).abs() < 1e-15);
            assert!((d.slope_step(m).first_moment(dx) - h).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_data_integrates_to_elapsed_time() {
        let g = GridSpec::default_rig();
        let d = Duhamel::new(&g, Backend::Fft).unwrap();
        let ones = field(g, |_, _| 1.0);
        let j1 = d.j1_all(&ones).unwrap();
        let j2 = d.j2_all(&ones).unwrap();
        for k in [1, 64, 256] {
            let t = g.t_level(k);
            for (i, x) in g.x_centers().into_iter().enumerate() {
                if x.abs() < 5.0 {
                    assert!(((j1.row(k)[i] - t) / t).abs() < 1e-3);
                    assert!(j2.row(k)[i].abs() < 1e-3);
                }
            }
        }
    }

    #[test]
    fn j2_of_heat_kernel_data() {
        // w(s,·) = p(s0+s,·): the semigroup identity collapses J2 to
        // -∫_0^t ∂p/∂x(t+s0, x) ds = -t ∂p/∂x(t+s0, x).
        let g = GridSpec::new(-10.0, 10.0, 1024, 1.0, 512).unwrap();
        let s0 = 1.0;
        let d = Duhamel::new(&g, Backend::Fft).unwrap();
        let w = field(g, |t, x| p(s0 + t, x));
        let i = g.nt;
        let t = g.t_level(i);
        let got = d.j2(&w, i).unwrap();
        let oracle = Field::from_fn(g, t, |x| -t * dp(t + s0, x)).unwrap();
        let rel = crate::grid::l2_distance(&got, &oracle).unwrap() / oracle.l2_norm().unwrap();
        assert!(rel < 1e-3, "{rel}");
    }

    #[test]
    fn j2_first_order_in_time() {
        let w = |t: f64, x: f64| (-(x - 0.3).powi(2)).exp() * (1.0 + (3.0 * t).sin());
        let at = |nt: usize| {
            let g = GridSpec::new(-8.0, 8.0, 256, 1.0, nt).unwrap();
            let d = Duhamel::new(&g, Backend::Fft).unwrap();
            d.j2(&field(g, w), nt).unwrap().into_values()
        };
        let dist = |a: &[f64], b: &[f64]| {
            (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * 16.0 / 256.0).sqrt()
        };
        let (a, b, c) = (at(32), at(64), at(128));
        let d1 = dist(&a, &b);
        let d2 = dist(&b, &c);
        let ratio = d1 / d2;
        assert!((1.7..=2.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn backends_agree() {
        let g = GridSpec::new(-3.0, 3.0, 96, 0.5, 12).unwrap();
        let v = field(g, |t, x| (x + t).sin() * (-x * x).exp());
        let w = field(g, |t, x| (2.0 * x).cos() * (1.0 + t));
        let a = Duhamel::new(&g, Backend::Direct).unwrap().apply(Some(&v), Some(&w)).unwrap();
        let fast = Duhamel::new(&g, Backend::Fft).unwrap();
        let b = fast.apply(Some(&v), Some(&w)).unwrap();
        assert!(a.difference(&b).unwrap().sup_abs() < 1e-10);
        let single = fast.j1(&v, 7).unwrap();
        let both = fast.j1_all(&v).unwrap();
        for (x, y) in single.values().iter().zip(both.row(7)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_in_data() {
        let g = GridSpec::new(-3.0, 3.0, 64, 1.0, 10).unwrap();
        let d = Duhamel::new(&g, Backend::Fft).unwrap();
        let mut v = SpaceTimeField::zeros(g);
        v.row_mut(5).iter_mut().for_each(|x| *x = 1.0);
        let out = d.j1_all(&v).unwrap();
        for k in 0..=5 {
            assert!(out.row(k).iter().all(|x| x.abs() < 1e-14));
        }
        assert!(out.row(6).iter().any(|x| x.abs() > 1e-3));
    }
}
