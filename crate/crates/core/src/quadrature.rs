//! Gauss–Legendre rules and the time-node sets used by every Duhamel-type
//! integral in the crate.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton iteration from the Chebyshev-like initial guess.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature node in the elapsed time `r = t - s` of a Duhamel integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeNode {
    pub r: f64,
    pub weight: f64,
}

/// Nodes integrating `∫_{a}^{b} F(r) dr` for a kernel `F` that is smooth on
/// `[a, b]` with `a > 0`.
pub fn regular_nodes(rule: &GaussLegendre, a: f64, b: f64) -> Vec<TimeNode> {
    rule.on(a, b).map(|(r, weight)| TimeNode { r, weight }).collect()
}

/// Nodes integrating `∫_0^{h} F(r) dr` when `F` behaves like `r^{-1/2}` or
/// concentrates as `r → 0`: the substitution `r = τ²` turns the integral into
/// `∫_0^{√h} 2τ F(τ²) dτ`, whose integrand stays bounded.
pub fn singular_nodes(rule: &GaussLegendre, h: f64) -> Vec<TimeNode> {
    rule.on(0.0, h.sqrt())
        .map(|(tau, w)| TimeNode {
            r: tau * tau,
            weight: 2.0 * tau * w,
        })
        .collect()
}

/// Node layout for `∫_0^t F(r) φ(t - r) dr` split into sub-steps of length
/// `h`: the first sub-step (nearest the singular end) by substitution, the rest
/// by a regular rule. Returned grouped by sub-step offset.
#[derive(Debug, Clone)]
pub struct StepRule {
    pub regular: GaussLegendre,
    pub singular: GaussLegendre,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            regular: GaussLegendre::new(4),
            singular: GaussLegendre::new(16),
        }
    }
}

impl StepRule {
    /// Nodes for the sub-step `r ∈ [offset·h, (offset+1)·h]`.
    pub fn nodes(&self, offset: usize, h: f64) -> Vec<TimeNode> {
        if offset == 0 {
            singular_nodes(&self.singular, h)
        } else {
            regular_nodes(&self.regular, offset as f64 * h, (offset + 1) as f64 * h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..12 {
            let rule = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 0 {
                    2.0 / (deg as f64 + 1.0)
                } else {
                    0.0
                };
                let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg} got={got}");
            }
        }
    }

    #[test]
    fn substitution_handles_inverse_sqrt() {
        let rule = GaussLegendre::new(4);
        let h = 0.01;
        let got: f64 = singular_nodes(&rule, h)
            .iter()
            .map(|n| n.weight / n.r.sqrt())
            .sum();
        assert!((got - 2.0 * h.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn singular_weights_sum_to_step() {
        let rule = GaussLegendre::new(16);
        let s: f64 = singular_nodes(&rule, 0.37).iter().map(|n| n.weight).sum();
        assert!((s - 0.37).abs() < 1e-14);
    }
}
