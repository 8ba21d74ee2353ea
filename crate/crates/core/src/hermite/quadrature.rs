//! Gaussian-expectation quadrature rules.
//!
//! Every rule here integrates against the standard normal density, so
//! `rule.expectation(f) ≈ E_{ρ∼N(0,1)}[f(ρ)]` and the weights sum to one.

use nalgebra::DMatrix;

/// Half-width of the truncated domain used by the split rule. The Gaussian
/// density at 16 is about 1e-56.
const SPLIT_RADIUS: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// `n`-point Gauss–Hermite rule for the probabilists' weight
    /// `e^{-x²/2} / √(2π)`. Exact for polynomials of degree `2n − 1`.
    pub fn gauss_hermite(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        if n == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![1.0],
            };
        }
        // Jacobi matrix of the monic probabilists' recurrence: off-diagonal √j.
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for j in 1..n {
            let b = (j as f64).sqrt();
            jacobi[(j - 1, j)] = b;
            jacobi[(j, j - 1)] = b;
        }
        let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        nodes.sort_by(f64::total_cmp);

        let mut weights = Vec::with_capacity(n);
        for x in nodes.iter_mut() {
            // Newton polish: h_n'(x) = √n h_{n-1}(x).
            for _ in 0..2 {
                let (prev, last, _) = scaled_pair(n, *x);
                if prev != 0.0 {
                    *x -= last / ((n as f64).sqrt() * prev);
                }
            }
            let (prev, _, log_scale) = scaled_pair(n, *x);
            // w = 1 / (n h_{n-1}(x)²), evaluated in log space.
            let log_w = -(2.0 * (prev.abs().ln() + log_scale) + (n as f64).ln());
            weights.push(log_w.exp());
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        Self { nodes, weights }
    }

    /// `n`-point Gauss–Legendre rule on `[a, b]` with unit weight.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            nodes.push(mid - half * x);
            weights.push(half * 2.0 / ((1.0 - x * x) * dp * dp));
        }
        Self { nodes, weights }
    }

    /// Two `n`-point Gauss–Legendre rules on `[−R, 0]` and `[0, R]` with the
    /// Gaussian density folded into the weights. Converges geometrically for
    /// integrands that are smooth on each half line, including ones with a
    /// kink or jump at zero.
    pub fn gaussian_split_at_zero(n: usize) -> Self {
        let mut nodes = Vec::with_capacity(2 * n);
        let mut weights = Vec::with_capacity(2 * n);
        for (lo, hi) in [(-SPLIT_RADIUS, 0.0), (0.0, SPLIT_RADIUS)] {
            let rule = Self::gauss_legendre(n, lo, hi);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push(*x);
                weights.push(w * standard_normal_density(*x));
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

pub fn standard_normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `(h_{n-1}(x), h_n(x), log_scale)` for the normalized probabilists'
/// recurrence, rescaled on the fly so large `|x|` never overflows. The true
/// values are the returned ones times `exp(log_scale)`.
fn scaled_pair(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0_f64;
    let mut cur = 1.0_f64;
    let mut log_scale = 0.0_f64;
    for j in 0..n {
        let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 1e100 {
            prev /= 1e100;
            cur /= 1e100;
            log_scale += 100.0 * std::f64::consts::LN_10;
        }
    }
    (prev, cur, log_scale)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_moments() {
        let rule = QuadratureRule::gauss_hermite(10);
        assert!((rule.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(rule.expectation(|x| x).abs() < 1e-14);
        assert!((rule.expectation(|x| x * x) - 1.0).abs() < 1e-13);
        assert!((rule.expectation(|x| x.powi(4)) - 3.0).abs() < 1e-12);
        assert!((rule.expectation(|x| x.powi(6)) - 15.0).abs() < 1e-11);
    }

    #[test]
    fn hermite_rule_three_points() {
        // Nodes ±√3, 0 with weights 1/6, 2/3, 1/6.
        let rule = QuadratureRule::gauss_hermite(3);
        assert!((rule.nodes()[0] + 3f64.sqrt()).abs() < 1e-14);
        assert!(rule.nodes()[1].abs() < 1e-14);
        assert!((rule.weights()[0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((rule.weights()[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn large_hermite_rule_is_finite() {
        let rule = QuadratureRule::gauss_hermite(640);
        assert!(rule.weights().iter().all(|w| w.is_finite() && *w >= 0.0));
        assert!((rule.expectation(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((rule.expectation(|x| (0.3 * x).cos()) - (-0.045f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn legendre_rule() {
        let rule = QuadratureRule::gauss_legendre(5, 0.0, 2.0);
        assert!((rule.expectation(|x| x.powi(9)) - 2f64.powi(10) / 10.0).abs() < 1e-11);
        assert!((rule.weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn split_rule_handles_relu() {
        let rule = QuadratureRule::gaussian_split_at_zero(80);
        let mean_relu = rule.expectation(|x| x.max(0.0));
        assert!((mean_relu - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
        assert!((rule.expectation(|x| if x > 0.0 { 1.0 } else { 0.0 }) - 0.5).abs() < 1e-14);
    }
}
