//! Gauss–Legendre rules and composite (panel) integration on intervals.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest supported number of points in a single rule.
pub const MAX_POINTS: usize = 64;

/// Panel count and points per panel used for TFFN normalization.
pub const DEFAULT_PANELS: usize = 16;
pub const DEFAULT_POINTS: usize = 16;

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial P_n(x) and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule, found by Newton
/// iteration on P_n from Chebyshev-like starting guesses.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_POINTS {
        return Err(Error::Input(format!(
            "Gauss-Legendre point count {n} outside 1..={MAX_POINTS}"
        )));
    }
    if n == 1 {
        return Ok(QuadratureRule { nodes: vec![0.0], weights: vec![2.0] });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Physical nodes and weights of a composite rule: `panels` equal panels on
/// `[a, b]`, each carrying the mapped `rule`.
pub fn composite_nodes(rule: &QuadratureRule, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let half = 0.5 * width;
    let mut xs = Vec::with_capacity(panels * rule.len());
    let mut ws = Vec::with_capacity(panels * rule.len());
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            xs.push(mid + half * t);
            ws.push(half * w);
        }
    }
    (xs, ws)
}

/// Integrates `f` over `[a, b]` with `panels` equal panels of an `points`-point rule.
pub fn composite_integrate<F>(f: F, a: f64, b: f64, panels: usize, points: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let rule = gauss_legendre(points)?;
    Ok(composite_with_rule(&rule, f, a, b, panels))
}

pub fn composite_with_rule<F>(rule: &QuadratureRule, f: F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let half = 0.5 * width;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let mut s = 0.0;
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            s += w * f(mid + half * t);
        }
        total += half * s;
    }
    total
}

/// Composite rule nodes cast into the model scalar, reused across optimizer steps.
#[derive(Debug, Clone)]
pub struct CompositeGrid<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> CompositeGrid<T> {
    pub fn new(a: f64, b: f64, panels: usize, points: usize) -> Result<Self> {
        let rule = gauss_legendre(points)?;
        let (xs, ws) = composite_nodes(&rule, a, b, panels);
        Ok(Self {
            nodes: xs.into_iter().map(T::of).collect(),
            weights: ws.into_iter().map(T::of).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_rule() {
        let r = gauss_legendre(1).unwrap();
        assert_eq!(r.nodes, vec![0.0]);
        assert_eq!(r.weights, vec![2.0]);
    }

    #[test]
    fn two_point_rule_closed_form() {
        let r = gauss_legendre(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + x).abs() < 1e-15);
        assert!((r.nodes[1] - x).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
        assert!((r.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rules_are_well_formed() {
        for n in 1..=MAX_POINTS {
            let r = gauss_legendre(n).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "n={n} weight sum {s}");
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]), "n={n} not increasing");
            assert!(r.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn degree_exactness() {
        let r = gauss_legendre(16).unwrap();
        let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(30)).sum();
        assert!((got - 2.0 / 31.0).abs() < 1e-14);
        for n in [3usize, 7, 12, 20] {
            let r = gauss_legendre(n).unwrap();
            for deg in 0..2 * n {
                let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn out_of_range() {
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(65).is_err());
    }

    #[test]
    fn composite_polynomials() {
        for m in [1, 3, 16] {
            let v = composite_integrate(|x| x * x, 0.0, 1.0, m, 2).unwrap();
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
            let c = composite_integrate(|_| 1.0, -0.7, 2.2, m, 5).unwrap();
            assert!((c - 2.9).abs() < 1e-14);
        }
    }

    #[test]
    fn composite_gaussian_matches_erf() {
        let v = composite_integrate(|x| (-x * x).exp(), -3.0, 3.0, 16, 16).unwrap();
        let exact = std::f64::consts::PI.sqrt() * libm::erf(3.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn refinement_does_not_increase_error() {
        let cases: Vec<(Box<dyn Fn(f64) -> f64>, f64, f64, f64)> = vec![
            (Box::new(|x: f64| x.sin()), 0.0, 3.0, 1.0 - 3f64.cos()),
            (Box::new(|x: f64| (-x * x).exp()), -4.0, 4.0, std::f64::consts::PI.sqrt() * libm::erf(4.0)),
            (Box::new(|x: f64| 1.0 / (1.0 + x * x)), -5.0, 5.0, 2.0 * 5f64.atan()),
        ];
        for (f, a, b, exact) in &cases {
            let mut prev = f64::INFINITY;
            for m in [1, 2, 4, 8, 16, 32] {
                let err = (composite_integrate(f, *a, *b, m, 4).unwrap() - exact).abs();
                assert!(err <= prev.max(1e-15), "m={m}: {err} > {prev}");
                prev = err;
            }
        }
    }

    #[test]
    fn additivity_and_linearity() {
        let f = |x: f64| x.cos() * (1.0 + x);
        let whole = composite_integrate(f, -1.0, 2.0, 8, 16).unwrap();
        let left = composite_integrate(f, -1.0, 0.5, 8, 16).unwrap();
        let right = composite_integrate(f, 0.5, 2.0, 8, 16).unwrap();
        assert!((whole - left - right).abs() < 1e-14);
        let g = |x: f64| x.exp();
        let lin = composite_integrate(|x| 2.0 * f(x) - 3.0 * g(x), -1.0, 2.0, 8, 16).unwrap();
        let sep = 2.0 * whole - 3.0 * composite_integrate(g, -1.0, 2.0, 8, 16).unwrap();
        assert!((lin - sep).abs() < 1e-13);
    }
}
