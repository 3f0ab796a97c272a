//! Composite Gauss-Legendre quadrature with adaptive panel bisection.
//!
//! Only interior nodes are ever evaluated, so integrands with a removable
//! singularity at an endpoint are safe.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes per panel.
pub const PANEL_NODES: usize = 64;

/// Default upper bound on the number of panels before giving up.
pub const DEFAULT_MAX_PANELS: usize = 4096;

const ROUNDOFF_FACTOR: f64 = 50.0;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared 64-point rule.
    pub fn panel_rule() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(PANEL_NODES))
    }

    /// Applies the rule on `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64) -> f64 {
        self.integrate_with_abs(f, a, b).0
    }

    /// Returns the estimates of `int f` and `int |f|`.
    fn integrate_with_abs<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64) -> (f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        let mut s_abs = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let y = f(mid + half * x);
            s += w * y;
            s_abs += w * y.abs();
        }
        (s * half, s_abs * half.abs())
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Clone, Copy, Debug)]
struct Panel {
    a: f64,
    b: f64,
    left: f64,
    right: f64,
    /// Sum of the two half-panel estimates.
    refined: f64,
    err: f64,
}

impl Panel {
    fn build<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, whole: f64) -> Self {
        let rule = GaussLegendre::panel_rule();
        let m = 0.5 * (a + b);
        let (left, left_abs) = rule.integrate_with_abs(f, a, m);
        let (right, right_abs) = rule.integrate_with_abs(f, m, b);
        let refined = left + right;
        // differences at the level of summation roundoff are not discretization error
        let noise = ROUNDOFF_FACTOR * f64::EPSILON * (left_abs + right_abs);
        // `whole` is the single-panel estimate; the halves become the coarse values of the children.
        Self {
            a,
            b,
            left,
            right,
            refined,
            err: ((whole - refined).abs() - noise).max(0.0),
        }
    }
}

/// Adaptive integrator settings.
#[derive(Clone, Copy, Debug)]
pub struct Adaptive {
    /// Absolute tolerance on the summed panel error estimates.
    pub tol: f64,
    pub max_panels: usize,
}

impl Adaptive {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_panels: DEFAULT_MAX_PANELS,
        }
    }

    /// Integrates `f` over `[a, b]`, bisecting the panel with the largest
    /// error estimate until the summed estimate drops below `tol`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<f64> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "quadrature tolerance must be positive, got {}",
                self.tol
            )));
        }
        if a == b {
            return Ok(0.0);
        }
        let rule = GaussLegendre::panel_rule();
        let whole = rule.integrate(&mut f, a, b);
        let mut panels = vec![Panel::build(&mut f, a, b, whole)];
        let mut previous = whole;
        loop {
            let total: f64 = panels.iter().map(|p| p.refined).sum();
            let err: f64 = panels.iter().map(|p| p.err).sum();
            if !total.is_finite() {
                return Err(Error::Quadrature {
                    panels: panels.len(),
                    previous,
                    last: total,
                });
            }
            if err <= self.tol {
                return Ok(total);
            }
            if panels.len() >= self.max_panels {
                return Err(Error::Quadrature {
                    panels: panels.len(),
                    previous,
                    last: total,
                });
            }
            previous = total;

            let (worst, _) = panels
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, p)| {
                    if p.err > acc.1 {
                        (i, p.err)
                    } else {
                        acc
                    }
                });
            let p = panels.swap_remove(worst);
            let m = 0.5 * (p.a + p.b);
            if !(m > p.a && m < p.b) {
                // Panel can no longer be bisected; accept what it has.
                panels.push(Panel { err: 0.0, ..p });
                continue;
            }
            panels.push(Panel::build(&mut f, p.a, m, p.left));
            panels.push(Panel::build(&mut f, m, p.b, p.right));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_weights_sum_to_two() {
        for n in [1, 2, 5, 16, 64] {
            let r = GaussLegendre::new(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
        }
    }

    #[test]
    fn rule_is_exact_for_polynomials() {
        let r = GaussLegendre::new(5);
        // degree 9 is the limit for 5 points
        let v = r.integrate(&mut |x: f64| x.powi(8) + x.powi(9), 0.0, 1.0);
        assert!((v - 1.0 / 9.0 - 0.1).abs() < 1e-14);
    }

    #[test]
    fn three_point_rule_known_nodes() {
        let r = GaussLegendre::new(3);
        assert!((r.nodes[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((r.weights[1] - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(r.nodes[1], 0.0);
    }

    #[test]
    fn adaptive_handles_sharp_peak() {
        // Lorentzian of width 1e-6 centred at 1e-3; exact = atan terms
        let w: f64 = 1e-6;
        let c: f64 = 1e-3;
        let exact = ((1.0 - c) / w).atan() - ((0.0 - c) / w).atan();
        let got = Adaptive::new(1e-10)
            .integrate(|x| w / ((x - c) * (x - c) + w * w), 0.0, 1.0)
            .unwrap();
        assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
    }

    #[test]
    fn adaptive_never_touches_endpoints() {
        // sin(x)/x is NaN at x = 0 if evaluated there
        let got = Adaptive::new(1e-14)
            .integrate(
                |x: f64| {
                    assert!(x > 0.0 && x < 1.0);
                    x.sin() / x
                },
                0.0,
                1.0,
            )
            .unwrap();
        assert!((got - 0.946_083_070_367_183).abs() < 1e-15);
    }

    #[test]
    fn adaptive_reports_non_convergence() {
        let res = Adaptive {
            tol: 1e-14,
            max_panels: 3,
        }
        .integrate(|x| (50.0 * x).sin() / x.max(1e-300).sqrt(), 0.0, 10.0);
        match res {
            Err(Error::Quadrature { panels, .. }) => assert_eq!(panels, 3),
            other => panic!("expected quadrature error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_positive_tolerance() {
        assert!(Adaptive::new(0.0).integrate(|x| x, 0.0, 1.0).is_err());
    }
}
