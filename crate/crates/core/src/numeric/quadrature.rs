//! Gauss–Legendre panels and an adaptive, log-space discrete rule for
//! expectations against a one-dimensional density.

use super::log_sum_exp;
use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre recurrence.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
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
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A normalized discrete rule: `E[g(X)] ≈ Σ exp(ln_weights[i]) g(nodes[i])`
/// with the weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRule {
    pub nodes: Vec<f64>,
    pub ln_weights: Vec<f64>,
}

impl LogRule {
    /// Point mass at `x`.
    pub fn point(x: f64) -> Self {
        Self {
            nodes: vec![x],
            ln_weights: vec![0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `ln E[exp(ln_g(X))]`.
    pub fn ln_expect<F: FnMut(f64) -> f64>(&self, mut ln_g: F) -> f64 {
        log_sum_exp(
            self.nodes
                .iter()
                .zip(&self.ln_weights)
                .map(|(&x, &lw)| lw + ln_g(x)),
        )
    }

    /// `E[g(X)]` for a function of any sign.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.ln_weights)
            .map(|(&x, &lw)| lw.exp() * g(x))
            .sum()
    }

    /// Probability mass of nodes satisfying `pred`.
    pub fn mass<P: FnMut(f64) -> bool>(&self, mut pred: P) -> f64 {
        self.expect(|x| if pred(x) { 1.0 } else { 0.0 })
    }
}

/// Settings for [`adaptive_rule`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveSettings {
    /// Target relative error summed over panels.
    pub tol: f64,
    /// Worst acceptable relative error before giving up.
    pub accept: f64,
    pub max_panels: usize,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            accept: 1e-8,
            max_panels: 20_000,
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    /// ln of the panel integral for each integrand, at one panel.
    whole: Vec<f64>,
    /// Same, from the two halves.
    split: Vec<f64>,
    err: f64,
}

/// Builds a normalized rule for the density `exp(ln_density)` on the
/// partition `edges` (sorted, at least two entries).
///
/// Refinement is driven by the integrands returned from `ln_integrands`
/// (each as a logarithm, the density excluded); index 0 should normally be
/// the constant `0.0` so that the density mass itself is resolved.
/// Returns the rule and the achieved relative error estimate.
pub fn adaptive_rule<D, G>(
    gl: &GaussLegendre,
    ln_density: D,
    edges: &[f64],
    n_integrands: usize,
    ln_integrands: G,
    settings: AdaptiveSettings,
) -> Result<(LogRule, f64)>
where
    D: Fn(f64) -> f64,
    G: Fn(f64, &mut [f64]),
{
    let mut scratch = vec![0.0; n_integrands];
    let mut panel_ln = |a: f64, b: f64| -> Vec<f64> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc: Vec<Vec<f64>> = vec![Vec::with_capacity(gl.nodes.len()); n_integrands];
        for (t, w) in gl.nodes.iter().zip(&gl.weights) {
            let x = mid + half * t;
            let base = (w * half).ln() + ln_density(x);
            ln_integrands(x, &mut scratch);
            for (k, v) in scratch.iter().enumerate() {
                acc[k].push(base + v);
            }
        }
        acc.into_iter().map(log_sum_exp).collect()
    };

    let mut make = |a: f64, b: f64| -> Panel {
        let whole = panel_ln(a, b);
        let m = 0.5 * (a + b);
        let left = panel_ln(a, m);
        let right = panel_ln(m, b);
        let split = left
            .iter()
            .zip(&right)
            .map(|(l, r)| log_sum_exp([*l, *r]))
            .collect();
        Panel {
            a,
            b,
            whole,
            split,
            err: 0.0,
        }
    };

    let mut panels: Vec<Panel> = edges
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| make(w[0], w[1]))
        .collect();
    if panels.is_empty() {
        return Err(Error::invalid("edges", "quadrature partition is empty"));
    }

    let mut achieved;
    loop {
        let totals: Vec<f64> = (0..n_integrands)
            .map(|k| log_sum_exp(panels.iter().map(|p| p.split[k])))
            .collect();
        achieved = 0.0;
        for p in panels.iter_mut() {
            let mut e: f64 = 0.0;
            for k in 0..n_integrands {
                if !totals[k].is_finite() {
                    continue;
                }
                let share = (p.split[k] - totals[k]).exp();
                let rel = if p.split[k] == f64::NEG_INFINITY && p.whole[k] == f64::NEG_INFINITY {
                    0.0
                } else {
                    (p.whole[k] - p.split[k]).exp_m1().abs()
                };
                let v = share * rel.min(1.0);
                e = e.max(if v.is_nan() { 1.0 } else { v });
            }
            p.err = e;
            achieved += e;
        }
        if achieved <= settings.tol || panels.len() >= settings.max_panels {
            break;
        }
        let cut = settings.tol / panels.len() as f64;
        let mut next = Vec::with_capacity(panels.len() * 2);
        let mut split_any = false;
        for p in panels.into_iter() {
            if p.err > cut && next.len() < settings.max_panels {
                let m = 0.5 * (p.a + p.b);
                if m > p.a && m < p.b {
                    next.push(make(p.a, m));
                    next.push(make(m, p.b));
                    split_any = true;
                    continue;
                }
            }
            next.push(p);
        }
        panels = next;
        if !split_any {
            break;
        }
    }
    if !(achieved <= settings.accept) {
        return Err(Error::QuadratureNotConverged {
            achieved,
            panels: panels.len(),
        });
    }

    // Emit nodes from the half panels, which the error estimate refers to.
    let mut nodes = Vec::with_capacity(panels.len() * 2 * gl.nodes.len());
    let mut ln_weights = Vec::with_capacity(nodes.capacity());
    for p in &panels {
        let m = 0.5 * (p.a + p.b);
        for (a, b) in [(p.a, m), (m, p.b)] {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (t, w) in gl.nodes.iter().zip(&gl.weights) {
                let x = mid + half * t;
                let lw = (w * half).ln() + ln_density(x);
                if lw.is_finite() {
                    nodes.push(x);
                    ln_weights.push(lw);
                }
            }
        }
    }
    let norm = log_sum_exp(ln_weights.iter().copied());
    if !norm.is_finite() {
        return Err(Error::QuadratureNotConverged {
            achieved: f64::INFINITY,
            panels: panels.len(),
        });
    }
    for lw in ln_weights.iter_mut() {
        *lw -= norm;
    }
    Ok((LogRule { nodes, ln_weights }, achieved))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(20);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 39 is the exactness limit
        let v = gl.integrate(0.0, 1.0, |x| x.powi(39));
        assert!((v - 1.0 / 40.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_small_orders() {
        let gl = GaussLegendre::new(2);
        assert!((gl.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let gl = GaussLegendre::new(1);
        assert_eq!(gl.nodes[0], 0.0);
        assert!((gl.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_rule_integrates_exponential_moments() {
        // Exp(1) density, moments E[X] = 1, E[X^2] = 2, E[e^{X/2}] = 2.
        let gl = GaussLegendre::new(20);
        let mut edges = vec![0.0];
        edges.extend((0..40).rev().map(|k| 80.0 * 0.5f64.powi(k)));
        let (rule, err) = adaptive_rule(
            &gl,
            |x| -x,
            &edges,
            2,
            |x, out| {
                out[0] = 0.0;
                out[1] = 0.5 * x;
            },
            AdaptiveSettings::default(),
        )
        .unwrap();
        assert!(err < 1e-10);
        assert!((rule.expect(|x| x) - 1.0).abs() < 1e-9);
        assert!((rule.expect(|x| x * x) - 2.0).abs() < 1e-8);
        assert!((rule.ln_expect(|x| 0.5 * x) - 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn non_convergence_is_reported() {
        let gl = GaussLegendre::new(2);
        let settings = AdaptiveSettings {
            tol: 1e-14,
            accept: 1e-13,
            max_panels: 4,
        };
        let r = adaptive_rule(
            &gl,
            |x| -(x * 40.0).sin().abs(),
            &[0.0, 10.0],
            1,
            |_, o| o[0] = 0.0,
            settings,
        );
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }
}
