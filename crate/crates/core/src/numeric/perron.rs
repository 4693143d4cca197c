//! Perron roots of nonnegative matrices.

use crate::error::{Error, Result};

/// Log of the Perron root of the nonnegative 2×2 matrix `[[a, b], [c, d]]`,
/// given `ln a`, `ln(b c)` and `ln d`.
///
/// All terms are rescaled by the largest of `a`, `d`, `sqrt(bc)` so nothing
/// overflows, and the discriminant is written as `(a - d)^2 + 4bc`, a sum of
/// nonnegative terms.
pub fn ln_perron_2x2(ln_a: f64, ln_bc: f64, ln_d: f64) -> f64 {
    let m = ln_a.max(ln_d).max(0.5 * ln_bc);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let a = (ln_a - m).exp();
    let d = (ln_d - m).exp();
    let bc = (ln_bc - 2.0 * m).exp();
    let disc = (a - d) * (a - d) + 4.0 * bc;
    m + (0.5 * (a + d + disc.sqrt())).ln()
}

/// Sparse square matrix stored as `(row, col, value)` triplets, acting as
/// `y[row] += value * x[col]`.
#[derive(Debug, Clone, Default)]
pub struct SparseMatrix {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.dim && col < self.dim);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
    }
}

/// Result of [`spectral_radius`].
#[derive(Debug, Clone)]
pub struct PerronEstimate {
    pub radius: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Spectral radius of an irreducible nonnegative matrix by shifted power
/// iteration.
///
/// Each step applies `M + s I` with `s` the current estimate, which breaks the
/// rotation of periodic chains. Stops when the Collatz–Wielandt bounds
/// `min (Mx)_i / x_i <= r <= max (Mx)_i / x_i` agree to `rel_tol`.
pub fn spectral_radius(m: &SparseMatrix, rel_tol: f64, max_iter: usize) -> Result<PerronEstimate> {
    let n = m.dim;
    if n == 0 {
        return Err(Error::invalid("matrix", "empty matrix"));
    }
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    let mut shift = 0.0;
    for it in 1..=max_iter {
        m.apply(&x, &mut y);
        let xmax = x.iter().cloned().fold(0.0, f64::max);
        let floor = 1e-150 * xmax;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (xi, yi) in x.iter().zip(&y) {
            if *xi > floor {
                let q = yi / xi;
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        if hi == 0.0 {
            return Ok(PerronEstimate {
                radius: 0.0,
                vector: x,
                iterations: it,
            });
        }
        if hi - lo <= rel_tol * hi {
            return Ok(PerronEstimate {
                radius: 0.5 * (lo + hi),
                vector: x,
                iterations: it,
            });
        }
        if it % 16 == 1 {
            shift = 0.5 * (lo + hi);
        }
        let mut ymax = 0.0f64;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += shift * xi;
            ymax = ymax.max(*yi);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ymax;
        }
    }
    Err(Error::PowerIterationNotConverged {
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_2x2_root(a: f64, b: f64, c: f64, d: f64) -> f64 {
        let tr = a + d;
        let det = a * d - b * c;
        0.5 * (tr + (tr * tr - 4.0 * det).sqrt())
    }

    #[test]
    fn matches_characteristic_polynomial() {
        for &(a, b, c, d) in &[
            (0.7, 0.3, 0.4, 0.6),
            (2.0, 0.1, 5.0, 0.5),
            (1.0, 0.0, 0.0, 3.0),
            (0.0, 1.0, 1.0, 0.0),
        ] {
            let r = ln_perron_2x2(f64::ln(a), f64::ln(b * c), f64::ln(d)).exp();
            assert!((r - dense_2x2_root(a, b, c, d)).abs() < 1e-14 * r.max(1.0));
        }
    }

    #[test]
    fn huge_entries_do_not_overflow() {
        let r = ln_perron_2x2(2000.0, 2000.0 + 0.2f64.ln(), 0.0);
        assert!((r - 2000.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_on_periodic_cycle() {
        // 3-cycle with weights 2, 3, 4: radius = 24^(1/3).
        let mut m = SparseMatrix::new(3);
        m.push(1, 0, 2.0);
        m.push(2, 1, 3.0);
        m.push(0, 2, 4.0);
        let est = spectral_radius(&m, 1e-12, 100_000).unwrap();
        assert!((est.radius - 24f64.cbrt()).abs() < 1e-10);
    }

    #[test]
    fn power_iteration_on_stochastic_matrix() {
        let mut m = SparseMatrix::new(2);
        m.push(0, 0, 0.7);
        m.push(1, 0, 0.3);
        m.push(0, 1, 0.4);
        m.push(1, 1, 0.6);
        let est = spectral_radius(&m, 1e-12, 10_000).unwrap();
        assert!((est.radius - 1.0).abs() < 1e-11);
    }
}
