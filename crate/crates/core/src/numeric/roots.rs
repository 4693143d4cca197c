//! Bracketed scalar root finding and one-dimensional maximization.

/// Outcome of a bisection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub root: f64,
    pub iterations: usize,
}

/// Bisection on `[lo, hi]`, which must bracket a sign change of `f`.
///
/// Stops once the interval is narrower than `abs_tol + rel_tol * |mid|`, or
/// when the midpoint can no longer be separated from an endpoint in f64.
/// Returns `None` if the endpoints do not bracket a root.
pub fn bisect<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Option<Bisection>
where
    F: FnMut(f64) -> f64,
{
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(Bisection {
            root: lo,
            iterations: 0,
        });
    }
    if f_hi == 0.0 {
        return Some(Bisection {
            root: hi,
            iterations: 0,
        });
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return None;
    }
    let mut iterations = 0;
    while iterations < 2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= abs_tol + rel_tol * mid.abs() {
            break;
        }
        iterations += 1;
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(Bisection {
                root: mid,
                iterations,
            });
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(Bisection {
        root: 0.5 * (lo + hi),
        iterations,
    })
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
///
/// Returns `(argmax, max)`; the endpoints are also compared so a monotone
/// objective yields its boundary maximum.
pub fn golden_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let f_a = f(a);
    let f_b = f(b);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for (x, v) in [(lo.min(hi), f_a), (lo.max(hi), f_b)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Golden-section search for the minimum; see [`golden_max`].
pub fn golden_min<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let (x, v) = golden_max(|x| -f(x), lo, hi, tol);
    (x, -v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15, 0.0).unwrap();
        assert!((r.root - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisect_rejects_missing_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 0.0).is_none());
    }

    #[test]
    fn bisect_handles_reversed_interval() {
        let r = bisect(|x| x - 0.25, 1.0, 0.0, 1e-14, 0.0).unwrap();
        assert!((r.root - 0.25).abs() < 1e-13);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3) + 1.0, 0.0, 1.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn golden_returns_boundary_for_monotone() {
        let (x, _) = golden_max(|x| x, 0.0, 1.0, 1e-9);
        assert_eq!(x, 1.0);
        let (x, v) = golden_min(|x| x, 0.0, 1.0, 1e-9);
        assert_eq!(x, 0.0);
        assert_eq!(v, 0.0);
    }
}
