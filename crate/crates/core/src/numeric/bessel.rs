/// Exponentially scaled modified Bessel function of the first kind, order
/// zero: `I0(z) * exp(-|z|)`.
///
/// Power series below `|z| = 30`, Hankel asymptotic expansion above.
pub fn i0e(z: f64) -> f64 {
    let z = z.abs();
    if z <= 30.0 {
        let q = 0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-z).exp()
    } else {
        let inv8z = 1.0 / (8.0 * z);
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            let odd = 2.0 * k - 1.0;
            let next = term * odd * odd * inv8z / k;
            if next.abs() >= term.abs() || next.abs() < 1e-17 * sum {
                sum += next;
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        sum / (2.0 * std::f64::consts::PI * z).sqrt()
    }
}
