//! Per-frame transmission rates of the RF and VLC links under joint average
//! and peak power constraints.

use serde::{Deserialize, Serialize};

use crate::channel::dbm_to_watts;
use crate::error::{Error, Result};
use crate::numeric::roots::bisect;

/// Frame timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSpec {
    pub duration_s: f64,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self { duration_s: 1e-4 }
    }
}

impl FrameSpec {
    /// Channel uses per frame for a link of the given bandwidth.
    pub fn symbols(&self, bandwidth_hz: f64) -> f64 {
        self.duration_s * bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid("frame.duration_s", "must be positive"));
        }
        Ok(())
    }
}

/// Average power limit and the average-to-peak ratio shared by both links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerBudget {
    pub avg_power_dbm: f64,
    pub avg_to_peak_ratio: f64,
}

impl Default for PowerBudget {
    fn default() -> Self {
        Self {
            avg_power_dbm: 30.0,
            avg_to_peak_ratio: 0.7,
        }
    }
}

impl PowerBudget {
    pub fn avg_w(&self) -> f64 {
        dbm_to_watts(self.avg_power_dbm)
    }

    pub fn peak_w(&self) -> f64 {
        self.avg_w() / self.avg_to_peak_ratio
    }

    pub fn validate(&self) -> Result<()> {
        if !self.avg_power_dbm.is_finite() {
            return Err(Error::invalid("budget.avg_power_dbm", "must be finite"));
        }
        let r = self.avg_to_peak_ratio;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::invalid(
                "budget.avg_to_peak_ratio",
                "must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// Constants of the truncated-exponential input law used by the RF bound.
///
/// `b` can take either sign. For `b < 0` the constant `a` carries a factor
/// `exp(b P_peak / 2)` that leaves the f64 range near a unit ratio, so it is
/// stored split off: `ln a = ln_a_scaled + min(b P_peak / 2, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbConstants {
    pub ln_a_scaled: f64,
    pub b: f64,
    pub p_peak: f64,
    pub residuals: (f64, f64),
}

impl AbConstants {
    /// `b P_peak / 2`.
    pub fn half_x(&self) -> f64 {
        0.5 * self.b * self.p_peak
    }

    pub fn ln_a(&self) -> f64 {
        self.ln_a_scaled + self.half_x().min(0.0)
    }

    pub fn a(&self) -> f64 {
        self.ln_a().exp()
    }
}

/// Average-to-peak ratio implied by `x = b * P_peak` once `a` is eliminated:
/// `(e^u - 1 - u) / (u (e^u - 1))` with `u = x / 2`.
pub fn ab_ratio(x: f64) -> f64 {
    let u = 0.5 * x;
    if u.abs() < 1e-4 {
        let num = 0.5 + u / 6.0 + u * u / 24.0 + u * u * u / 120.0;
        let den = 1.0 + u / 2.0 + u * u / 6.0 + u * u * u / 24.0;
        num / den
    } else if u > 700.0 {
        1.0 / u
    } else if u > 0.0 {
        let e = (-u).exp();
        let m = -(-u).exp_m1();
        (m - u * e) / (u * m)
    } else {
        let m = u.exp_m1();
        (m - u) / (u * m)
    }
}

/// Solves the two equations fixing `a` and `b` for the given average and
/// peak power.
pub fn solve_ab(p_avg: f64, p_peak: f64) -> Result<AbConstants> {
    solve_ab_with(p_avg, p_peak, ab_ratio)
}

/// [`solve_ab`] with a replaceable ratio function; used to check that a
/// broken elimination step is caught by the residual test.
pub fn solve_ab_with(p_avg: f64, p_peak: f64, ratio: fn(f64) -> f64) -> Result<AbConstants> {
    if !(p_avg > 0.0 && p_peak > 0.0 && p_avg.is_finite() && p_peak.is_finite()) {
        return Err(Error::invalid(
            "p_avg",
            "powers must be positive and finite",
        ));
    }
    if p_avg > p_peak * (1.0 + 1e-12) {
        return Err(Error::invalid("p_avg", "average power exceeds peak power"));
    }
    let nu = (p_avg / p_peak).min(1.0);
    let f = |x: f64| ratio(x) - nu;
    // Grow the bracket symmetrically; the ratio tends to 1 and 0 at the ends
    // only algebraically, so wide brackets are needed near those limits.
    let mut half = 1.0;
    let mut bracket = None;
    while half <= 1e15 {
        if f(-half).signum() != f(half).signum() {
            bracket = Some(half);
            break;
        }
        half *= 10.0;
    }
    let x = match bracket {
        Some(h) => {
            bisect(f, -h, h, 1e-12, 1e-14)
                .ok_or(Error::NoBracket {
                    what: "average-to-peak ratio equation",
                })?
                .root
        }
        None => {
            // At the edge of the representable range accept an endpoint that
            // already satisfies the equation to round-off.
            let h = 1e15;
            if f(-h).abs() < 1e-12 {
                -h
            } else if f(h).abs() < 1e-12 {
                h
            } else {
                return Err(Error::NoBracket {
                    what: "average-to-peak ratio equation",
                });
            }
        }
    };
    let b = x / p_peak;
    let u = 0.5 * x;
    let ln_a_scaled = if x == 0.0 {
        (2.0 / p_peak).ln()
    } else if x < 0.0 {
        (-b).ln() - (-(u.exp_m1())).ln()
    } else {
        b.ln() - (-((-u).exp_m1())).ln()
    };
    let mut c = AbConstants {
        ln_a_scaled,
        b,
        p_peak,
        residuals: (0.0, 0.0),
    };
    c.residuals = ab_residuals(&c, p_avg);
    Ok(c)
}

/// `ln(e^u - 1 - u)`, valid for any `u != 0`.
fn ln_exp_minus_linear(u: f64) -> f64 {
    if u > 700.0 {
        u + (-(1.0 + u) * (-u).exp()).ln_1p()
    } else {
        (u.exp_m1() - u).ln()
    }
}

/// Residuals of the two defining equations, evaluated term by term from
/// their original form. The `exp(-b P_peak / 2)` factors are combined with
/// the one split off `a` before exponentiating.
pub fn ab_residuals(c: &AbConstants, p_avg: f64) -> (f64, f64) {
    let nu = p_avg / c.p_peak;
    let u = c.half_x();
    let ln_half_peak = (0.5 * c.p_peak).ln();
    if u == 0.0 {
        return ((c.ln_a_scaled + ln_half_peak).exp_m1(), 0.5 - nu);
    }
    // (a/b)(1 - e^{-bP/2}) = (a P/2) (1 - e^{-u}) / u
    let ln_frac = if u < 0.0 {
        (u.exp_m1() / u).ln()
    } else {
        (-((-u).exp_m1()) / u).ln()
    };
    let r1 = (c.ln_a_scaled + ln_half_peak + ln_frac).exp_m1();
    // 2 (a/b) (bP)^{-1} [1 - e^{-u}(1 + u)] = (a P/2) e^{-u} (e^u - 1 - u) / u^2
    let shift = if u < 0.0 { 0.0 } else { -u };
    let ln_t2 = c.ln_a_scaled + ln_half_peak + shift + ln_exp_minus_linear(u) - 2.0 * u.abs().ln();
    let r2 = ln_t2.exp() - nu;
    (r1, r2)
}

/// Lower bound on the RF rate as a function of `|h|^2`:
/// `R(h2) = n log2(1 + G h2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfRateModel {
    /// Channel uses per frame.
    pub symbols: f64,
    /// `ln G` with `G = 2/(a sigma^2) exp(b P_avg/2 - 1)`.
    pub ln_gain: f64,
}

impl RfRateModel {
    pub fn new(constants: &AbConstants, symbols: f64, p_avg: f64, noise_power: f64) -> Self {
        // -ln a + b P_avg / 2 with the split-off exponent folded in exactly.
        let u = constants.half_x();
        let nu = p_avg / constants.p_peak;
        let exponent = if u < 0.0 { u * (nu - 1.0) } else { u * nu };
        let ln_gain = 2f64.ln() - constants.ln_a_scaled - noise_power.ln() + exponent - 1.0;
        Self { symbols, ln_gain }
    }

    /// Solves the constants and builds the model in one go.
    pub fn from_powers(p_avg: f64, p_peak: f64, symbols: f64, noise_power: f64) -> Result<Self> {
        let c = solve_ab(p_avg, p_peak)?;
        Ok(Self::new(&c, symbols, p_avg, noise_power))
    }

    /// Bits per frame at fading power `h2`.
    pub fn rate(&self, h2: f64) -> f64 {
        if h2 <= 0.0 {
            return 0.0;
        }
        let z = self.ln_gain + h2.ln();
        let ln1p = if z > 36.0 {
            z + (-z).exp()
        } else {
            z.exp().ln_1p()
        };
        self.symbols * ln1p / std::f64::consts::LN_2
    }

    /// Fading power at which the RF rate equals `v`.
    pub fn threshold(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let y = v * std::f64::consts::LN_2 / self.symbols;
        let ln_em1 = if y > 700.0 {
            y + (-(-y).exp()).ln_1p()
        } else {
            y.exp_m1().ln()
        };
        (ln_em1 - self.ln_gain).exp()
    }
}

/// Right side of the optical ratio equation: `1/mu - 1/(e^mu - 1)`.
pub fn mu_ratio(mu: f64) -> f64 {
    if mu < 1e-2 {
        let m2 = mu * mu;
        0.5 - mu / 12.0 + mu * m2 / 720.0 - mu * m2 * m2 / 30240.0
    } else {
        1.0 / mu - 1.0 / mu.exp_m1()
    }
}

/// Residual of the optical ratio equation in its printed form.
pub fn mu_star_residual(mu: f64, ratio: f64) -> f64 {
    1.0 / mu - (-mu).exp() / (1.0 - (-mu).exp()) - ratio
}

/// Solves `ratio = 1/mu - e^{-mu}/(1 - e^{-mu})` for `mu > 0`; only defined
/// below one half.
pub fn solve_mu_star(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(Error::invalid("avg_to_peak_ratio", "must be positive"));
    }
    if ratio >= 0.5 {
        return Err(Error::OutOfRegime { ratio });
    }
    let f = |mu: f64| mu_ratio(mu) - ratio;
    if f(1e-9) <= 0.0 {
        // Within rounding of one half; invert the leading series term.
        return Ok((12.0 * (0.5 - ratio)).max(f64::MIN_POSITIVE));
    }
    let mut hi = 700.0;
    while f(hi) > 0.0 && hi < 1e300 {
        hi *= 10.0;
    }
    let r = bisect(f, 1e-9, hi, 1e-15, 1e-14).ok_or(Error::NoBracket {
        what: "optical ratio equation",
    })?;
    Ok(r.root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VlcRegime {
    LowRatio,
    HighRatio,
}

/// Constant VLC rate and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlcRate {
    pub bits_per_frame: f64,
    pub mu_star: Option<f64>,
    pub regime: VlcRegime,
}

/// VLC rate for optical gain `g`.
pub fn vlc_rate(
    gain: f64,
    responsivity: f64,
    noise_power: f64,
    symbols: f64,
    p_avg: f64,
    p_peak: f64,
) -> Result<VlcRate> {
    if !(gain >= 0.0) {
        return Err(Error::invalid("gain", "must be nonnegative"));
    }
    let ratio = p_avg / p_peak;
    let snr_peak =
        (p_peak * responsivity * gain).powi(2) / (2.0 * std::f64::consts::PI * noise_power);
    let (factor, mu_star, regime) = if ratio < 0.5 {
        let mu = solve_mu_star(ratio)?;
        let shape = -(-mu).exp_m1() / mu;
        (
            (2.0 * ratio * mu - 1.0).exp() * shape * shape,
            Some(mu),
            VlcRegime::LowRatio,
        )
    } else {
        ((-1.0f64).exp(), None, VlcRegime::HighRatio)
    };
    let bits = 0.5 * symbols * (snr_peak * factor).ln_1p() / std::f64::consts::LN_2;
    Ok(VlcRate {
        bits_per_frame: bits,
        mu_star,
        regime,
    })
}
