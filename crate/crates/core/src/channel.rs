//! Link geometry, large-scale loss, noise and Rician fading.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::bessel::i0e;
use crate::numeric::quadrature::{adaptive_rule, AdaptiveSettings, GaussLegendre, LogRule};

pub const BOLTZMANN: f64 = 1.380649e-23;

/// Reference distance of the path-loss model, metres.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

/// How decibel quantities of the RF path loss are turned into linear powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DbConvention {
    /// Natural log distance term and `exp(-L/10)` power.
    #[default]
    AsPrinted,
    /// `log10` distance term and `10^(-L/10)` power.
    Base10,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "mode", deny_unknown_fields)]
pub enum Shadowing {
    #[default]
    FixedZero,
    /// One Gaussian draw per scenario.
    DrawnOnce { seed: u64 },
}

/// LED and photo-diode parameters of the optical link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VlcChannelSpec {
    pub half_intensity_angle_deg: f64,
    pub field_of_view_deg: f64,
    pub pd_area_m2: f64,
    pub concentrator_gain: f64,
    pub bandwidth_hz: f64,
    pub responsivity_a_per_w: f64,
    pub noise_psd_a2_per_hz: f64,
    /// LED position; its normal points down.
    pub tx_position_m: [f64; 3],
    /// Photo-diode position; its normal points up.
    pub rx_position_m: [f64; 3],
}

impl Default for VlcChannelSpec {
    fn default() -> Self {
        let dv = 2.5;
        let dh = (3.0f64 * 3.0 - dv * dv).sqrt();
        Self {
            half_intensity_angle_deg: 60.0,
            field_of_view_deg: 90.0,
            pd_area_m2: 1e-4,
            concentrator_gain: 1.0,
            bandwidth_hz: 10e6,
            responsivity_a_per_w: 0.53,
            noise_psd_a2_per_hz: 1e-21,
            tx_position_m: [0.0, 0.0, 0.0],
            rx_position_m: [dh, 0.0, -dv],
        }
    }
}

impl VlcChannelSpec {
    pub fn validate(&self) -> Result<()> {
        let phi = self.half_intensity_angle_deg;
        if !(phi > 0.0 && phi < 90.0) {
            return Err(Error::invalid(
                "vlc.half_intensity_angle_deg",
                "must lie in (0, 90)",
            ));
        }
        let fov = self.field_of_view_deg;
        if !(fov > 0.0 && fov <= 90.0) {
            return Err(Error::invalid(
                "vlc.field_of_view_deg",
                "must lie in (0, 90]",
            ));
        }
        for (name, v) in [
            ("vlc.pd_area_m2", self.pd_area_m2),
            ("vlc.bandwidth_hz", self.bandwidth_hz),
            ("vlc.responsivity_a_per_w", self.responsivity_a_per_w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.concentrator_gain >= 0.0) {
            return Err(Error::invalid(
                "vlc.concentrator_gain",
                "must be nonnegative",
            ));
        }
        if !(self.noise_psd_a2_per_hz > 0.0) {
            return Err(Error::invalid(
                "vlc.noise_psd_a2_per_hz",
                "must be positive",
            ));
        }
        if !(self.vertical_distance() > 0.0) {
            return Err(Error::invalid(
                "vlc.rx_position_m",
                "receiver must sit below the transmitter",
            ));
        }
        Ok(())
    }

    pub fn vertical_distance(&self) -> f64 {
        self.tx_position_m[2] - self.rx_position_m[2]
    }

    pub fn distance(&self) -> f64 {
        let d: f64 = (0..3)
            .map(|i| (self.tx_position_m[i] - self.rx_position_m[i]).powi(2))
            .sum();
        d.sqrt()
    }

    /// Lambertian order of the LED.
    pub fn lambertian_order(&self) -> f64 {
        -1.0 / self.half_intensity_angle_deg.to_radians().cos().log2()
    }

    /// Incidence angle in radians.
    pub fn incidence_angle(&self) -> f64 {
        (self.vertical_distance() / self.distance())
            .clamp(-1.0, 1.0)
            .acos()
    }

    /// Line-of-sight optical gain.
    pub fn gain(&self) -> Result<f64> {
        let d1 = self.distance();
        if d1 == 0.0 {
            return Err(Error::invalid(
                "vlc.rx_position_m",
                "coincides with the transmitter",
            ));
        }
        if self.incidence_angle() > self.field_of_view_deg.to_radians() + 1e-12 {
            return Ok(0.0);
        }
        let s = self.lambertian_order();
        let dv = self.vertical_distance();
        let num = (s + 1.0) * self.pd_area_m2 * self.concentrator_gain;
        let den = 2.0 * std::f64::consts::PI;
        Ok(num / den * (dv / d1).powf(s + 1.0) / (d1 * d1))
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_psd_a2_per_hz * self.bandwidth_hz
    }
}

/// Radio link parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfChannelSpec {
    pub bandwidth_hz: f64,
    /// Rician factor in dB; `+inf` means a pure line-of-sight channel.
    pub rician_factor_db: f64,
    pub path_loss_exponent: f64,
    pub shadowing_std_db: f64,
    pub reference_loss_db: f64,
    pub ambient_temp_k: f64,
    pub distance_m: f64,
    pub shadowing: Shadowing,
    pub db_convention: DbConvention,
}

impl Default for RfChannelSpec {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            rician_factor_db: 10.0,
            path_loss_exponent: 1.8,
            shadowing_std_db: 3.6,
            reference_loss_db: 40.0,
            ambient_temp_k: 280.0,
            distance_m: 15.0,
            shadowing: Shadowing::FixedZero,
            db_convention: DbConvention::AsPrinted,
        }
    }
}

impl RfChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::invalid("rf.bandwidth_hz", "must be positive"));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::invalid("rf.path_loss_exponent", "must be positive"));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(Error::invalid("rf.shadowing_std_db", "must be nonnegative"));
        }
        if !(self.ambient_temp_k > 0.0) {
            return Err(Error::invalid("rf.ambient_temp_k", "must be positive"));
        }
        if !(self.distance_m >= REFERENCE_DISTANCE_M) {
            return Err(Error::invalid(
                "rf.distance_m",
                "must be at least the 1 m reference distance",
            ));
        }
        if self.rician_factor_db.is_nan() || self.rician_factor_db == f64::NEG_INFINITY {
            return Err(Error::invalid("rf.rician_factor_db", "must be a number"));
        }
        Ok(())
    }

    /// Shadowing term `X_sigma` in dB.
    pub fn shadowing_db(&self) -> f64 {
        match self.shadowing {
            Shadowing::FixedZero => 0.0,
            Shadowing::DrawnOnce { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let z: f64 = rng.sample(StandardNormal);
                self.shadowing_std_db * z
            }
        }
    }

    /// Large-scale path loss in dB.
    pub fn path_loss_db(&self) -> f64 {
        let ratio = self.distance_m / REFERENCE_DISTANCE_M;
        let log = match self.db_convention {
            DbConvention::AsPrinted => ratio.ln(),
            DbConvention::Base10 => ratio.log10(),
        };
        self.reference_loss_db + 10.0 * self.path_loss_exponent * log + self.shadowing_db()
    }

    /// Average fading power `E|h|^2` implied by the path loss.
    pub fn fading_power(&self) -> f64 {
        let l = self.path_loss_db();
        match self.db_convention {
            DbConvention::AsPrinted => (-l / 10.0).exp(),
            DbConvention::Base10 => 10f64.powf(-l / 10.0),
        }
    }

    pub fn rician_k(&self) -> f64 {
        10f64.powf(self.rician_factor_db / 10.0)
    }

    pub fn noise_power(&self) -> f64 {
        BOLTZMANN * self.ambient_temp_k * self.bandwidth_hz
    }

    pub fn fading(&self) -> FadingLaw {
        FadingLaw::rician(self.fading_power(), self.rician_k())
    }
}

/// `(sigma_r^2, sigma_v^2)`.
pub fn noise_powers(rf: &RfChannelSpec, vlc: &VlcChannelSpec) -> (f64, f64) {
    (rf.noise_power(), vlc.noise_power())
}

/// Law of `|h|^2` for `h` complex Gaussian with real mean `sqrt(los)` and
/// total scattered variance `scatter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingLaw {
    pub los: f64,
    pub scatter: f64,
}

impl FadingLaw {
    pub fn rician(power: f64, k: f64) -> Self {
        if k.is_infinite() {
            return Self {
                los: power,
                scatter: 0.0,
            };
        }
        Self {
            los: power * k / (k + 1.0),
            scatter: power / (k + 1.0),
        }
    }

    pub fn mean(&self) -> f64 {
        self.los + self.scatter
    }

    pub fn is_deterministic(&self) -> bool {
        self.scatter == 0.0
    }

    /// Log density of `|h|^2` at `x >= 0`.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 || self.is_deterministic() {
            return f64::NEG_INFINITY;
        }
        let s2 = self.scatter;
        let m = self.los.sqrt();
        let r = x.sqrt();
        -s2.ln() - (r - m) * (r - m) / s2 + i0e(2.0 * m * r / s2).ln()
    }

    /// A point beyond which the density mass is below about 1e-10.
    pub fn bulk_upper(&self) -> f64 {
        let t = (1e10f64).ln();
        let v = self.los.sqrt() + (self.scatter * t).sqrt();
        v * v
    }

    /// Discrete rule for expectations over `|h|^2`, refined against the
    /// log integrands produced by `ln_integrands` (entry 0 is reserved for
    /// the density itself and is overwritten with 0).
    pub fn rule<G>(
        &self,
        breakpoints: &[f64],
        n_integrands: usize,
        ln_integrands: G,
    ) -> Result<LogRule>
    where
        G: Fn(f64, &mut [f64]),
    {
        if self.is_deterministic() {
            return Ok(LogRule::point(self.los));
        }
        let n = n_integrands.max(1);
        let integrands = |x: f64, out: &mut [f64]| {
            ln_integrands(x, out);
            out[0] = 0.0;
        };
        let mut hi = self.bulk_upper();
        for &b in breakpoints {
            if b.is_finite() && b > 0.0 {
                hi = hi.max(2.0 * b);
            }
        }
        // Push the upper limit out until the heaviest integrand has decayed.
        let mut buf = vec![0.0; n];
        let mut peak = f64::NEG_INFINITY;
        let edge_val = |x: f64, buf: &mut [f64]| -> f64 {
            integrands(x, buf);
            let d = self.ln_pdf(x) + x.ln();
            buf.iter().map(|v| d + v).fold(f64::NEG_INFINITY, f64::max)
        };
        for k in 0..60 {
            let x = hi * 0.5f64.powi(k);
            peak = peak.max(edge_val(x, &mut buf));
        }
        let mut grow = 0;
        loop {
            let tail = edge_val(hi, &mut buf);
            peak = peak.max(tail);
            if tail < peak - 40.0 || grow >= 64 {
                break;
            }
            hi *= 2.0;
            grow += 1;
        }
        let mut edges: Vec<f64> = (0..=80).map(|k| hi * 0.5f64.powi(k)).collect();
        edges.push(0.0);
        edges.extend(breakpoints.iter().copied().filter(|b| *b > 0.0 && *b < hi));
        edges.sort_by(|a, b| a.total_cmp(b));
        edges.dedup();
        let gl = gauss_legendre_20();
        let (rule, _) = adaptive_rule(
            gl,
            |x| self.ln_pdf(x),
            &edges,
            n,
            integrands,
            AdaptiveSettings::default(),
        )?;
        Ok(rule)
    }

    pub fn sampler(&self, seed: u64) -> FadingSampler {
        FadingSampler::new(*self, seed)
    }
}

fn gauss_legendre_20() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(20))
}

/// Seeded i.i.d. generator of `|h|^2` values.
#[derive(Debug, Clone)]
pub struct FadingSampler {
    pub law: FadingLaw,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl FadingSampler {
    pub fn new(law: FadingLaw, seed: u64) -> Self {
        Self {
            law,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_power(&mut self) -> f64 {
        if self.law.is_deterministic() {
            return self.law.los;
        }
        let sd = (0.5 * self.law.scatter).sqrt();
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        let re = self.law.los.sqrt() + sd * re;
        let im = sd * im;
        re * re + im * im
    }

    pub fn sample(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.next_power()).collect()
    }
}

/// `dBm -> W`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// `W -> dBm`.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}
