//! Simultaneous RF and VLC transmission with a per-frame power split.
//!
//! A fraction `gamma` of the average power goes to RF and the rest to VLC;
//! both links keep the full peak power `P / nu`.

use crate::channel::{FadingLaw, RfChannelSpec, VlcChannelSpec};
use crate::error::{Error, Result};
use crate::numeric::roots::golden_max;
use crate::rates::{solve_ab, vlc_rate, FrameSpec, PowerBudget, RfRateModel};

/// Closest the split may come to giving one link no power at all.
pub const SPLIT_EDGE: f64 = 1e-6;

const SIDE_INTERVALS: usize = 256;

#[derive(Debug, Clone)]
pub struct SplitModel {
    p_avg: f64,
    p_peak: f64,
    rf_symbols: f64,
    rf_noise: f64,
    vlc_gain: f64,
    responsivity: f64,
    vlc_noise: f64,
    vlc_symbols: f64,
    /// Split above which the VLC link runs below half its peak on average.
    pub breakpoint: Option<f64>,
    /// Tabulated `(gamma, ln G_rf, V)` per side of the breakpoint.
    sides: Vec<Vec<(f64, f64, f64)>>,
}

impl SplitModel {
    pub fn new(
        rf: &RfChannelSpec,
        vlc: &VlcChannelSpec,
        budget: &PowerBudget,
        frame: &FrameSpec,
    ) -> Result<Self> {
        let mut m = Self {
            p_avg: budget.avg_w(),
            p_peak: budget.peak_w(),
            rf_symbols: frame.symbols(rf.bandwidth_hz),
            rf_noise: rf.noise_power(),
            vlc_gain: vlc.gain()?,
            responsivity: vlc.responsivity_a_per_w,
            vlc_noise: vlc.noise_power(),
            vlc_symbols: frame.symbols(vlc.bandwidth_hz),
            breakpoint: None,
            sides: Vec::new(),
        };
        let nu = budget.avg_to_peak_ratio;
        let lo = SPLIT_EDGE;
        let hi = 1.0 - SPLIT_EDGE;
        let mut bounds = vec![lo];
        if nu > 0.5 {
            let gb = 1.0 - 0.5 / nu;
            if gb > lo && gb < hi {
                m.breakpoint = Some(gb);
                bounds.push(gb);
            }
        }
        bounds.push(hi);
        for w in bounds.windows(2) {
            let mut side = Vec::with_capacity(SIDE_INTERVALS + 1);
            for i in 0..=SIDE_INTERVALS {
                let g = if i == SIDE_INTERVALS {
                    w[1]
                } else {
                    w[0] + (w[1] - w[0]) * i as f64 / SIDE_INTERVALS as f64
                };
                let (lg, v) = m.exact(g)?;
                side.push((g, lg, v));
            }
            m.sides.push(side);
        }
        Ok(m)
    }

    /// RF rate model and VLC rate at split `gamma`, solved from scratch.
    pub fn exact(&self, gamma: f64) -> Result<(f64, f64)> {
        let rf = self.rf_model(gamma)?;
        let v = self.vlc_bits(gamma)?;
        Ok((rf.ln_gain, v))
    }

    pub fn rf_model(&self, gamma: f64) -> Result<RfRateModel> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid("gamma", "must lie in (0, 1)"));
        }
        let p = gamma * self.p_avg;
        let c = solve_ab(p, self.p_peak)?;
        Ok(RfRateModel::new(&c, self.rf_symbols, p, self.rf_noise))
    }

    pub fn vlc_bits(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid("gamma", "must lie in (0, 1)"));
        }
        let v = vlc_rate(
            self.vlc_gain,
            self.responsivity,
            self.vlc_noise,
            self.vlc_symbols,
            (1.0 - gamma) * self.p_avg,
            self.p_peak,
        )?;
        Ok(v.bits_per_frame)
    }

    /// Sum rate at split `gamma`, solved from scratch.
    pub fn total_exact(&self, h2: f64, gamma: f64) -> Result<f64> {
        let rf = self.rf_model(gamma)?;
        Ok(rf.rate(h2) + self.vlc_bits(gamma)?)
    }

    fn rf_bits(&self, ln_gain: f64, h2: f64) -> f64 {
        RfRateModel {
            symbols: self.rf_symbols,
            ln_gain,
        }
        .rate(h2)
    }

    /// Sum rate from the table, quadratic between nodes.
    fn total_interp(&self, side: usize, h2: f64, gamma: f64) -> f64 {
        let t = &self.sides[side];
        let (g0, g1) = (t[0].0, t[t.len() - 1].0);
        let pos = (gamma - g0) / (g1 - g0) * SIDE_INTERVALS as f64;
        let i = (pos.round() as usize).clamp(1, SIDE_INTERVALS - 1);
        let (xa, xb, xc) = (t[i - 1].0, t[i].0, t[i + 1].0);
        let la = (gamma - xb) * (gamma - xc) / ((xa - xb) * (xa - xc));
        let lb = (gamma - xa) * (gamma - xc) / ((xb - xa) * (xb - xc));
        let lc = (gamma - xa) * (gamma - xb) / ((xc - xa) * (xc - xb));
        let lg = la * t[i - 1].1 + lb * t[i].1 + lc * t[i + 1].1;
        let v = la * t[i - 1].2 + lb * t[i].2 + lc * t[i + 1].2;
        self.rf_bits(lg, h2) + v
    }

    /// Best split for fading power `h2` and the resulting sum rate.
    ///
    /// Scans the table, refines by golden section on the two intervals
    /// around the best node, then evaluates the winner exactly.
    pub fn best_split(&self, h2: f64) -> (f64, f64) {
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for (s, side) in self.sides.iter().enumerate() {
            for (i, &(_, lg, v)) in side.iter().enumerate() {
                let tot = self.rf_bits(lg, h2) + v;
                if tot > best.2 {
                    best = (s, i, tot);
                }
            }
        }
        let (s, i, _) = best;
        let t = &self.sides[s];
        let mut gamma = t[i].0;
        let mut top = best.2;
        for (a, b) in [(i.saturating_sub(1), i), (i, (i + 1).min(t.len() - 1))] {
            if a == b {
                continue;
            }
            let (g, f) = golden_max(|g| self.total_interp(s, h2, g), t[a].0, t[b].0, 1e-7);
            if f > top {
                top = f;
                gamma = g;
            }
        }
        match self.total_exact(h2, gamma) {
            Ok(total) => (gamma, total),
            Err(_) => (t[i].0, best.2),
        }
    }

    /// Log-MGF of the per-frame best sum rate.
    pub fn lmgf(&self, fading: &FadingLaw, theta: f64) -> Result<f64> {
        let mut breaks = Vec::new();
        if !fading.is_deterministic() {
            breaks.push(fading.mean());
        }
        let rule = fading.rule(&breaks, 2, |x, out| out[1] = theta * self.best_split(x).1)?;
        Ok(rule.ln_expect(|x| theta * self.best_split(x).1))
    }

    /// Log-MGF with one split used in every frame:
    /// `theta V(gamma) + Lambda_rf(theta)` at RF power `gamma P`.
    pub fn fixed_lmgf(&self, fading: &FadingLaw, gamma: f64, theta: f64) -> Result<f64> {
        let rf = self.rf_model(gamma)?;
        let v = self.vlc_bits(gamma)?;
        let rule = fading.rule(&[], 2, |x, out| out[1] = theta * rf.rate(x))?;
        Ok(theta * v + rule.ln_expect(|x| theta * rf.rate(x)))
    }

    /// Mean of the chosen split over the fading law.
    pub fn mean_split(&self, fading: &FadingLaw) -> Result<f64> {
        let rule = fading.rule(&[], 2, |x, out| out[1] = self.best_split(x).0.ln())?;
        Ok(rule.expect(|x| self.best_split(x).0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> (SplitModel, FadingLaw) {
        let rf = RfChannelSpec::default();
        let vlc = VlcChannelSpec::default();
        let m = SplitModel::new(&rf, &vlc, &PowerBudget::default(), &FrameSpec::default()).unwrap();
        (m, rf.fading())
    }

    #[test]
    fn breakpoint_location() {
        let (m, _) = model();
        let gb = m.breakpoint.unwrap();
        assert!((gb - (1.0 - 0.5 / 0.7)).abs() < 1e-15);
        let low = PowerBudget {
            avg_to_peak_ratio: 0.3,
            ..Default::default()
        };
        let m = SplitModel::new(
            &RfChannelSpec::default(),
            &VlcChannelSpec::default(),
            &low,
            &FrameSpec::default(),
        )
        .unwrap();
        assert!(m.breakpoint.is_none());
    }

    #[test]
    fn dark_vlc_gives_rf_at_full_power() {
        let vlc = VlcChannelSpec {
            rx_position_m: [10.0, 0.0, -2.5],
            field_of_view_deg: 30.0,
            ..Default::default()
        };
        assert_eq!(vlc.gain().unwrap(), 0.0);
        let rf = RfChannelSpec::default();
        let b = PowerBudget::default();
        let m = SplitModel::new(&rf, &vlc, &b, &FrameSpec::default()).unwrap();
        let h2 = rf.fading().mean();
        let full = RfRateModel::from_powers(
            b.avg_w(),
            b.peak_w(),
            FrameSpec::default().symbols(rf.bandwidth_hz),
            rf.noise_power(),
        )
        .unwrap()
        .rate(h2);
        let edge = m.total_exact(h2, 1.0 - SPLIT_EDGE).unwrap();
        assert!((edge - full).abs() < 1e-4 * full);
        assert!(m.best_split(h2).1 >= edge - 1e-9 * full);
    }

    #[test]
    fn fixed_split_is_additive() {
        let (m, law) = model();
        let theta = 0.01;
        let lhs = m.fixed_lmgf(&law, 0.5, -theta).unwrap();
        let rf = m.rf_model(0.5).unwrap();
        let rule = law
            .rule(&[], 2, |x, out| out[1] = -theta * rf.rate(x))
            .unwrap();
        let rhs = -theta * m.vlc_bits(0.5).unwrap() + rule.ln_expect(|x| -theta * rf.rate(x));
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
    }

    #[test]
    fn lmgf_vanishes_at_zero() {
        let (m, law) = model();
        assert!(m.lmgf(&law, 0.0).unwrap().abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn golden_matches_fine_scan(scale in -3.0f64..2.0, nu in 0.1f64..1.0) {
            let rf = RfChannelSpec::default();
            let b = PowerBudget { avg_to_peak_ratio: nu, ..Default::default() };
            let m = SplitModel::new(&rf, &VlcChannelSpec::default(), &b, &FrameSpec::default()).unwrap();
            let h2 = rf.fading().mean() * 10f64.powf(scale);
            let (_, total) = m.best_split(h2);
            let mut scan = f64::NEG_INFINITY;
            let mut g = 1e-4;
            while g < 1.0 {
                scan = scan.max(m.total_exact(h2, g).unwrap());
                g += 1e-4;
            }
            prop_assert!(total >= scan - 1e-3, "golden {total} vs scan {scan}");
        }
    }
}
