//! Steady-state QoS analysis: service log-MGFs, maximum sustainable arrival
//! rates, and link selection.

pub mod handover;
pub mod split;

use serde::{Deserialize, Serialize};

use crate::channel::{FadingLaw, RfChannelSpec, VlcChannelSpec};
use crate::error::{Error, Result};
use crate::numeric::log_add_exp;
use crate::numeric::quadrature::LogRule;
use crate::rates::{vlc_rate, FrameSpec, PowerBudget, RfRateModel, VlcRate};
use crate::source::{ln_onoff_root, SourceSpec};

pub use handover::HandoverChain;
pub use split::SplitModel;

/// Transmission strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// RF link only.
    Rf,
    /// VLC link only.
    Vlc,
    /// Per-frame switch to whichever link has the higher rate.
    Hybrid1,
    /// Both links at once with a per-frame power split.
    Hybrid2,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Rf,
        Strategy::Vlc,
        Strategy::Hybrid1,
        Strategy::Hybrid2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Rf => "rf",
            Strategy::Vlc => "vlc",
            Strategy::Hybrid1 => "hybrid1",
            Strategy::Hybrid2 => "hybrid2",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Both links of one receiver position, with the rate models resolved.
#[derive(Debug, Clone)]
pub struct LinkSet {
    pub rf: RfRateModel,
    pub fading: FadingLaw,
    pub vlc: VlcRate,
    /// Fading power at which the RF rate equals the VLC rate.
    pub kappa: f64,
    pub split: SplitModel,
}

impl LinkSet {
    pub fn new(
        rf: &RfChannelSpec,
        vlc: &VlcChannelSpec,
        budget: &PowerBudget,
        frame: &FrameSpec,
    ) -> Result<Self> {
        rf.validate()?;
        vlc.validate()?;
        budget.validate()?;
        frame.validate()?;
        let p = budget.avg_w();
        let peak = budget.peak_w();
        let rf_model =
            RfRateModel::from_powers(p, peak, frame.symbols(rf.bandwidth_hz), rf.noise_power())?;
        let gain = vlc.gain()?;
        let v = vlc_rate(
            gain,
            vlc.responsivity_a_per_w,
            vlc.noise_power(),
            frame.symbols(vlc.bandwidth_hz),
            p,
            peak,
        )?;
        let split = SplitModel::new(rf, vlc, budget, frame)?;
        Ok(Self::from_parts(rf_model, rf.fading(), v, split))
    }

    pub fn from_parts(rf: RfRateModel, fading: FadingLaw, vlc: VlcRate, split: SplitModel) -> Self {
        let kappa = rf.threshold(vlc.bits_per_frame);
        Self {
            rf,
            fading,
            vlc,
            kappa,
            split,
        }
    }

    /// Constant VLC rate in bits per frame.
    pub fn v(&self) -> f64 {
        self.vlc.bits_per_frame
    }

    /// Hybrid-I service in a frame with fading power `h2`.
    pub fn hybrid1_rate(&self, h2: f64) -> f64 {
        if h2 > self.kappa {
            self.rf.rate(h2)
        } else {
            self.v()
        }
    }

    /// Service in a frame with fading power `h2`.
    pub fn service(&self, strategy: Strategy, h2: f64) -> f64 {
        match strategy {
            Strategy::Rf => self.rf.rate(h2),
            Strategy::Vlc => self.v(),
            Strategy::Hybrid1 => self.hybrid1_rate(h2),
            Strategy::Hybrid2 => self.split.best_split(h2).1,
        }
    }

    /// One quadrature rule over `|h|^2` resolving `e^{theta R}` and
    /// `e^{theta max(R, V)}`, with `kappa` as a panel edge so no panel mixes
    /// the two branches.
    pub fn rule(&self, theta: f64) -> Result<LogRule> {
        let v = self.v();
        let kappa = self.kappa;
        let rf = self.rf;
        self.fading.rule(&[kappa], 3, |x, out| {
            let r = rf.rate(x);
            out[1] = theta * r;
            out[2] = theta * if x > kappa { r } else { v };
        })
    }

    /// Log-MGFs of the RF, VLC and Hybrid-I services at `theta` (either
    /// sign), all from one rule so their ordering is exact.
    pub fn lmgfs(&self, theta: f64) -> Result<ServiceLmgfs> {
        let rule = self.rule(theta)?;
        Ok(self.lmgfs_with(&rule, theta))
    }

    pub fn lmgfs_with(&self, rule: &LogRule, theta: f64) -> ServiceLmgfs {
        let v = self.v();
        let kappa = self.kappa;
        ServiceLmgfs {
            theta,
            rf: rule.ln_expect(|x| theta * self.rf.rate(x)),
            vlc: theta * v,
            hybrid1: rule.ln_expect(|x| theta * if x > kappa { self.rf.rate(x) } else { v }),
        }
    }

    /// Log-MGF of one strategy's per-frame service.
    pub fn lmgf(&self, strategy: Strategy, theta: f64) -> Result<f64> {
        match strategy {
            Strategy::Vlc => Ok(theta * self.v()),
            Strategy::Hybrid2 => self.split.lmgf(&self.fading, theta),
            s => {
                let l = self.lmgfs(theta)?;
                Ok(l.get(s).expect("rule-based strategy"))
            }
        }
    }

    /// `E[e^{theta R}]` restricted to `|h|^2 > kappa`, divided by
    /// `Pr{|h|^2 > kappa}`, together with that probability.
    pub fn rf_above_kappa(&self, theta: f64) -> Result<(f64, f64)> {
        let rule = self.rule(theta)?;
        let kappa = self.kappa;
        let p = rule.mass(|x| x > kappa);
        if p == 0.0 {
            return Ok((f64::NEG_INFINITY, 0.0));
        }
        let ln_e = rule.ln_expect(|x| {
            if x > kappa {
                theta * self.rf.rate(x)
            } else {
                f64::NEG_INFINITY
            }
        });
        Ok((ln_e - p.ln(), p))
    }

    /// Mean service per frame.
    pub fn mean_service(&self, strategy: Strategy) -> Result<f64> {
        if strategy == Strategy::Vlc {
            return Ok(self.v());
        }
        let kappa = self.kappa;
        let v = self.v();
        let rf = self.rf;
        match strategy {
            Strategy::Hybrid2 => {
                let split = &self.split;
                let rule = self
                    .fading
                    .rule(&[], 2, |x, out| out[1] = split.best_split(x).1.ln())?;
                Ok(rule.expect(|x| split.best_split(x).1))
            }
            _ => {
                let rule = self.fading.rule(&[kappa], 3, |x, out| {
                    let r = rf.rate(x);
                    out[1] = r.ln();
                    out[2] = if x > kappa { r } else { v }.ln();
                })?;
                Ok(match strategy {
                    Strategy::Rf => rule.expect(|x| rf.rate(x)),
                    _ => rule.expect(|x| if x > kappa { rf.rate(x) } else { v }),
                })
            }
        }
    }

    /// Maximum sustainable average arrival rate of `source`'s chain under
    /// `strategy` at QoS exponent `theta`.
    pub fn rho(&self, strategy: Strategy, source: &SourceSpec, theta: f64) -> Result<RhoResult> {
        let l = self.lmgf(strategy, -theta)?;
        rho_from_lmgf(source, theta, l)
    }

    /// Rates for every rule-based strategy plus Hybrid-II at `theta`.
    pub fn rho_all(&self, source: &SourceSpec, theta: f64) -> Result<StrategyRhos> {
        let l = self.lmgfs(-theta)?;
        let h2 = self.split.lmgf(&self.fading, -theta)?;
        Ok(StrategyRhos {
            rf: rho_from_lmgf(source, theta, l.rf)?,
            vlc: rho_from_lmgf(source, theta, l.vlc)?,
            hybrid1: rho_from_lmgf(source, theta, l.hybrid1)?,
            hybrid2: rho_from_lmgf(source, theta, h2)?,
        })
    }

    /// Proposition-style link choice between RF and VLC at `theta`.
    pub fn select_link(&self, source: &SourceSpec, theta: f64) -> Result<Selection> {
        let l = self.lmgfs(-theta)?;
        select_link(source, theta, l.rf, self.v())
    }
}

/// Service log-MGFs at one `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceLmgfs {
    pub theta: f64,
    pub rf: f64,
    pub vlc: f64,
    pub hybrid1: f64,
}

impl ServiceLmgfs {
    pub fn get(&self, s: Strategy) -> Option<f64> {
        match s {
            Strategy::Rf => Some(self.rf),
            Strategy::Vlc => Some(self.vlc),
            Strategy::Hybrid1 => Some(self.hybrid1),
            Strategy::Hybrid2 => None,
        }
    }
}

/// Maximum average arrival rate and its by-products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoResult {
    pub theta: f64,
    pub rho: f64,
    /// `Lambda_service(-theta)`; `D = exp` of this.
    pub ln_d: f64,
    /// ON-state rate `lambda = rho / p_on` that meets the service exactly.
    pub lambda: f64,
    /// `Lambda_a(theta) + Lambda_service(-theta)` at that `lambda`.
    pub identity_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyRhos {
    pub rf: RhoResult,
    pub vlc: RhoResult,
    pub hybrid1: RhoResult,
    pub hybrid2: RhoResult,
}

impl StrategyRhos {
    pub fn get(&self, s: Strategy) -> &RhoResult {
        match s {
            Strategy::Rf => &self.rf,
            Strategy::Vlc => &self.vlc,
            Strategy::Hybrid1 => &self.hybrid1,
            Strategy::Hybrid2 => &self.hybrid2,
        }
    }
}

/// `ln` of the closed-form argument
/// `(1 - (1-b) D) / ((1-a) D - (1-a-b) D^2)` in terms of `L = -ln D >= 0`.
pub fn ln_rate_argument(alpha: f64, beta: f64, big_l: f64) -> f64 {
    if big_l == f64::INFINITY {
        return f64::INFINITY;
    }
    let d = (-big_l).exp();
    let one_minus_d = -(-big_l).exp_m1();
    let num = (-(1.0 - beta) * d).ln_1p();
    let den = log_add_exp((1.0 - alpha).ln() + one_minus_d.ln(), beta.ln() - big_l);
    big_l + num - den
}

/// Maximum average arrival rate given the service log-MGF at `-theta`.
pub fn rho_from_lmgf(source: &SourceSpec, theta: f64, ln_d: f64) -> Result<RhoResult> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    let big_l = -ln_d;
    if big_l.is_nan() || big_l < -1e-12 * ln_d.abs().max(1.0) {
        return Err(Error::Unstable { theta });
    }
    let big_l = big_l.max(0.0);
    let p_on = source.p_on();
    let ln_arg = ln_rate_argument(source.alpha, source.beta, big_l);
    if !(ln_arg >= 0.0) {
        return Err(Error::Unstable { theta });
    }
    let lambda = ln_arg / theta;
    let rho = p_on * lambda;
    let identity_residual = if lambda.is_finite() && source.beta > 0.0 {
        source.with_lambda(lambda).lmgf(theta) + ln_d
    } else {
        0.0
    };
    Ok(RhoResult {
        theta,
        rho,
        ln_d,
        lambda,
        identity_residual,
    })
}

/// Link decision with its certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub choose_vlc: bool,
    pub ln_xi: f64,
    /// Larger root of the characteristic quadratic, as a logarithm.
    pub ln_o2: f64,
    /// Smaller root.
    pub o1: f64,
    pub v: f64,
}

/// Chooses VLC iff `theta V >= ln O2`, where `O2` is the larger root of
/// `z^2 - (1 - b + (1-a) xi) z + (1-a-b) xi = 0` and
/// `xi = exp(theta rho_r / p_on)`.
pub fn select_link(source: &SourceSpec, theta: f64, ln_d_rf: f64, v: f64) -> Result<Selection> {
    let r = rho_from_lmgf(source, theta, ln_d_rf)?;
    let ln_xi = theta * r.rho / source.p_on();
    let ln_o2 = ln_onoff_root(source.alpha, source.beta, ln_xi);
    let o1 = (1.0 - source.alpha - source.beta) * (ln_xi - ln_o2).exp();
    Ok(Selection {
        choose_vlc: theta * v >= ln_o2,
        ln_xi,
        ln_o2,
        o1,
        v,
    })
}

/// Index of the largest rate; ties go to the lowest index.
pub fn multi_link_select(rhos: &[f64]) -> Result<usize> {
    if rhos.len() < 2 {
        return Err(Error::invalid("rhos", "need at least two candidates"));
    }
    let mut best = 0;
    for (i, r) in rhos.iter().enumerate().skip(1) {
        if *r > rhos[best] {
            best = i;
        }
    }
    Ok(best)
}
