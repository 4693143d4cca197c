//! Hybrid-I with a handover penalty.
//!
//! A frame is split into `n` sub-frames. The chain has `2n + 2` states:
//! states `1..=n` walk through a VLC block, `n + 1` is the handover to RF,
//! `n + 2..=2n + 1` walk through an RF block and `2n + 2` is the handover
//! back. A block's service is credited when its last state is entered.

use crate::channel::FadingLaw;
use crate::error::{Error, Result};
use crate::numeric::perron::{spectral_radius, SparseMatrix};
use crate::rates::RfRateModel;
use crate::source::SourceSpec;

use super::{rho_from_lmgf, LinkSet, RhoResult};

const PERRON_TOL: f64 = 1e-10;
const PERRON_MAX_ITER: usize = 2_000_000;

#[derive(Debug, Clone)]
pub struct HandoverChain {
    /// Sub-frames per block.
    pub n: usize,
    /// Probability that a block goes to RF, `Pr{|h|^2 > kappa}`.
    pub delta: f64,
    pub v: f64,
    pub kappa: f64,
    rf: RfRateModel,
    fading: FadingLaw,
}

impl HandoverChain {
    pub fn new(links: &LinkSet, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("handover.n", "must be at least 2"));
        }
        let kappa = links.kappa;
        let delta = if links.fading.is_deterministic() {
            if links.fading.los > kappa {
                1.0
            } else {
                0.0
            }
        } else {
            links.rule(0.0)?.mass(|x| x > kappa)
        };
        Ok(Self {
            n,
            delta,
            v: links.v(),
            kappa,
            rf: links.rf,
            fading: links.fading,
        })
    }

    /// Replaces the switching probability; mainly for tests.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// `ln E[e^{theta R} | |h|^2 > kappa]`.
    pub fn ln_rf_block(&self, theta: f64) -> Result<f64> {
        if self.delta == 0.0 {
            return Ok(0.0);
        }
        let kappa = self.kappa;
        let rf = self.rf;
        if self.fading.is_deterministic() {
            return Ok(theta * rf.rate(self.fading.los));
        }
        let rule = self.fading.rule(&[kappa], 2, |x, out| {
            out[1] = if x > kappa {
                theta * rf.rate(x)
            } else {
                f64::NEG_INFINITY
            }
        })?;
        let p = rule.mass(|x| x > kappa);
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(rule.ln_expect(|x| {
            if x > kappa {
                theta * rf.rate(x)
            } else {
                f64::NEG_INFINITY
            }
        }) - p.ln())
    }

    /// Per-sub-frame log-MGF, `ln sp(Phi(theta) Gamma)`.
    pub fn lmgf(&self, theta: f64) -> Result<f64> {
        let ln_phi_r = self.ln_rf_block(theta)?;
        chain_lmgf(self.n, self.delta, theta * self.v, ln_phi_r)
    }

    /// Maximum sustainable average arrival rate per frame.
    pub fn rho(&self, source: &SourceSpec, theta: f64) -> Result<RhoResult> {
        let l = self.lmgf(-theta)?;
        rho_from_lmgf(source, theta, self.n as f64 * l)
    }

    /// Positive root of `Lambda_a(theta) + n Lambda(-theta) = 0`.
    pub fn theta_star(&self, source: &SourceSpec) -> Result<f64> {
        let n = self.n as f64;
        let f = |t: f64| -> Result<f64> { Ok(source.lmgf(t) + n * self.lmgf(-t)?) };
        let mut lo = None;
        let mut t = 1e-9;
        while t < 1e4 {
            let v = f(t)?;
            if v < 0.0 {
                lo = Some(t);
            } else if lo.is_some() {
                break;
            }
            t *= 2.0;
        }
        let Some(mut a) = lo else {
            return Err(Error::NoPositiveRoot);
        };
        let mut b = 2.0 * a;
        if f(b)? < 0.0 {
            return Err(Error::NoPositiveRoot);
        }
        while b - a > 1e-12 * b {
            let m = 0.5 * (a + b);
            if f(m)? < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Transition structure of the chain with the service factors folded in.
///
/// `ln_phi_v` and `ln_phi_r` are the log-MGF entries at the last VLC and
/// last RF state. Each is spread evenly over the `n` edges of its block so
/// every matrix entry stays near one; this changes no cycle weight, so the
/// spectral radius is unchanged. Returns the matrix and the log of the
/// factor taken out.
pub fn chain_matrix(n: usize, delta: f64, ln_phi_v: f64, ln_phi_r: f64) -> (SparseMatrix, f64) {
    let nf = n as f64;
    let cv = ln_phi_v / nf;
    let cr = ln_phi_r / nf;
    let top = cv.max(cr).max(0.0);
    let ev = (cv - top).exp();
    let er = (cr - top).exp();
    let one = (-top).exp();
    let dim = 2 * n + 2;
    let mut m = SparseMatrix::new(dim);
    // 0-based: VLC block 0..n, handover n, RF block n+1..=2n, handover 2n+1.
    for k in 0..n - 1 {
        m.push(k + 1, k, ev);
    }
    m.push(0, n - 1, (1.0 - delta) * ev);
    m.push(n, n - 1, delta * one);
    m.push(n + 1, n, er);
    for k in n + 1..2 * n {
        m.push(k + 1, k, er);
    }
    m.push(n + 1, 2 * n, delta * er);
    m.push(2 * n + 1, 2 * n, (1.0 - delta) * one);
    m.push(0, 2 * n + 1, ev);
    (m, top)
}

/// `ln sp(Phi Gamma)` for the given block factors.
pub fn chain_lmgf(n: usize, delta: f64, ln_phi_v: f64, ln_phi_r: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("handover.n", "must be at least 2"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::invalid("delta", "must lie in [0, 1]"));
    }
    let (m, top) = chain_matrix(n, delta, ln_phi_v, ln_phi_r);
    let est = spectral_radius(&m, PERRON_TOL, PERRON_MAX_ITER)?;
    Ok(est.radius.ln() + top)
}
