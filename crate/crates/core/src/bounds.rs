//! Non-asymptotic backlog and delay bounds.
//!
//! For a free rate `c`, the backlog splits into a service part
//! `q_s = -sup_theta ln(-eps_s [Lambda_s(-theta) + theta c]) / theta` and an
//! arrival part `q_a = -sup_theta ln(eps_a [theta c - sup_t Lambda_a(theta, t)]) / theta`;
//! the bound is `inf_c (q_s + q_a)` and the delay bound `inf_c (q_s + q_a) / c`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::geomspace;
use crate::numeric::roots::golden_max;
use crate::qos::{LinkSet, Strategy};
use crate::source::SourceSpec;

/// Log-spaced `theta` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaGrid {
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
}

impl ThetaGrid {
    pub const SERVICE: ThetaGrid = ThetaGrid {
        lo: 1e-7,
        hi: 100.0,
        per_decade: 32,
    };
    pub const ARRIVAL: ThetaGrid = ThetaGrid {
        lo: 1e-7,
        hi: 1e4,
        per_decade: 16,
    };

    pub fn points(&self) -> Vec<f64> {
        let decades = (self.hi / self.lo).log10();
        let n = (decades * self.per_decade as f64).round() as usize + 1;
        geomspace(self.lo, self.hi, n.max(2))
    }

    pub fn refined(&self) -> Self {
        Self {
            per_decade: 2 * self.per_decade,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.per_decade >= 1) {
            return Err(Error::invalid(
                "bounds.theta_grid",
                "need 0 < lo < hi and per_decade >= 1",
            ));
        }
        Ok(())
    }
}

/// `Lambda_s(-theta)` tabulated on a grid.
#[derive(Debug, Clone)]
pub struct ServiceCurve {
    pub thetas: Vec<f64>,
    pub ln_d: Vec<f64>,
    pub mean: f64,
    /// Set for a constant-rate service.
    pub constant: Option<f64>,
}

impl ServiceCurve {
    pub fn constant(v: f64, grid: &ThetaGrid) -> Self {
        let thetas = grid.points();
        let ln_d = thetas.iter().map(|t| -t * v).collect();
        Self {
            thetas,
            ln_d,
            mean: v,
            constant: Some(v),
        }
    }

    /// Service curve of one strategy (RF, VLC or Hybrid-I).
    pub fn for_strategy(links: &LinkSet, strategy: Strategy, grid: &ThetaGrid) -> Result<Self> {
        if strategy == Strategy::Vlc {
            return Ok(Self::constant(links.v(), grid));
        }
        if strategy == Strategy::Hybrid2 {
            return Err(Error::invalid(
                "strategy",
                "backlog bounds cover rf, vlc and hybrid1",
            ));
        }
        let thetas = grid.points();
        let ln_d = thetas
            .par_iter()
            .map(|t| links.lmgf(strategy, -t))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            thetas,
            ln_d,
            mean: links.mean_service(strategy)?,
            constant: None,
        })
    }
}

impl ServiceCurve {
    /// `Lambda_s(-theta)` between grid points: a cubic Hermite curve through
    /// `Lambda_s(-theta) / theta` in `ln theta`.
    pub fn eval(&self, theta: f64) -> f64 {
        if let Some(v) = self.constant {
            return -theta * v;
        }
        let n = self.thetas.len();
        let u = theta.ln();
        let us = |i: usize| self.thetas[i].ln();
        let g = |i: usize| self.ln_d[i] / self.thetas[i];
        let k = match self.thetas.partition_point(|t| *t <= theta) {
            0 => return theta * g(0),
            i if i >= n => return theta * g(n - 1),
            i => i - 1,
        };
        let slope = |i: usize| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (g(b) - g(a)) / (us(b) - us(a))
        };
        let h = us(k + 1) - us(k);
        let s = (u - us(k)) / h;
        let (h00, h10) = (
            2.0 * s * s * s - 3.0 * s * s + 1.0,
            s * s * s - 2.0 * s * s + s,
        );
        let (h01, h11) = (-2.0 * s * s * s + 3.0 * s * s, s * s * s - s * s);
        let gi = h00 * g(k) + h10 * h * slope(k) + h01 * g(k + 1) + h11 * h * slope(k + 1);
        theta * gi
    }
}

/// `sup_t Lambda_a(theta, t)` tabulated on a grid.
#[derive(Debug, Clone)]
pub struct ArrivalCurve {
    pub source: SourceSpec,
    pub t_cap: u64,
    pub thetas: Vec<f64>,
    pub sup_t: Vec<f64>,
    pub mean: f64,
    /// True if any entry stopped at the horizon cap.
    pub capped: bool,
}

impl ArrivalCurve {
    pub fn new(source: &SourceSpec, grid: &ThetaGrid, t_cap: u64) -> Self {
        let thetas = grid.points();
        let sups: Vec<_> = thetas
            .par_iter()
            .map(|t| source.sup_lmgf_finite(*t, t_cap))
            .collect();
        Self {
            source: *source,
            t_cap,
            thetas,
            sup_t: sups.iter().map(|s| s.value).collect(),
            mean: source.mean_rate(),
            capped: sups.iter().any(|s| s.capped),
        }
    }
}

/// One backlog term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub q: f64,
    /// `theta` attaining the supremum.
    pub theta: f64,
}

/// Maximizes `ln(arg(theta)) / theta`: a grid scan over `thetas` followed
/// by golden-section refinement in `ln theta` around the best point, using
/// `ln_arg_at` between grid points. Returns `None` when no grid point has a
/// positive argument.
fn sup_log_ratio(
    thetas: &[f64],
    ln_arg: impl Fn(usize) -> f64,
    ln_arg_at: impl Fn(f64) -> f64,
) -> Option<(f64, f64)> {
    let vals: Vec<f64> = (0..thetas.len()).map(|i| ln_arg(i) / thetas[i]).collect();
    let (k, best) = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .fold(None, |acc: Option<(usize, f64)>, (i, &v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((i, v)),
        })?;
    if best >= 0.0 {
        return Some((best, thetas[k]));
    }
    let lo = thetas[k.saturating_sub(1)].ln();
    let hi = thetas[(k + 1).min(thetas.len() - 1)].ln();
    let f = |u: f64| {
        let t = u.exp();
        let v = ln_arg_at(t) / t;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let (u, fu) = golden_max(f, lo, hi, 1e-6);
    if fu > best {
        Some((fu, u.exp()))
    } else {
        Some((best, thetas[k]))
    }
}

/// Service part of the backlog at rate `c`.
pub fn service_term(curve: &ServiceCurve, eps: f64, c: f64) -> Result<Term> {
    let ln_arg = |i: usize| {
        let x = -eps * (curve.ln_d[i] + curve.thetas[i] * c);
        if x > 0.0 {
            x.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let ln_arg_at = |t: f64| {
        let x = -eps * (curve.eval(t) + t * c);
        if x > 0.0 {
            x.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let (sup, theta) =
        sup_log_ratio(&curve.thetas, ln_arg, ln_arg_at).ok_or(Error::EmptyDomain { c })?;
    Ok(Term {
        q: (-sup).max(0.0),
        theta,
    })
}

/// Arrival part of the backlog at rate `c`.
pub fn arrival_term(curve: &ArrivalCurve, eps: f64, c: f64) -> Result<Term> {
    let ln_arg = |i: usize| {
        let y = eps * (curve.thetas[i] * c - curve.sup_t[i]);
        if y > 0.0 {
            y.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let ln_arg_at = |t: f64| {
        let y = eps * (t * c - curve.source.sup_lmgf_finite(t, curve.t_cap).value);
        if y > 0.0 {
            y.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let (sup, theta) =
        sup_log_ratio(&curve.thetas, ln_arg, ln_arg_at).ok_or(Error::EmptyDomain { c })?;
    Ok(Term {
        q: (-sup).max(0.0),
        theta,
    })
}

/// Parameters of a bound computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundQuery {
    /// Total violation probability.
    pub epsilon: f64,
    /// Fraction of `epsilon` given to the service term.
    pub service_share: f64,
    pub c_points: usize,
    /// `c` grid span as multiples of the mean service rate.
    pub c_span: (f64, f64),
    pub t_cap: u64,
}

impl Default for BoundQuery {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            service_share: 0.5,
            c_points: 64,
            c_span: (0.1, 10.0),
            t_cap: 10_000,
        }
    }
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid("bounds.epsilon", "must lie in (0, 1)"));
        }
        if !(self.service_share > 0.0 && self.service_share < 1.0) {
            return Err(Error::invalid("bounds.service_share", "must lie in (0, 1)"));
        }
        if self.c_points < 2 {
            return Err(Error::invalid("bounds.c_points", "need at least 2"));
        }
        if !(self.c_span.0 > 0.0 && self.c_span.1 > self.c_span.0) {
            return Err(Error::invalid("bounds.c_span", "need 0 < lo < hi"));
        }
        if self.t_cap < 1 {
            return Err(Error::invalid("bounds.t_cap", "must be at least 1"));
        }
        Ok(())
    }

    pub fn eps_service(&self) -> f64 {
        self.epsilon * self.service_share
    }

    pub fn eps_arrival(&self) -> f64 {
        self.epsilon * (1.0 - self.service_share)
    }
}

/// Backlog and delay bounds with their minimizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundResult {
    pub q_bits: f64,
    pub d_frames: f64,
    pub c_backlog: f64,
    pub c_delay: f64,
    pub q_service: f64,
    pub q_arrival: f64,
    pub theta_service: Option<f64>,
    pub theta_arrival: f64,
    /// Constant service: `c` pinned to the service rate.
    pub forced_c: bool,
}

#[derive(Clone, Copy)]
struct Candidate {
    c: f64,
    s: Term,
    a: Term,
}

impl Candidate {
    fn q(&self) -> f64 {
        self.s.q + self.a.q
    }
    fn d(&self) -> f64 {
        self.q() / self.c
    }
}

fn candidate(
    service: &ServiceCurve,
    arrivals: &ArrivalCurve,
    query: &BoundQuery,
    c: f64,
) -> Option<Candidate> {
    let s = service_term(service, query.eps_service(), c).ok()?;
    let a = arrival_term(arrivals, query.eps_arrival(), c).ok()?;
    Some(Candidate { c, s, a })
}

fn best_by(cands: &[Candidate], key: impl Fn(&Candidate) -> f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cands.iter().enumerate() {
        if best.is_none_or(|b| key(c) < key(&cands[b])) {
            best = Some(i);
        }
    }
    best
}

/// Minimizes over a geometric `c` grid, then once more on a finer grid
/// between the neighbours of the minimizer.
fn minimize_over_c(
    service: &ServiceCurve,
    arrivals: &ArrivalCurve,
    query: &BoundQuery,
    key: impl Fn(&Candidate) -> f64 + Copy,
) -> Option<Candidate> {
    // Outside (mean arrival, mean service) one of the terms is empty.
    let lo = (query.c_span.0 * service.mean).max(arrivals.mean * (1.0 + 1e-9));
    let hi = (query.c_span.1 * service.mean).min(service.mean * (1.0 - 1e-9));
    if !(hi > lo) {
        return None;
    }
    let cs = geomspace(lo, hi, query.c_points);
    let cands: Vec<(usize, Candidate)> = cs
        .iter()
        .enumerate()
        .filter_map(|(i, c)| candidate(service, arrivals, query, *c).map(|k| (i, k)))
        .collect();
    let plain: Vec<Candidate> = cands.iter().map(|(_, c)| *c).collect();
    let k = best_by(&plain, key)?;
    let idx = cands[k].0;
    let lo = cs[idx.saturating_sub(1)];
    let hi = cs[(idx + 1).min(cs.len() - 1)];
    let mut all = plain.clone();
    all.extend(
        geomspace(lo, hi, 17)
            .iter()
            .filter_map(|c| candidate(service, arrivals, query, *c)),
    );
    best_by(&all, key).map(|i| all[i])
}

/// Backlog and delay bounds for one service curve and one source.
pub fn bounds(
    service: &ServiceCurve,
    arrivals: &ArrivalCurve,
    query: &BoundQuery,
) -> Result<BoundResult> {
    query.validate()?;
    if let Some(v) = service.constant {
        // The service term vanishes at c = V and only there can both terms
        // be evaluated; the whole budget goes to the arrivals.
        let a = arrival_term(arrivals, query.epsilon, v)?;
        return Ok(BoundResult {
            q_bits: a.q,
            d_frames: if v > 0.0 { a.q / v } else { f64::INFINITY },
            c_backlog: v,
            c_delay: v,
            q_service: 0.0,
            q_arrival: a.q,
            theta_service: None,
            theta_arrival: a.theta,
            forced_c: true,
        });
    }
    let qb = minimize_over_c(service, arrivals, query, |c| c.q()).ok_or(Error::AllInfeasible)?;
    let db = minimize_over_c(service, arrivals, query, |c| c.d()).ok_or(Error::AllInfeasible)?;
    Ok(BoundResult {
        q_bits: qb.q(),
        d_frames: db.d(),
        c_backlog: qb.c,
        c_delay: db.c,
        q_service: qb.s.q,
        q_arrival: qb.a.q,
        theta_service: Some(qb.s.theta),
        theta_arrival: qb.a.theta,
        forced_c: false,
    })
}

/// Tries nine splits of `epsilon` and keeps the one with the smallest
/// backlog bound. The even split is one of them.
pub fn bounds_best_split(
    service: &ServiceCurve,
    arrivals: &ArrivalCurve,
    query: &BoundQuery,
) -> Result<(f64, BoundResult)> {
    let mut best: Option<(f64, BoundResult)> = None;
    for k in 1..=9 {
        let share = k as f64 / 10.0;
        let q = BoundQuery {
            service_share: share,
            ..*query
        };
        if let Ok(r) = bounds(service, arrivals, &q) {
            if best.is_none_or(|(_, b)| r.q_bits < b.q_bits) {
                best = Some((share, r));
            }
        }
    }
    best.ok_or(Error::AllInfeasible)
}
