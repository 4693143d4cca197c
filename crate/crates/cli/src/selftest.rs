//! Built-in consistency checks run by `hybridqos selftest`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use hybridqos::bounds::{bounds, ArrivalCurve, BoundQuery, ServiceCurve, ThetaGrid};
use hybridqos::channel::{dbm_to_watts, watts_to_dbm, RfChannelSpec, VlcChannelSpec};
use hybridqos::qos::handover::HandoverChain;
use hybridqos::qos::{LinkSet, Strategy};
use hybridqos::rates::{
    ab_ratio, ab_residuals, mu_star_residual, solve_ab_with, solve_mu_star, vlc_rate, FrameSpec,
    PowerBudget,
};
use hybridqos::sim::{self, lindley, SimConfig, SimSummary};
use hybridqos::source::SourceSpec;

use crate::experiment::{backlog_exceedance, delay_violation};

/// Deliberate defects for checking that the suites catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flips the sign of the exponent in the average-power equation.
    AbSign,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ab-sign" => Ok(Fault::AbSign),
            _ => Err(format!("unknown fault `{s}` (known: ab-sign)")),
        }
    }
}

fn flipped_ratio(x: f64) -> f64 {
    ab_ratio(-x)
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub quick: bool,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

type Suite = fn(&Settings) -> (bool, String);

const SUITES: &[(&str, Suite)] = &[
    ("power equations residual", power_residuals),
    ("optical equation residual", optical_residual),
    ("dBm conversion", dbm_conversion),
    ("rate identity", rate_identity),
    ("link selection", link_selection),
    ("hybrid dominance", dominance),
    ("effective capacity", effective_capacity),
    ("handover penalty", handover),
    ("finite horizon", finite_horizon),
    ("simulation replay", replay),
    ("bound validity", bound_validity),
];

pub fn run(settings: &Settings) -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|(name, f)| {
            let t0 = Instant::now();
            let (pass, detail) = std::panic::catch_unwind(|| f(settings))
                .unwrap_or_else(|_| (false, "panicked".to_string()));
            SuiteResult {
                name,
                pass,
                detail,
                seconds: t0.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn sample_count(s: &Settings, full: usize) -> usize {
    if s.quick {
        full / 5
    } else {
        full
    }
}

fn default_links(budget: &PowerBudget) -> LinkSet {
    LinkSet::new(
        &RfChannelSpec::default(),
        &VlcChannelSpec::default(),
        budget,
        &FrameSpec::default(),
    )
    .expect("default link set")
}

fn power_residuals(s: &Settings) -> (bool, String) {
    let ratio = match s.fault {
        Some(Fault::AbSign) => flipped_ratio,
        None => ab_ratio,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let n = sample_count(s, 500);
    for _ in 0..n {
        let b = PowerBudget {
            avg_power_dbm: rng.random_range(10.0..45.0),
            avg_to_peak_ratio: rng.random_range(0.005..1.0),
        };
        match solve_ab_with(b.avg_w(), b.peak_w(), ratio) {
            Ok(c) => {
                let (r1, r2) = ab_residuals(&c, b.avg_w());
                worst = worst.max(r1.abs()).max(r2.abs());
            }
            Err(e) => return (false, format!("solve failed at {b:?}: {e}")),
        }
    }
    (
        worst < 1e-9,
        format!("{n} budgets, max residual {worst:.2e}"),
    )
}

fn optical_residual(s: &Settings) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    let n = sample_count(s, 500);
    for _ in 0..n {
        let nu: f64 = rng.random_range(1e-4..0.5);
        match solve_mu_star(nu) {
            Ok(mu) => worst = worst.max(mu_star_residual(mu, nu).abs()),
            Err(e) => return (false, format!("solve failed at ratio {nu}: {e}")),
        }
    }
    let vlc = VlcChannelSpec::default();
    let frame = FrameSpec::default();
    let v_at = |nu: f64| {
        let b = PowerBudget {
            avg_to_peak_ratio: nu,
            ..Default::default()
        };
        vlc_rate(
            vlc.gain().unwrap(),
            vlc.responsivity_a_per_w,
            vlc.noise_power(),
            frame.symbols(vlc.bandwidth_hz),
            b.avg_w(),
            b.peak_w(),
        )
        .map(|r| r.bits_per_frame)
    };
    let (lo, at) = match (v_at(0.5 - 1e-6), v_at(0.5)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return (false, format!("rate failed: {e}")),
    };
    let jump = (lo - at).abs() / at;
    (
        worst < 1e-9 && jump < 1e-4,
        format!("{n} ratios, max residual {worst:.2e}, relative jump at 1/2 {jump:.1e}"),
    )
}

fn dbm_conversion(_: &Settings) -> (bool, String) {
    let w = dbm_to_watts(30.0);
    let back = watts_to_dbm(1.0);
    let mw = dbm_to_watts(0.0);
    let ok = (w - 1.0).abs() < 1e-15 && (back - 30.0).abs() < 1e-12 && (mw - 1e-3).abs() < 1e-18;
    (ok, format!("30 dBm = {w} W, 1 W = {back} dBm"))
}

fn random_case(rng: &mut ChaCha8Rng) -> (LinkSet, SourceSpec, f64) {
    let rf = RfChannelSpec {
        distance_m: rng.random_range(2.0..30.0),
        ..Default::default()
    };
    let vlc = VlcChannelSpec {
        rx_position_m: [rng.random_range(0.0..3.0), rng.random_range(0.0..1.0), -2.5],
        ..Default::default()
    };
    let budget = PowerBudget {
        avg_power_dbm: rng.random_range(20.0..40.0),
        avg_to_peak_ratio: rng.random_range(0.1..1.0),
    };
    let src = SourceSpec::new(
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        1.0,
    )
    .unwrap();
    let theta = 10f64.powf(rng.random_range(-4.0..0.0));
    let links = LinkSet::new(&rf, &vlc, &budget, &FrameSpec::default()).unwrap();
    (links, src, theta)
}

/// `(choose_vlc, rf, vlc, hybrid1, worst identity residual)` per case.
fn random_cases(s: &Settings, seed: u64) -> Result<Vec<(bool, f64, f64, f64, f64)>, String> {
    (0..sample_count(s, 200) as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + i);
            let (l, src, theta) = random_case(&mut rng);
            let err = |e: hybridqos::Error| format!("case {i}: {e}");
            let sel = l.select_link(&src, theta).map_err(err)?;
            let r = l.rho(Strategy::Rf, &src, theta).map_err(err)?;
            let v = l.rho(Strategy::Vlc, &src, theta).map_err(err)?;
            let h = l.rho(Strategy::Hybrid1, &src, theta).map_err(err)?;
            let resid = [r, v, h]
                .iter()
                .map(|x| x.identity_residual.abs() / x.ln_d.abs().max(1.0))
                .fold(0.0, f64::max);
            Ok((sel.choose_vlc, r.rho, v.rho, h.rho, resid))
        })
        .collect()
}

fn rate_identity(s: &Settings) -> (bool, String) {
    match random_cases(s, 5000) {
        Ok(cases) => {
            let worst = cases.iter().map(|c| c.4).fold(0.0, f64::max);
            (
                worst < 1e-8,
                format!("{} cases, max relative residual {worst:.2e}", cases.len()),
            )
        }
        Err(e) => (false, e),
    }
}

fn link_selection(s: &Settings) -> (bool, String) {
    match random_cases(s, 5000) {
        Ok(cases) => {
            let bad = cases.iter().filter(|c| c.0 != (c.2 >= c.1)).count();
            (
                bad == 0,
                format!("{bad} of {} choices disagree with the rates", cases.len()),
            )
        }
        Err(e) => (false, e),
    }
}

fn dominance(s: &Settings) -> (bool, String) {
    let cases = match random_cases(s, 5000) {
        Ok(c) => c,
        Err(e) => return (false, e),
    };
    let worst = cases
        .iter()
        .map(|c| c.3 - c.1.max(c.2))
        .fold(f64::INFINITY, f64::min);
    let l = default_links(&PowerBudget::default());
    let src = SourceSpec::new(0.3, 0.7, l.v()).unwrap();
    let h2 = l.rho(Strategy::Hybrid2, &src, 0.01).map(|r| r.rho);
    let h1 = l.rho(Strategy::Hybrid1, &src, 0.01).map(|r| r.rho);
    let (h1, h2) = match (h1, h2) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return (false, e.to_string()),
    };
    (
        worst >= -1e-9 && h2 >= h1 * (1.0 - 1e-9),
        format!("min hybrid1 margin {worst:.2e}; hybrid2 {h2:.1} vs hybrid1 {h1:.1}"),
    )
}

fn effective_capacity(_: &Settings) -> (bool, String) {
    let l = default_links(&PowerBudget::default());
    let always_on = SourceSpec::new(0.0, 1.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for theta in [1e-3, 0.01, 0.1] {
        let (Ok(v), Ok(ln_d)) = (
            l.rho(Strategy::Vlc, &always_on, theta),
            l.lmgf(Strategy::Rf, -theta),
        ) else {
            return (false, format!("rate failed at theta {theta}"));
        };
        let Ok(r) = l.rho(Strategy::Rf, &always_on, theta) else {
            return (false, format!("rate failed at theta {theta}"));
        };
        worst = worst.max((v.rho - l.v()).abs() / l.v());
        let want = -ln_d / theta;
        worst = worst.max((r.rho - want).abs() / want);
    }
    (worst < 1e-10, format!("max relative error {worst:.2e}"))
}

fn handover(_: &Settings) -> (bool, String) {
    let budget = PowerBudget {
        avg_power_dbm: 24.0,
        avg_to_peak_ratio: 0.7,
    };
    let vlc = VlcChannelSpec {
        rx_position_m: [0.8, 0.0, -2.5],
        ..Default::default()
    };
    let l = LinkSet::new(
        &RfChannelSpec::default(),
        &vlc,
        &budget,
        &FrameSpec::default(),
    )
    .unwrap();
    let src = SourceSpec::new(0.3, 0.7, 1.0).unwrap();
    let theta = 0.01;
    let Ok(h1) = l.rho(Strategy::Hybrid1, &src, theta) else {
        return (false, "hybrid1 rate failed".into());
    };
    let mut rhos = Vec::new();
    for n in [2usize, 8, 64] {
        match HandoverChain::new(&l, n).and_then(|c| c.rho(&src, theta)) {
            Ok(r) => rhos.push(r.rho),
            Err(e) => return (false, format!("n = {n}: {e}")),
        }
    }
    let up = rhos.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let below = rhos.iter().all(|&r| r <= h1.rho * (1.0 + 1e-9));
    (
        up && below,
        format!(
            "rho at n = 2, 8, 64: {:.1}, {:.1}, {:.1}; hybrid1 {:.1}",
            rhos[0], rhos[1], rhos[2], h1.rho
        ),
    )
}

fn finite_horizon(_: &Settings) -> (bool, String) {
    let s = SourceSpec::new(0.3, 0.7, 1.0).unwrap();
    let worst = [0.01, 0.1, 1.0, 5.0]
        .iter()
        .map(|&t| (s.lmgf_finite(t, 200) - s.lmgf(t)).abs())
        .fold(0.0, f64::max);
    (worst < 1e-3, format!("max gap at t = 200: {worst:.2e}"))
}

fn replay(s: &Settings) -> (bool, String) {
    let rf = RfChannelSpec {
        distance_m: 10.0,
        ..Default::default()
    };
    let l = LinkSet::new(
        &rf,
        &VlcChannelSpec::default(),
        &PowerBudget::default(),
        &FrameSpec::default(),
    )
    .unwrap();
    let src = SourceSpec::new(0.3, 0.7, 1.2 * l.v()).unwrap();
    let frames = sample_count(s, 50_000) as u64;
    let mut worst = 0.0f64;
    for strat in [Strategy::Rf, Strategy::Vlc, Strategy::Hybrid1] {
        let a = match sim::trace(&l, &src, strat.into(), frames, 5) {
            Ok(t) => t,
            Err(e) => return (false, e.to_string()),
        };
        let b = sim::trace(&l, &src, strat.into(), frames, 5).unwrap();
        if a.backlog != b.backlog {
            return (false, format!("{strat} differs between identical runs"));
        }
        let q = lindley(&a.arrivals, &a.services);
        worst = q
            .iter()
            .zip(&a.backlog)
            .map(|(x, y)| (x - y).abs())
            .fold(worst, f64::max);
    }
    (
        worst == 0.0,
        format!("{frames} frames per strategy, max replay difference {worst:e}"),
    )
}

fn bound_validity(s: &Settings) -> (bool, String) {
    let rf = RfChannelSpec {
        distance_m: 10.0,
        ..Default::default()
    };
    let budget = PowerBudget {
        avg_power_dbm: 30.0,
        avg_to_peak_ratio: 0.7,
    };
    let l = LinkSet::new(
        &rf,
        &VlcChannelSpec::default(),
        &budget,
        &FrameSpec::default(),
    )
    .unwrap();
    let query = BoundQuery::default();
    let frames = if s.quick { 100_000 } else { 1_000_000 };
    let mut notes = Vec::new();
    let mut pass = true;
    for strat in [Strategy::Rf, Strategy::Hybrid1] {
        let run = || -> hybridqos::Result<(f64, f64, f64, f64)> {
            let curve = ServiceCurve::for_strategy(&l, strat, &ThetaGrid::SERVICE)?;
            let src = SourceSpec::new(0.3, 0.7, 0.8 * curve.mean / 0.7)?;
            let arr = ArrivalCurve::new(&src, &ThetaGrid::ARRIVAL, query.t_cap);
            let b = bounds(&curve, &arr, &query)?;
            let cfg = SimConfig {
                frames,
                warmup: frames / 10,
                seeds: vec![1, 2],
                thresholds: vec![b.q_bits],
                keep_backlog: false,
            };
            let r = SimSummary::merge(&sim::simulate_seeds(&l, &src, strat.into(), &cfg)?)?;
            Ok((
                b.q_bits,
                backlog_exceedance(&r, b.q_bits),
                b.d_frames,
                delay_violation(&r, b.d_frames),
            ))
        };
        match run() {
            Ok((q, pq, d, pd)) => {
                let ok = pq <= query.epsilon && pd <= query.epsilon;
                pass &= ok;
                notes.push(format!(
                    "{strat}: Pr{{Q>={q:.0}}}={pq:.1e} d={d:.2} Pr{{W>ceil(d)}}={pd:.1e}"
                ));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("{strat}: {e}"));
            }
        }
    }
    (pass, notes.join("; "))
}
