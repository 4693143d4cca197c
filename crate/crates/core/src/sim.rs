//! Frame-level queue simulation.
//!
//! The queue follows `Q' = max(0, Q + A - S)` slot by slot. Without
//! handover a slot is one frame. In handover mode a slot is a sub-frame:
//! each block of `n` sub-frames uses one link, chosen by comparing the
//! instantaneous rates, and every change of link costs one extra sub-frame
//! with no service.
//!
//! Fading and arrivals come from separate generators derived from the seed,
//! so runs with the same seed see the same channel and traffic whatever the
//! strategy.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::FadingSampler;
use crate::error::{Error, Result};
use crate::qos::{LinkSet, Strategy};
use crate::source::{OnOffProcess, SourceSpec};

/// Fewest measured frames accepted for a tail estimate.
pub const TAIL_MIN_FRAMES: u64 = 100_000;
/// Fewest samples beyond the last point of a tail fit or a quantile.
pub const TAIL_MIN_COUNT: usize = 50;

const FADING_STREAM: u64 = 0x66_6164_696e_67;
const ARRIVAL_STREAM: u64 = 0x61_7272_6976_616c;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeds of the fading and arrival generators for a run seed.
pub fn stream_seeds(seed: u64) -> (u64, u64) {
    (
        splitmix(seed ^ FADING_STREAM),
        splitmix(seed ^ ARRIVAL_STREAM),
    )
}

/// How the link serves the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceMode {
    Plain(Strategy),
    /// Hybrid-I with `n` sub-frames per block and a one-sub-frame handover.
    Handover(usize),
}

impl ServiceMode {
    pub fn slots_per_frame(&self) -> usize {
        match *self {
            ServiceMode::Plain(_) => 1,
            ServiceMode::Handover(n) => n,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ServiceMode::Plain(s) => s.name().to_string(),
            ServiceMode::Handover(n) => format!("handover{n}"),
        }
    }
}

impl From<Strategy> for ServiceMode {
    fn from(s: Strategy) -> Self {
        ServiceMode::Plain(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Measured frames, after warmup.
    pub frames: u64,
    pub warmup: u64,
    pub seeds: Vec<u64>,
    /// Backlog levels whose exceedance is counted, in bits.
    pub thresholds: Vec<f64>,
    /// Keep every measured backlog sample for tail fitting.
    #[serde(skip)]
    pub keep_backlog: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            frames: 1_000_000,
            warmup: 10_000,
            seeds: vec![1],
            thresholds: Vec::new(),
            keep_backlog: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::invalid("simulation.frames", "must be positive"));
        }
        if self.warmup >= self.frames {
            return Err(Error::invalid(
                "simulation.warmup",
                "must be smaller than frames",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("simulation.seeds", "must not be empty"));
        }
        if self.thresholds.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(Error::invalid(
                "simulation.thresholds",
                "must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// Link in use during a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotLink {
    Rf,
    Vlc,
    Both,
    Handover,
}

impl SlotLink {
    pub fn name(&self) -> &'static str {
        match self {
            SlotLink::Rf => "rf",
            SlotLink::Vlc => "vlc",
            SlotLink::Both => "rf+vlc",
            SlotLink::Handover => "handover",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    link: SlotLink,
    arrivals: f64,
    service: f64,
}

/// Generator of per-slot arrivals and services.
struct SlotStream<'a> {
    links: &'a LinkSet,
    mode: ServiceMode,
    fading: FadingSampler,
    source: OnOffProcess,
    n: usize,
    slot: u64,
    arrivals_per_slot: f64,
    // Handover bookkeeping: current link, sub-frames left in the block,
    // per-sub-frame service, and whether a handover slot is due first.
    link: Option<SlotLink>,
    left: usize,
    block_service: f64,
    pending_handover: bool,
    blocks: u64,
    rf_blocks: u64,
    switches: u64,
}

impl<'a> SlotStream<'a> {
    fn new(links: &'a LinkSet, source: &SourceSpec, mode: ServiceMode, seed: u64) -> Result<Self> {
        if let ServiceMode::Handover(n) = mode {
            if n < 2 {
                return Err(Error::invalid("handover.n", "must be at least 2"));
            }
        }
        let (fs, as_) = stream_seeds(seed);
        Ok(Self {
            links,
            mode,
            fading: FadingSampler::new(links.fading, fs),
            source: source.process(as_),
            n: mode.slots_per_frame(),
            slot: 0,
            arrivals_per_slot: 0.0,
            link: None,
            left: 0,
            block_service: 0.0,
            pending_handover: false,
            blocks: 0,
            rf_blocks: 0,
            switches: 0,
        })
    }

    fn next(&mut self) -> Slot {
        if self.slot % self.n as u64 == 0 {
            let (_, a) = self.source.next_frame();
            self.arrivals_per_slot = a / self.n as f64;
        }
        self.slot += 1;
        let arrivals = self.arrivals_per_slot;
        match self.mode {
            ServiceMode::Plain(strategy) => {
                let h2 = self.fading.next_power();
                let service = self.links.service(strategy, h2);
                let link = match strategy {
                    Strategy::Rf => SlotLink::Rf,
                    Strategy::Vlc => SlotLink::Vlc,
                    Strategy::Hybrid1 if h2 > self.links.kappa => SlotLink::Rf,
                    Strategy::Hybrid1 => SlotLink::Vlc,
                    Strategy::Hybrid2 => SlotLink::Both,
                };
                Slot {
                    link,
                    arrivals,
                    service,
                }
            }
            ServiceMode::Handover(n) => {
                if self.left == 0 && !self.pending_handover {
                    let h2 = self.fading.next_power();
                    let (link, rate) = if h2 > self.links.kappa {
                        (SlotLink::Rf, self.links.rf.rate(h2))
                    } else {
                        (SlotLink::Vlc, self.links.v())
                    };
                    self.blocks += 1;
                    if link == SlotLink::Rf {
                        self.rf_blocks += 1;
                    }
                    if self.link.is_some_and(|l| l != link) {
                        self.switches += 1;
                        self.pending_handover = true;
                    }
                    self.link = Some(link);
                    self.left = n;
                    self.block_service = rate / n as f64;
                }
                if self.pending_handover {
                    self.pending_handover = false;
                    return Slot {
                        link: SlotLink::Handover,
                        arrivals,
                        service: 0.0,
                    };
                }
                self.left -= 1;
                Slot {
                    link: self.link.unwrap_or(SlotLink::Vlc),
                    arrivals,
                    service: self.block_service,
                }
            }
        }
    }
}

/// One Lindley step.
#[inline]
pub fn lindley_step(q: f64, a: f64, s: f64) -> f64 {
    (q + a - s).max(0.0)
}

/// Backlog after each slot, starting from an empty queue.
pub fn lindley(arrivals: &[f64], services: &[f64]) -> Vec<f64> {
    let mut q = 0.0;
    arrivals
        .iter()
        .zip(services)
        .map(|(&a, &s)| {
            q = lindley_step(q, a, s);
            q
        })
        .collect()
}

/// Full per-slot record of a run, warmup included.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrace {
    pub slots_per_frame: usize,
    pub link: Vec<SlotLink>,
    pub arrivals: Vec<f64>,
    pub services: Vec<f64>,
    /// Backlog at the end of each slot.
    pub backlog: Vec<f64>,
    pub switches: u64,
}

impl QueueTrace {
    /// CSV with columns `frame,state,A,S,Q`; `frame` counts slots.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# per-slot queue trace; A, S and Q in bits, Q after the slot\n");
        out.push_str(&format!("# slots_per_frame={}\n", self.slots_per_frame));
        out.push_str("frame,state,A,S,Q\n");
        for i in 0..self.arrivals.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                self.link[i].name(),
                self.arrivals[i],
                self.services[i],
                self.backlog[i]
            ));
        }
        out
    }
}

/// Records `frames` frames of slots.
pub fn trace(
    links: &LinkSet,
    source: &SourceSpec,
    mode: ServiceMode,
    frames: u64,
    seed: u64,
) -> Result<QueueTrace> {
    let mut st = SlotStream::new(links, source, mode, seed)?;
    let n = mode.slots_per_frame() as u64;
    let mut t = QueueTrace {
        slots_per_frame: n as usize,
        link: Vec::new(),
        arrivals: Vec::new(),
        services: Vec::new(),
        backlog: Vec::new(),
        switches: 0,
    };
    let mut q = 0.0;
    while st.slot < frames * n {
        let s = st.next();
        q = lindley_step(q, s.arrivals, s.service);
        t.link.push(s.link);
        t.arrivals.push(s.arrivals);
        t.services.push(s.service);
        t.backlog.push(q);
    }
    t.switches = st.switches;
    Ok(t)
}

/// Statistics of one measured run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SimSummary {
    pub seeds: Vec<u64>,
    pub mode: String,
    pub slots_per_frame: usize,
    /// Measured slots, after warmup.
    pub slots: u64,
    pub arrived_bits: f64,
    pub served_bits: f64,
    pub offered_service_bits: f64,
    pub mean_backlog: f64,
    pub max_backlog: f64,
    pub thresholds: Vec<f64>,
    /// Slots ending with `Q >= q`, per threshold.
    pub at_or_above: Vec<u64>,
    /// Slots ending with `Q > q`, per threshold.
    pub above: Vec<u64>,
    /// Delay histogram in slots.
    pub delay_hist: Vec<u64>,
    pub blocks: u64,
    pub rf_blocks: u64,
    pub switches: u64,
    #[serde(skip)]
    pub backlog: Vec<f32>,
}

impl SimSummary {
    pub fn frames(&self) -> f64 {
        self.slots as f64 / self.slots_per_frame as f64
    }

    /// Served bits per frame.
    pub fn throughput(&self) -> f64 {
        self.served_bits / self.frames()
    }

    /// Service on offer per frame, used or not.
    pub fn offered_service(&self) -> f64 {
        self.offered_service_bits / self.frames()
    }

    pub fn delay_samples(&self) -> u64 {
        self.delay_hist.iter().sum()
    }

    /// `Pr{Q >= q_i}`.
    pub fn exceedance(&self, i: usize) -> f64 {
        self.at_or_above[i] as f64 / self.slots as f64
    }

    /// `Pr{Q > q_i}`.
    pub fn strict_exceedance(&self, i: usize) -> f64 {
        self.above[i] as f64 / self.slots as f64
    }

    /// Fraction of blocks served by RF in handover mode.
    pub fn rf_fraction(&self) -> f64 {
        self.rf_blocks as f64 / self.blocks as f64
    }

    /// Fraction of delay samples above `d` frames.
    pub fn delay_exceedance(&self, d: f64) -> f64 {
        let n = self.slots_per_frame as f64;
        let above: u64 = self
            .delay_hist
            .iter()
            .enumerate()
            .filter(|(w, _)| *w as f64 / n > d)
            .map(|(_, c)| c)
            .sum();
        above as f64 / self.delay_samples() as f64
    }

    /// Empirical `(1 - eps)` quantile of the delay in frames.
    pub fn delay_quantile(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1)"));
        }
        let total = self.delay_samples();
        let tail = (total as f64 * eps).floor() as usize;
        if tail < TAIL_MIN_COUNT {
            return Err(Error::InsufficientTail {
                count: tail,
                needed: TAIL_MIN_COUNT,
            });
        }
        let need = (total as f64 * (1.0 - eps)).ceil() as u64;
        let mut acc = 0;
        for (w, &c) in self.delay_hist.iter().enumerate() {
            acc += c;
            if acc >= need {
                return Ok(w as f64 / self.slots_per_frame as f64);
            }
        }
        Ok((self.delay_hist.len().saturating_sub(1)) as f64 / self.slots_per_frame as f64)
    }

    /// Pools runs of the same mode and thresholds.
    pub fn merge(parts: &[SimSummary]) -> Result<SimSummary> {
        let Some(first) = parts.first() else {
            return Err(Error::invalid("simulation.seeds", "nothing to merge"));
        };
        let mut m = SimSummary {
            mode: first.mode.clone(),
            slots_per_frame: first.slots_per_frame,
            thresholds: first.thresholds.clone(),
            at_or_above: vec![0; first.thresholds.len()],
            above: vec![0; first.thresholds.len()],
            ..Default::default()
        };
        let mut backlog_sum = 0.0;
        let mut sorted: Vec<&SimSummary> = parts.iter().collect();
        sorted.sort_by_key(|p| p.seeds.clone());
        for p in sorted {
            if p.mode != m.mode || p.thresholds != m.thresholds {
                return Err(Error::invalid(
                    "simulation",
                    "cannot merge runs with different settings",
                ));
            }
            m.seeds.extend(&p.seeds);
            m.slots += p.slots;
            m.arrived_bits += p.arrived_bits;
            m.served_bits += p.served_bits;
            m.offered_service_bits += p.offered_service_bits;
            backlog_sum += p.mean_backlog * p.slots as f64;
            m.max_backlog = m.max_backlog.max(p.max_backlog);
            for i in 0..m.thresholds.len() {
                m.at_or_above[i] += p.at_or_above[i];
                m.above[i] += p.above[i];
            }
            if p.delay_hist.len() > m.delay_hist.len() {
                m.delay_hist.resize(p.delay_hist.len(), 0);
            }
            for (w, c) in p.delay_hist.iter().enumerate() {
                m.delay_hist[w] += c;
            }
            m.blocks += p.blocks;
            m.rf_blocks += p.rf_blocks;
            m.switches += p.switches;
            m.backlog.extend_from_slice(&p.backlog);
        }
        m.mean_backlog = backlog_sum / m.slots as f64;
        Ok(m)
    }
}

/// Tracks when the last bit of each slot's arrivals leaves.
#[derive(Default)]
struct DelayMeter {
    departed: f64,
    pending: VecDeque<(u64, f64)>,
    hist: Vec<u64>,
}

impl DelayMeter {
    fn record(&mut self, w: u64) {
        let w = w as usize;
        if w >= self.hist.len() {
            self.hist.resize(w + 1, 0);
        }
        self.hist[w] += 1;
    }

    /// Slot `l` took `a` bits in, sent `dep` bits out and left `q` behind.
    fn step(&mut self, l: u64, a: f64, dep: f64, q: f64, measure: bool) {
        self.departed += dep;
        if q == 0.0 {
            while let Some((k, _)) = self.pending.pop_front() {
                self.record(l - k);
            }
            self.departed = 0.0;
        } else {
            while let Some(&(k, target)) = self.pending.front() {
                if self.departed >= target - 1e-9 * target.abs().max(1.0) {
                    self.pending.pop_front();
                    self.record(l - k);
                } else {
                    break;
                }
            }
        }
        if a > 0.0 && measure {
            if q == 0.0 {
                self.record(0);
            } else {
                self.pending.push_back((l, self.departed + q));
            }
        }
    }
}

/// Simulates one seed and gathers statistics past the warmup.
pub fn simulate(
    links: &LinkSet,
    source: &SourceSpec,
    mode: ServiceMode,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimSummary> {
    cfg.validate()?;
    let n = mode.slots_per_frame() as u64;
    let warm = cfg.warmup * n;
    let total = (cfg.warmup + cfg.frames) * n;
    let mut st = SlotStream::new(links, source, mode, seed)?;
    let mut sum = SimSummary {
        seeds: vec![seed],
        mode: mode.label(),
        slots_per_frame: n as usize,
        thresholds: cfg.thresholds.clone(),
        at_or_above: vec![0; cfg.thresholds.len()],
        above: vec![0; cfg.thresholds.len()],
        ..Default::default()
    };
    if cfg.keep_backlog {
        sum.backlog.reserve((total - warm) as usize);
    }
    let mut meter = DelayMeter::default();
    let mut q = 0.0;
    let mut backlog_sum = 0.0;
    let mut counted_blocks = (0, 0, 0);
    for l in 0..total {
        let s = st.next();
        let next = lindley_step(q, s.arrivals, s.service);
        let dep = q + s.arrivals - next;
        let measure = l >= warm;
        meter.step(l, s.arrivals, dep, next, measure);
        q = next;
        if l + 1 == warm {
            counted_blocks = (st.blocks, st.rf_blocks, st.switches);
        }
        if !measure {
            continue;
        }
        sum.slots += 1;
        sum.arrived_bits += s.arrivals;
        sum.served_bits += dep;
        sum.offered_service_bits += s.service;
        backlog_sum += q;
        sum.max_backlog = sum.max_backlog.max(q);
        for (i, &t) in cfg.thresholds.iter().enumerate() {
            if q >= t {
                sum.at_or_above[i] += 1;
            }
            if q > t {
                sum.above[i] += 1;
            }
        }
        if cfg.keep_backlog {
            sum.backlog.push(q as f32);
        }
    }
    sum.mean_backlog = backlog_sum / sum.slots as f64;
    sum.delay_hist = meter.hist;
    sum.blocks = st.blocks - counted_blocks.0;
    sum.rf_blocks = st.rf_blocks - counted_blocks.1;
    sum.switches = st.switches - counted_blocks.2;
    if source.mean_rate() >= sum.offered_service() {
        log::warn!(
            "{}: mean arrivals {:.1} reach the mean service {:.1}; the queue is not stable",
            sum.mode,
            source.mean_rate(),
            sum.offered_service()
        );
    }
    Ok(sum)
}

/// Runs every seed of `cfg` in parallel, in seed order.
pub fn simulate_seeds(
    links: &LinkSet,
    source: &SourceSpec,
    mode: ServiceMode,
    cfg: &SimConfig,
) -> Result<Vec<SimSummary>> {
    cfg.validate()?;
    cfg.seeds
        .par_iter()
        .map(|&s| simulate(links, source, mode, cfg, s))
        .collect()
}

/// Exponential tail fit of the backlog distribution.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    /// Decay rate, minus the slope of `ln Pr{Q >= q}` against `q`.
    pub theta: f64,
    pub std_error: f64,
    pub q_grid: Vec<f64>,
    pub ln_exceedance: Vec<f64>,
    /// Samples at or above the last grid point.
    pub last_count: usize,
}

/// Default fitting grid: 20 evenly spaced levels between the point where
/// the exceedance drops to a tenth of `Pr{Q > 0}` and the point where only
/// a hundred samples remain.
pub fn auto_q_grid(sorted: &[f32]) -> Result<Vec<f64>> {
    let n = sorted.len();
    let positive = n - sorted.partition_point(|&q| q <= 0.0);
    let lo_count = positive / 10;
    let hi_count = 2 * TAIL_MIN_COUNT;
    if lo_count <= hi_count {
        return Err(Error::InsufficientTail {
            count: lo_count,
            needed: hi_count + 1,
        });
    }
    let q_lo = sorted[n - lo_count] as f64;
    let q_hi = sorted[n - hi_count] as f64;
    if !(q_hi > q_lo) {
        return Err(Error::InsufficientTail {
            count: lo_count,
            needed: hi_count + 1,
        });
    }
    Ok((0..20)
        .map(|i| q_lo + (q_hi - q_lo) * i as f64 / 19.0)
        .collect())
}

/// Least-squares decay rate of `Pr{Q >= q}` over `q_grid`, or over
/// [`auto_q_grid`] when none is given.
pub fn tail_decay(backlog: &[f32], q_grid: Option<&[f64]>) -> Result<TailFit> {
    if (backlog.len() as u64) < TAIL_MIN_FRAMES {
        return Err(Error::invalid(
            "simulation.frames",
            format!("tail fits need at least {TAIL_MIN_FRAMES} samples"),
        ));
    }
    let mut sorted = backlog.to_vec();
    sorted.sort_by(f32::total_cmp);
    let grid = match q_grid {
        Some(g) => g.to_vec(),
        None => auto_q_grid(&sorted)?,
    };
    if grid.len() < 2 {
        return Err(Error::invalid("q_grid", "needs at least two points"));
    }
    let n = sorted.len() as f64;
    let mut ln_p = Vec::with_capacity(grid.len());
    let mut last = 0;
    for &q in &grid {
        let count = sorted.len() - sorted.partition_point(|&x| (x as f64) < q);
        last = count;
        if count < TAIL_MIN_COUNT {
            return Err(Error::InsufficientTail {
                count,
                needed: TAIL_MIN_COUNT,
            });
        }
        ln_p.push((count as f64 / n).ln());
    }
    let k = grid.len() as f64;
    let mx = grid.iter().sum::<f64>() / k;
    let my = ln_p.iter().sum::<f64>() / k;
    let sxx: f64 = grid.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = grid
        .iter()
        .zip(&ln_p)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let rss: f64 = grid
        .iter()
        .zip(&ln_p)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let se = if grid.len() > 2 {
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(TailFit {
        theta: -slope,
        std_error: se,
        q_grid: grid,
        ln_exceedance: ln_p,
        last_count: last,
    })
}
