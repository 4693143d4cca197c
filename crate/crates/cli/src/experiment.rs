//! Sweeps, CSV output and the bound-versus-simulation report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use hybridqos::bounds::{bounds, ArrivalCurve, BoundResult, ServiceCurve, ThetaGrid};
use hybridqos::qos::handover::HandoverChain;
use hybridqos::qos::{LinkSet, Strategy};
use hybridqos::sim::{self, SimConfig, SimSummary};
use hybridqos::source::SourceSpec;
use hybridqos::Error;

use crate::scenario::{Figure, Metric, Point, Scenario, SeriesParam};
use crate::{cell, CliError};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Largest sweep kept by `--quick`.
const QUICK_SWEEP: usize = 5;
const QUICK_SERIES: usize = 3;
const QUICK_FRAMES: u64 = 100_000;
const QUICK_SEEDS: usize = 2;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quick: bool,
}

/// Applies command-line overrides. The result is what the manifest records,
/// so running it again without flags reproduces the same files.
pub fn resolve(mut s: Scenario, opts: &RunOptions) -> Scenario {
    if let Some(seed) = opts.seed {
        let k = s.simulation.seeds.len() as u64;
        s.seed = seed;
        s.simulation.seeds = (seed..seed + k).collect();
    }
    if opts.quick {
        for f in &mut s.figures {
            f.sweep.values = thin(&f.sweep.values, QUICK_SWEEP);
            for v in f.series.values_mut() {
                *v = thin(v, QUICK_SERIES);
            }
        }
        let sim = &mut s.simulation;
        sim.frames = sim.frames.min(QUICK_FRAMES);
        sim.warmup = sim.warmup.min(sim.frames / 10);
        sim.seeds.truncate(QUICK_SEEDS);
    }
    if let Some(out) = &opts.out {
        s.output.dir = Some(out.display().to_string());
    }
    s
}

/// Evenly spaced subset keeping both ends.
fn thin<T: Clone>(v: &[T], max: usize) -> Vec<T> {
    if v.len() <= max {
        return v.to_vec();
    }
    let mut idx: Vec<usize> = (0..max)
        .map(|i| (i * (v.len() - 1) + (max - 1) / 2) / (max - 1))
        .collect();
    idx.dedup();
    idx.into_iter().map(|i| v[i].clone()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub figure: String,
    pub strategy: Strategy,
    pub rows: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub manifest_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub quick: bool,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
    pub resolved_scenario: &'a Scenario,
}

/// One figure's table for one strategy.
pub struct Table {
    pub figure: String,
    pub strategy: Strategy,
    pub text: String,
    pub rows: usize,
}

/// Runs every figure and writes the CSVs and the manifest. Returns the
/// output directory.
pub fn run_scenario(
    scenario: Scenario,
    opts: &RunOptions,
) -> Result<(PathBuf, Vec<OutputFile>), CliError> {
    let t0 = Instant::now();
    let s = resolve(scenario, opts);
    s.validate()?;
    let dir = PathBuf::from(s.output.dir.clone().unwrap_or_else(|| "results".into()));
    let mut tables = Vec::new();
    for f in &s.figures {
        log::info!("figure {} ({} points)", f.id, s.points(f)?.len());
        tables.extend(figure_tables(&s, f)?);
    }
    std::fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();
    for t in tables {
        let file = format!("{}_{}.csv", t.figure, t.strategy.name());
        std::fs::write(dir.join(&file), t.text.as_bytes())?;
        outputs.push(OutputFile {
            file,
            figure: t.figure,
            strategy: t.strategy,
            rows: t.rows,
        });
    }
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: s.seed,
        quick: opts.quick,
        threads: rayon::current_num_threads(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        outputs: outputs.clone(),
        resolved_scenario: &s,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::config("<manifest>", e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok((dir, outputs))
}

/// Builds the tables of one figure, one per strategy.
pub fn figure_tables(s: &Scenario, f: &Figure) -> Result<Vec<Table>, CliError> {
    let strategies = s.figure_strategies(f);
    let points = s.points(f)?;
    let (ctx, which) = contexts(&points, &strategies, f.metric == Metric::Delay)?;
    let rows: Vec<Vec<Vec<String>>> = points
        .par_iter()
        .zip(&which)
        .map(|(p, &i)| point_rows(s, f, p, &ctx[i], &strategies))
        .collect::<Result<_, _>>()?;
    let mut header = s.columns(f);
    header.extend(metric_columns(f).iter().map(|c| c.to_string()));
    let mut out = Vec::new();
    for (k, strat) in strategies.iter().enumerate() {
        let mut text = String::new();
        text.push_str(&format!(
            "# {} {}\n",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION")
        ));
        text.push_str(&format!("# scenario: {}\n", s.name));
        text.push_str(&format!("# figure: {}\n", f.id));
        text.push_str(&format!("# strategy: {}\n", strat.name()));
        text.push_str(&format!("# metric: {}\n", metric_name(f.metric)));
        text.push_str(&format!("# theta_per_bit: {}\n", cell(s.theta)));
        text.push_str(&format!(
            "# source: alpha={} beta={} lambda_bits_per_frame={}\n",
            cell(s.source.alpha),
            cell(s.source.beta),
            cell(s.source.lambda)
        ));
        text.push_str(&format!(
            "# frame_duration_s: {}\n",
            cell(s.frame.duration_s)
        ));
        if f.metric == Metric::Delay {
            text.push_str(&format!("# epsilon: {}\n", cell(s.bounds.epsilon)));
            if f.simulate {
                let seeds: Vec<String> = s.simulation.seeds.iter().map(|x| x.to_string()).collect();
                text.push_str(&format!(
                    "# simulation: frames={} warmup={} seeds={}\n",
                    s.simulation.frames,
                    s.simulation.warmup,
                    seeds.join(" ")
                ));
            }
        }
        text.push_str(&header.join(","));
        text.push('\n');
        for (p, r) in points.iter().zip(&rows) {
            let mut line: Vec<String> = p.cells.iter().map(|&x| cell(x)).collect();
            line.extend(r[k].iter().cloned());
            text.push_str(&line.join(","));
            text.push('\n');
        }
        out.push(Table {
            figure: f.id.clone(),
            strategy: *strat,
            text,
            rows: points.len(),
        });
    }
    Ok(out)
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Rho => "max average arrival rate",
        Metric::Delay => "backlog and delay bounds",
    }
}

fn metric_columns(f: &Figure) -> Vec<&'static str> {
    match f.metric {
        Metric::Rho => vec!["rho_bits_per_frame", "rho_bits_per_s"],
        Metric::Delay => {
            let mut c = Vec::new();
            if f.series.contains_key(&SeriesParam::Load) {
                c.push("lambda_bits_per_frame");
            }
            c.extend([
                "mean_rate_bits_per_frame",
                "q_bits",
                "d_frames",
                "d_ms",
                "c_bits_per_frame",
            ]);
            if f.simulate {
                c.extend([
                    "sim_pr_backlog_ge_q",
                    "sim_pr_delay_gt_ceil_d",
                    "sim_mean_backlog_bits",
                    "sim_throughput_bits_per_frame",
                ]);
            }
            c
        }
    }
}

/// Link set, and for delay figures the service curves, shared by all
/// points with the same channel, budget and frame settings.
struct LinkContext {
    links: LinkSet,
    /// One per strategy, in figure order.
    curves: Vec<ServiceCurve>,
}

/// Distinct link contexts and the index of each point's context.
fn contexts(
    points: &[Point],
    strategies: &[Strategy],
    with_curves: bool,
) -> Result<(Vec<LinkContext>, Vec<usize>), CliError> {
    let mut seen = BTreeMap::new();
    let mut unique = Vec::new();
    let which: Vec<usize> = points
        .iter()
        .map(|p| {
            let key = format!("{:?}|{:?}|{:?}|{:?}", p.rf, p.vlc, p.budget, p.frame);
            *seen.entry(key).or_insert_with(|| {
                unique.push(p);
                unique.len() - 1
            })
        })
        .collect();
    let ctx = unique
        .par_iter()
        .map(|p| -> Result<LinkContext, CliError> {
            let links = LinkSet::new(&p.rf, &p.vlc, &p.budget, &p.frame)?;
            let curves = if with_curves {
                strategies
                    .iter()
                    .map(|&st| ServiceCurve::for_strategy(&links, st, &ThetaGrid::SERVICE))
                    .collect::<Result<_, _>>()?
            } else {
                Vec::new()
            };
            Ok(LinkContext { links, curves })
        })
        .collect::<Result<_, _>>()?;
    Ok((ctx, which))
}

/// Arrival process at a point: an explicit `load` sets the ON rate so the
/// mean arrival rate is that fraction of the mean service.
fn source_at(p: &Point, links: &LinkSet, strategy: Strategy) -> Result<SourceSpec, CliError> {
    match p.load {
        Some(load) => {
            let mean = links.mean_service(strategy)?;
            Ok(p.source.with_lambda(load * mean / p.source.p_on()))
        }
        None => Ok(p.source),
    }
}

fn point_rows(
    s: &Scenario,
    f: &Figure,
    p: &Point,
    ctx: &LinkContext,
    strategies: &[Strategy],
) -> Result<Vec<Vec<String>>, CliError> {
    strategies
        .iter()
        .enumerate()
        .map(|(k, &strat)| match f.metric {
            Metric::Rho => {
                let rho = rho_at(&ctx.links, p, strat)?;
                Ok(vec![cell(rho), cell(rho / p.frame.duration_s)])
            }
            Metric::Delay => delay_row(s, f, p, &ctx.links, &ctx.curves[k], strat),
        })
        .collect()
}

fn rho_at(links: &LinkSet, p: &Point, strategy: Strategy) -> Result<f64, CliError> {
    let r = match (strategy, p.n) {
        (Strategy::Hybrid1, Some(n)) => HandoverChain::new(links, n)?.rho(&p.source, p.theta)?,
        _ => links.rho(strategy, &p.source, p.theta)?,
    };
    Ok(r.rho)
}

/// Bound at a point, `None` when no finite bound exists.
fn bound_at(
    s: &Scenario,
    curve: &ServiceCurve,
    src: &SourceSpec,
) -> Result<Option<BoundResult>, CliError> {
    if src.mean_rate() >= curve.mean {
        return Ok(None);
    }
    let arr = ArrivalCurve::new(src, &ThetaGrid::ARRIVAL, s.bounds.t_cap);
    match bounds(curve, &arr, &s.bounds) {
        Ok(b) => Ok(Some(b)),
        Err(Error::AllInfeasible | Error::EmptyDomain { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn simulate_at(
    s: &Scenario,
    links: &LinkSet,
    src: &SourceSpec,
    strategy: Strategy,
    q_bits: f64,
) -> Result<SimSummary, CliError> {
    let cfg = SimConfig {
        thresholds: vec![q_bits],
        ..s.simulation.clone()
    };
    let runs = sim::simulate_seeds(links, src, strategy.into(), &cfg)?;
    Ok(SimSummary::merge(&runs)?)
}

/// `Pr{Q >= q}`, read as `Pr{Q > 0}` when the bound is zero.
pub fn backlog_exceedance(r: &SimSummary, q_bits: f64) -> f64 {
    if q_bits > 0.0 {
        r.exceedance(0)
    } else {
        r.strict_exceedance(0)
    }
}

/// `Pr{W > d}` for whole-frame delays. The bound covers every whole number
/// of frames at or above `d`, so it is checked at `ceil(d)`.
pub fn delay_violation(r: &SimSummary, d_frames: f64) -> f64 {
    r.delay_exceedance(d_frames.ceil())
}

fn delay_row(
    s: &Scenario,
    f: &Figure,
    p: &Point,
    links: &LinkSet,
    curve: &ServiceCurve,
    strategy: Strategy,
) -> Result<Vec<String>, CliError> {
    let src = source_at(p, links, strategy)?;
    let b = bound_at(s, curve, &src)?;
    let mut row = Vec::new();
    if p.load.is_some() {
        row.push(cell(src.lambda));
    }
    row.push(cell(src.mean_rate()));
    match &b {
        Some(b) => row.extend([
            cell(b.q_bits),
            cell(b.d_frames),
            cell(b.d_frames * p.frame.duration_s * 1e3),
            cell(b.c_backlog),
        ]),
        None => row.extend(["inf", "inf", "inf", "nan"].map(String::from)),
    }
    if f.simulate {
        match b {
            Some(b) => {
                let r = simulate_at(s, links, &src, strategy, b.q_bits)?;
                row.extend([
                    cell(backlog_exceedance(&r, b.q_bits)),
                    cell(delay_violation(&r, b.d_frames)),
                    cell(r.mean_backlog),
                    cell(r.throughput()),
                ]);
            }
            // Past capacity the queue grows without limit; nothing to measure.
            None => row.extend(["nan"; 4].map(String::from)),
        }
    }
    Ok(row)
}

/// One line of the validation report.
#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckOutcome {
    Pass,
    Fail,
    /// No finite bound, nothing to compare.
    Skip,
}

/// Compares each delay figure's bounds with simulation at every sweep
/// point. A row passes when both measured violation probabilities are at
/// most `epsilon`.
pub fn validate_scenario(scenario: Scenario, opts: &RunOptions) -> Result<Vec<Check>, CliError> {
    let s = resolve(scenario, opts);
    s.validate()?;
    let eps = s.bounds.epsilon;
    let mut checks = Vec::new();
    for f in s.figures.iter().filter(|f| f.metric == Metric::Delay) {
        let strategies = s.figure_strategies(f);
        let points = s.points(f)?;
        let cols = s.columns(f);
        let (ctx, which) = contexts(&points, &strategies, true)?;
        let ctx = &ctx;
        let jobs: Vec<(&Point, &LinkContext, usize)> = points
            .iter()
            .zip(&which)
            .flat_map(|(p, &i)| (0..strategies.len()).map(move |k| (p, &ctx[i], k)))
            .collect();
        let rows: Vec<Check> = jobs
            .par_iter()
            .map(|&(p, c, k)| -> Result<Check, CliError> {
                let st = strategies[k];
                let at: Vec<String> = cols.iter().zip(&p.cells).map(|(c, v)| format!("{c}={}", cell(*v))).collect();
                let head = format!("{} {} {}", f.id, st.name(), at.join(" "));
                let src = source_at(p, &c.links, st)?;
                let Some(b) = bound_at(&s, &c.curves[k], &src)? else {
                    return Ok(Check {
                        label: format!("{head}: no finite bound"),
                        outcome: CheckOutcome::Skip,
                    });
                };
                let r = simulate_at(&s, &c.links, &src, st, b.q_bits)?;
                let pq = backlog_exceedance(&r, b.q_bits);
                let pd = delay_violation(&r, b.d_frames);
                let ok = pq <= eps && pd <= eps;
                Ok(Check {
                    label: format!(
                        "{head}: q={} bits Pr{{Q>=q}}={pq:.2e}, d={:.3} frames Pr{{W>{}}}={pd:.2e}, epsilon={eps:e}",
                        cell(b.q_bits),
                        b.d_frames,
                        b.d_frames.ceil()
                    ),
                    outcome: if ok { CheckOutcome::Pass } else { CheckOutcome::Fail },
                })
            })
            .collect::<Result<_, _>>()?;
        checks.extend(rows);
    }
    Ok(checks)
}

/// Path of the manifest inside an output directory.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_keeps_ends() {
        let v: Vec<i32> = (0..11).collect();
        assert_eq!(thin(&v, 5), [0, 3, 5, 8, 10]);
        assert_eq!(thin(&v[..3], 5), [0, 1, 2]);
        let t = thin(&v, 5);
        assert_eq!(thin(&t, 5), t);
    }

    #[test]
    fn rho_table_has_units_and_rows() {
        let text = r#"{
            "source": {"alpha": 0.3, "beta": 0.7, "lambda_bits_per_frame": 1000},
            "strategies": ["rf", "vlc"],
            "figures": [{"id": "t", "metric": "rho", "sweep": {"axis": "pAvg_dBm", "values": [20, 30]}}]
        }"#;
        let s = Scenario::from_str(text).unwrap();
        let tables = figure_tables(&s, &s.figures[0]).unwrap();
        assert_eq!(tables.len(), 2);
        let t = &tables[1].text;
        assert!(t.lines().all(|l| !l.ends_with('\r')));
        let header = t.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header, "pAvg_dBm,rho_bits_per_frame,rho_bits_per_s");
        let rows: Vec<f64> = t
            .lines()
            .skip_while(|l| l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[1] > rows[0]);
    }

    #[test]
    fn delay_table_marks_overload() {
        let text = r#"{
            "source": {"alpha": 0.3, "beta": 0.7, "lambda_bits_per_frame": 1000},
            "strategies": ["vlc"],
            "figures": [{"id": "d", "metric": "delay", "sweep": {"axis": "lambda", "values": [1000, 1e7]}}]
        }"#;
        let s = Scenario::from_str(text).unwrap();
        let t = &figure_tables(&s, &s.figures[0]).unwrap()[0].text;
        let rows: Vec<&str> = t.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert!(!rows[0].contains("inf"));
        assert!(rows[1].contains(",inf,"));
    }
}
