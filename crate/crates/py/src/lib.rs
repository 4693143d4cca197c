//! Python bindings for the hybrid RF/VLC QoS analysis.
//!
//! Strategies are passed by name: "rf", "vlc", "hybrid1" or "hybrid2".

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hybridqos::bounds::{self, ArrivalCurve, BoundQuery, ServiceCurve, ThetaGrid};
use hybridqos::channel::{self, RfChannelSpec, VlcChannelSpec};
use hybridqos::qos::{HandoverChain, LinkSet, Strategy};
use hybridqos::rates::{self, FrameSpec, PowerBudget};
use hybridqos::sim::{self, ServiceMode, SimConfig, SimSummary};
use hybridqos::source::SourceSpec;

fn to_py(e: hybridqos::Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn strategy(name: &str) -> PyResult<Strategy> {
    Strategy::ALL
        .into_iter()
        .find(|s| s.name() == name.to_lowercase())
        .ok_or_else(|| {
            PyValueError::new_err(format!(
                "unknown strategy {name:?}; use rf, vlc, hybrid1 or hybrid2"
            ))
        })
}

/// Two-state ON-OFF source sending `lam` bits in every ON frame.
#[pyclass(frozen)]
struct Source {
    spec: SourceSpec,
}

#[pymethods]
impl Source {
    #[new]
    #[pyo3(signature = (alpha=0.3, beta=0.7, lam=1.0))]
    fn new(alpha: f64, beta: f64, lam: f64) -> PyResult<Self> {
        Ok(Self {
            spec: SourceSpec::new(alpha, beta, lam).map_err(to_py)?,
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.spec.beta
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.spec.lambda
    }

    #[getter]
    fn p_on(&self) -> f64 {
        self.spec.p_on()
    }

    #[getter]
    fn mean_rate(&self) -> f64 {
        self.spec.mean_rate()
    }

    /// Asymptotic log-MGF of the arrivals per frame.
    fn lmgf(&self, theta: f64) -> f64 {
        self.spec.lmgf(theta)
    }

    /// Log-MGF over the first `t` frames, divided by `t`.
    fn lmgf_finite(&self, theta: f64, t: u64) -> PyResult<f64> {
        if t == 0 {
            return Err(PyValueError::new_err("t must be at least 1"));
        }
        Ok(self.spec.lmgf_finite(theta, t))
    }

    fn with_lam(&self, lam: f64) -> PyResult<Self> {
        Self::new(self.spec.alpha, self.spec.beta, lam)
    }

    fn __repr__(&self) -> String {
        format!(
            "Source(alpha={}, beta={}, lam={})",
            self.spec.alpha, self.spec.beta, self.spec.lambda
        )
    }
}

/// Backlog and delay bounds at violation probability `epsilon`.
#[pyclass(frozen, get_all)]
struct Bounds {
    q_bits: f64,
    d_frames: f64,
    c_backlog: f64,
    c_delay: f64,
    feasible: bool,
}

#[pymethods]
impl Bounds {
    fn __repr__(&self) -> String {
        format!(
            "Bounds(q_bits={}, d_frames={}, feasible={})",
            self.q_bits,
            self.d_frames,
            if self.feasible { "True" } else { "False" }
        )
    }
}

/// Pooled statistics of a simulation run.
#[pyclass(frozen)]
struct SimResult {
    #[pyo3(get)]
    frames: f64,
    #[pyo3(get)]
    mean_backlog: f64,
    #[pyo3(get)]
    max_backlog: f64,
    #[pyo3(get)]
    throughput: f64,
    #[pyo3(get)]
    offered_service: f64,
    #[pyo3(get)]
    thresholds: Vec<f64>,
    #[pyo3(get)]
    exceedance: Vec<f64>,
    #[pyo3(get)]
    delay_hist: Vec<u64>,
    #[pyo3(get)]
    rf_fraction: f64,
    #[pyo3(get)]
    switches: u64,
    inner: SimSummary,
}

#[pymethods]
impl SimResult {
    /// Fraction of delay samples above `d` frames.
    fn delay_exceedance(&self, d: f64) -> f64 {
        self.inner.delay_exceedance(d)
    }

    /// Empirical `1 - eps` delay quantile in frames.
    fn delay_quantile(&self, eps: f64) -> PyResult<f64> {
        self.inner.delay_quantile(eps).map_err(to_py)
    }
}

/// RF and VLC links for one geometry and power budget.
#[pyclass(frozen)]
struct Links {
    links: LinkSet,
}

#[pymethods]
impl Links {
    /// Builds links from the common parameters; everything else keeps its
    /// default. `rx_position` is the receiver position relative to the LED
    /// in metres.
    #[new]
    #[pyo3(signature = (
        p_avg_dbm=30.0,
        nu=0.7,
        rf_distance_m=None,
        rx_position=None,
        half_angle_deg=None,
        frame_duration_s=None,
    ))]
    fn new(
        p_avg_dbm: f64,
        nu: f64,
        rf_distance_m: Option<f64>,
        rx_position: Option<[f64; 3]>,
        half_angle_deg: Option<f64>,
        frame_duration_s: Option<f64>,
    ) -> PyResult<Self> {
        let mut rf = RfChannelSpec::default();
        let mut vlc = VlcChannelSpec::default();
        let mut frame = FrameSpec::default();
        if let Some(d) = rf_distance_m {
            rf.distance_m = d;
        }
        if let Some(p) = rx_position {
            vlc.rx_position_m = p;
        }
        if let Some(a) = half_angle_deg {
            vlc.half_intensity_angle_deg = a;
        }
        if let Some(t) = frame_duration_s {
            frame.duration_s = t;
        }
        let budget = PowerBudget {
            avg_power_dbm: p_avg_dbm,
            avg_to_peak_ratio: nu,
        };
        rf.validate().map_err(to_py)?;
        vlc.validate().map_err(to_py)?;
        budget.validate().map_err(to_py)?;
        frame.validate().map_err(to_py)?;
        Ok(Self {
            links: LinkSet::new(&rf, &vlc, &budget, &frame).map_err(to_py)?,
        })
    }

    /// VLC rate in bits per frame.
    #[getter]
    fn v(&self) -> f64 {
        self.links.v()
    }

    /// Fading power above which the RF link beats the VLC link.
    #[getter]
    fn kappa(&self) -> f64 {
        self.links.kappa
    }

    /// Instantaneous service in bits per frame for fading power `h2`.
    fn service(&self, strategy_name: &str, h2: f64) -> PyResult<f64> {
        Ok(self.links.service(strategy(strategy_name)?, h2))
    }

    fn mean_service(&self, strategy_name: &str) -> PyResult<f64> {
        self.links
            .mean_service(strategy(strategy_name)?)
            .map_err(to_py)
    }

    /// Log-MGF of the per-frame service at `theta`.
    fn lmgf(&self, strategy_name: &str, theta: f64) -> PyResult<f64> {
        self.links
            .lmgf(strategy(strategy_name)?, theta)
            .map_err(to_py)
    }

    /// Maximum average arrival rate in bits per frame at QoS exponent `theta`.
    fn rho(&self, strategy_name: &str, source: &Source, theta: f64) -> PyResult<f64> {
        Ok(self
            .links
            .rho(strategy(strategy_name)?, &source.spec, theta)
            .map_err(to_py)?
            .rho)
    }

    /// Hybrid-I rate with a one-sub-frame handover and `n` sub-frames per frame.
    fn handover_rho(&self, n: usize, source: &Source, theta: f64) -> PyResult<f64> {
        let chain = HandoverChain::new(&self.links, n).map_err(to_py)?;
        Ok(chain.rho(&source.spec, theta).map_err(to_py)?.rho)
    }

    /// Probability that a Hybrid-I block uses the RF link.
    fn rf_probability(&self) -> PyResult<f64> {
        Ok(HandoverChain::new(&self.links, 2).map_err(to_py)?.delta)
    }

    /// "vlc" or "rf", whichever sustains the higher arrival rate.
    fn select_link(&self, source: &Source, theta: f64) -> PyResult<&'static str> {
        let s = self.links.select_link(&source.spec, theta).map_err(to_py)?;
        Ok(if s.choose_vlc { "vlc" } else { "rf" })
    }

    /// Backlog and delay bounds; `feasible` is false when the source
    /// outruns the mean service.
    #[pyo3(signature = (strategy_name, source, epsilon=1e-3))]
    fn bounds(
        &self,
        py: Python<'_>,
        strategy_name: &str,
        source: &Source,
        epsilon: f64,
    ) -> PyResult<Bounds> {
        let st = strategy(strategy_name)?;
        let query = BoundQuery {
            epsilon,
            ..Default::default()
        };
        query.validate().map_err(to_py)?;
        let links = &self.links;
        let src = source.spec;
        py.detach(|| {
            let curve = ServiceCurve::for_strategy(links, st, &ThetaGrid::SERVICE)?;
            let arr = ArrivalCurve::new(&src, &ThetaGrid::ARRIVAL, query.t_cap);
            match bounds::bounds(&curve, &arr, &query) {
                Ok(b) => Ok(Bounds {
                    q_bits: b.q_bits,
                    d_frames: b.d_frames,
                    c_backlog: b.c_backlog,
                    c_delay: b.c_delay,
                    feasible: true,
                }),
                Err(hybridqos::Error::AllInfeasible | hybridqos::Error::EmptyDomain { .. }) => {
                    Ok(Bounds {
                        q_bits: f64::INFINITY,
                        d_frames: f64::INFINITY,
                        c_backlog: f64::NAN,
                        c_delay: f64::NAN,
                        feasible: false,
                    })
                }
                Err(e) => Err(e),
            }
        })
        .map_err(to_py)
    }

    /// Simulates the queue. `n` switches to Hybrid-I with handover and `n`
    /// sub-frames per frame; `strategy_name` is then ignored.
    #[pyo3(signature = (strategy_name, source, frames=100_000, warmup=1_000, seeds=vec![1], thresholds=vec![], n=None))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        strategy_name: &str,
        source: &Source,
        frames: u64,
        warmup: u64,
        seeds: Vec<u64>,
        thresholds: Vec<f64>,
        n: Option<usize>,
    ) -> PyResult<SimResult> {
        let mode = match n {
            Some(n) => ServiceMode::Handover(n),
            None => ServiceMode::Plain(strategy(strategy_name)?),
        };
        let cfg = SimConfig {
            frames,
            warmup,
            seeds,
            thresholds,
            keep_backlog: false,
        };
        let links = &self.links;
        let src = source.spec;
        let r = py
            .detach(|| SimSummary::merge(&sim::simulate_seeds(links, &src, mode, &cfg)?))
            .map_err(to_py)?;
        Ok(SimResult {
            frames: r.frames(),
            mean_backlog: r.mean_backlog,
            max_backlog: r.max_backlog,
            throughput: r.throughput(),
            offered_service: r.offered_service(),
            thresholds: r.thresholds.clone(),
            exceedance: (0..r.thresholds.len()).map(|i| r.exceedance(i)).collect(),
            delay_hist: r.delay_hist.clone(),
            rf_fraction: r.rf_fraction(),
            switches: r.switches,
            inner: r,
        })
    }
}

#[pyfunction]
fn dbm_to_watts(dbm: f64) -> f64 {
    channel::dbm_to_watts(dbm)
}

#[pyfunction]
fn watts_to_dbm(w: f64) -> f64 {
    channel::watts_to_dbm(w)
}

/// Constants `(ln a, b)` of the RF input law and the two equation residuals.
#[pyfunction]
fn solve_ab(p_avg_w: f64, p_peak_w: f64) -> PyResult<(f64, f64, (f64, f64))> {
    let c = rates::solve_ab(p_avg_w, p_peak_w).map_err(to_py)?;
    Ok((c.ln_a(), c.b, c.residuals))
}

/// Optical input-law parameter for an average-to-peak ratio below 1/2.
#[pyfunction]
fn solve_mu_star(ratio: f64) -> PyResult<f64> {
    rates::solve_mu_star(ratio).map_err(to_py)
}

#[pymodule]
fn pyhybridqos(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Source>()?;
    m.add_class::<Links>()?;
    m.add_class::<Bounds>()?;
    m.add_class::<SimResult>()?;
    m.add_function(wrap_pyfunction!(dbm_to_watts, m)?)?;
    m.add_function(wrap_pyfunction!(watts_to_dbm, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ab, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mu_star, m)?)?;
    m.add("STRATEGIES", Strategy::ALL.map(|s| s.name()).to_vec())?;
    Ok(())
}
