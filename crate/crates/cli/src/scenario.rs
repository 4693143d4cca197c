//! Scenario files: link, budget and source settings plus the figures to
//! produce.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use hybridqos::bounds::BoundQuery;
use hybridqos::channel::{RfChannelSpec, VlcChannelSpec};
use hybridqos::qos::Strategy;
use hybridqos::rates::{FrameSpec, PowerBudget};
use hybridqos::sim::SimConfig;
use hybridqos::source::SourceSpec;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub rf: RfChannelSpec,
    #[serde(default)]
    pub vlc: VlcChannelSpec,
    #[serde(default)]
    pub budget: PowerBudget,
    pub source: SourceSpec,
    #[serde(default)]
    pub frame: FrameSpec,
    /// QoS exponent used where the sweep does not set one.
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// How a `users` series shares the links.
    #[serde(default)]
    pub sharing: Sharing,
    pub figures: Vec<Figure>,
    #[serde(default)]
    pub bounds: BoundQuery,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_seed() -> u64 {
    1
}

fn default_theta() -> f64 {
    0.01
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharing {
    /// Each user gets an equal slice of both bandwidths.
    #[default]
    Fdma,
    /// Each user gets an equal slice of every frame.
    Tdma,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure {
    /// Output files are named `<id>_<strategy>.csv`.
    pub id: String,
    pub metric: Metric,
    pub sweep: Sweep,
    /// Extra curve parameters; every combination is evaluated.
    #[serde(default)]
    pub series: BTreeMap<SeriesParam, Vec<f64>>,
    /// Overrides the scenario strategy list.
    #[serde(default)]
    pub strategies: Option<Vec<Strategy>>,
    /// Adds simulated columns next to the bounds.
    #[serde(default)]
    pub simulate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Maximum average arrival rate.
    Rho,
    /// Backlog and delay bounds.
    Delay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<AxisValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "pAvg_dBm")]
    AvgPower,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "position_xy")]
    Position,
    #[serde(rename = "n")]
    SubFrames,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "beta")]
    Beta,
}

impl Axis {
    /// CSV column names with units.
    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Axis::AvgPower => &["pAvg_dBm"],
            Axis::Theta => &["theta_per_bit"],
            Axis::Position => &["x_m", "y_m"],
            Axis::SubFrames => &["n_subframes"],
            Axis::Lambda => &["lambda_bits_per_frame"],
            Axis::Beta => &["beta"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Scalar(f64),
    Pair([f64; 2]),
}

impl AxisValue {
    fn key(&self) -> [f64; 2] {
        match *self {
            AxisValue::Scalar(x) => [x, 0.0],
            AxisValue::Pair(p) => p,
        }
    }

    pub fn cells(&self) -> Vec<f64> {
        match *self {
            AxisValue::Scalar(x) => vec![x],
            AxisValue::Pair(p) => p.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeriesParam {
    #[serde(rename = "pAvg_dBm")]
    AvgPower,
    #[serde(rename = "nu")]
    Nu,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "lambda")]
    Lambda,
    /// Arrival rate as a fraction of the strategy's mean service.
    #[serde(rename = "load")]
    Load,
    #[serde(rename = "n")]
    SubFrames,
    #[serde(rename = "half_angle_deg")]
    HalfAngle,
    #[serde(rename = "rf_distance_m")]
    RfDistance,
    #[serde(rename = "vertical_m")]
    Vertical,
    /// Receiver x coordinate.
    #[serde(rename = "x_m")]
    RxX,
    #[serde(rename = "users")]
    Users,
}

impl SeriesParam {
    pub fn name(&self) -> &'static str {
        match self {
            SeriesParam::AvgPower => "pAvg_dBm",
            SeriesParam::Nu => "nu",
            SeriesParam::Theta => "theta",
            SeriesParam::Alpha => "alpha",
            SeriesParam::Beta => "beta",
            SeriesParam::Lambda => "lambda",
            SeriesParam::Load => "load",
            SeriesParam::SubFrames => "n",
            SeriesParam::HalfAngle => "half_angle_deg",
            SeriesParam::RfDistance => "rf_distance_m",
            SeriesParam::Vertical => "vertical_m",
            SeriesParam::RxX => "x_m",
            SeriesParam::Users => "users",
        }
    }

    pub fn column(&self) -> &'static str {
        match self {
            SeriesParam::Theta => "theta_per_bit",
            SeriesParam::Lambda => "lambda_bits_per_frame",
            SeriesParam::SubFrames => "n_subframes",
            other => other.name(),
        }
    }
}

/// Everything needed to evaluate one sweep point.
#[derive(Debug, Clone)]
pub struct Point {
    pub rf: RfChannelSpec,
    pub vlc: VlcChannelSpec,
    pub budget: PowerBudget,
    pub source: SourceSpec,
    pub frame: FrameSpec,
    pub theta: f64,
    pub n: Option<usize>,
    pub load: Option<f64>,
    /// Values written ahead of the metric columns.
    pub cells: Vec<f64>,
}

impl Scenario {
    pub fn from_str(text: &str) -> Result<Self, CliError> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config {
                path: "<root>".into(),
                message: e.to_string(),
            })?;
        // A run manifest carries the resolved scenario it was made from.
        if let Some(inner) = value.get_mut("resolved_scenario") {
            value = inner.take();
        }
        let s: Scenario = serde_path_to_error::deserialize(value).map_err(|e| {
            let mut path = e.path().to_string();
            let message = e.inner().to_string();
            if let Some(field) = message
                .strip_prefix("missing field `")
                .and_then(|m| m.strip_suffix('`'))
            {
                path = if path == "." {
                    field.to_string()
                } else {
                    format!("{path}.{field}")
                };
            }
            CliError::Config { path, message }
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.rf.validate()?;
        self.vlc.validate()?;
        self.budget.validate()?;
        self.source.validate()?;
        self.frame.validate()?;
        self.bounds.validate()?;
        self.simulation.validate()?;
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(CliError::config("theta", "must be positive"));
        }
        if self.strategies.is_empty() {
            return Err(CliError::config("strategies", "must not be empty"));
        }
        if self.figures.is_empty() {
            return Err(CliError::config("figures", "must not be empty"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, f) in self.figures.iter().enumerate() {
            let at = |k: &str| format!("figures[{i}].{k}");
            if f.id.is_empty()
                || !f
                    .id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(CliError::config(
                    at("id"),
                    "use letters, digits, '_' or '-'",
                ));
            }
            if !ids.insert(f.id.clone()) {
                return Err(CliError::config(at("id"), "duplicate figure id"));
            }
            if f.sweep.values.is_empty() {
                return Err(CliError::config(at("sweep.values"), "must not be empty"));
            }
            for (j, v) in f.sweep.values.iter().enumerate() {
                let pair = matches!(v, AxisValue::Pair(_));
                if pair != (f.sweep.axis == Axis::Position) {
                    return Err(CliError::config(
                        at(&format!("sweep.values[{j}]")),
                        if pair {
                            "expected a number"
                        } else {
                            "expected an [x, y] pair"
                        },
                    ));
                }
            }
            for (j, w) in f.sweep.values.windows(2).enumerate() {
                let (a, b) = (w[0].key(), w[1].key());
                if !(a[0] < b[0] || (a[0] == b[0] && a[1] < b[1])) {
                    return Err(CliError::config(
                        at(&format!("sweep.values[{}]", j + 1)),
                        "values must be strictly increasing",
                    ));
                }
            }
            for (p, vals) in &f.series {
                if vals.is_empty() {
                    return Err(CliError::config(
                        at(&format!("series.{}", p.name())),
                        "must not be empty",
                    ));
                }
            }
            let strategies = self.figure_strategies(f);
            if strategies.is_empty() {
                return Err(CliError::config(at("strategies"), "must not be empty"));
            }
            let uses_n =
                f.sweep.axis == Axis::SubFrames || f.series.contains_key(&SeriesParam::SubFrames);
            if uses_n && f.metric != Metric::Rho {
                return Err(CliError::config(
                    at("metric"),
                    "sub-frame sweeps need metric \"rho\"",
                ));
            }
            if f.metric == Metric::Delay && strategies.contains(&Strategy::Hybrid2) {
                return Err(CliError::config(
                    at("strategies"),
                    "delay bounds cover rf, vlc and hybrid1",
                ));
            }
            if f.simulate && f.metric != Metric::Delay {
                return Err(CliError::config(
                    at("simulate"),
                    "only delay figures are simulated",
                ));
            }
            let lambda_given =
                f.sweep.axis == Axis::Lambda || f.series.contains_key(&SeriesParam::Lambda);
            if lambda_given && f.series.contains_key(&SeriesParam::Load) {
                return Err(CliError::config(
                    at("series.load"),
                    "set either lambda or load, not both",
                ));
            }
            // Resolve every point once so bad values are reported up front.
            self.points(f)?;
        }
        Ok(())
    }

    pub fn figure_strategies(&self, f: &Figure) -> Vec<Strategy> {
        f.strategies
            .clone()
            .unwrap_or_else(|| self.strategies.clone())
    }

    /// Sweep points in output order: series combinations outside, the axis
    /// inside.
    pub fn points(&self, fig: &Figure) -> Result<Vec<Point>, CliError> {
        let params: Vec<(SeriesParam, &Vec<f64>)> =
            fig.series.iter().map(|(k, v)| (*k, v)).collect();
        let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
        for (_, vals) in &params {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    vals.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push(*v);
                        c
                    })
                })
                .collect();
        }
        let idx = self
            .figures
            .iter()
            .position(|f| f.id == fig.id)
            .unwrap_or(0);
        let mut out = Vec::with_capacity(combos.len() * fig.sweep.values.len());
        for combo in &combos {
            for (j, v) in fig.sweep.values.iter().enumerate() {
                let mut p = Point {
                    rf: self.rf.clone(),
                    vlc: self.vlc.clone(),
                    budget: self.budget,
                    source: self.source,
                    frame: self.frame,
                    theta: self.theta,
                    n: None,
                    load: None,
                    cells: v.cells(),
                };
                for ((param, _), &x) in params.iter().zip(combo) {
                    apply_series(&mut p, *param, x, self.sharing).map_err(|m| {
                        CliError::config(format!("figures[{idx}].series.{}", param.name()), m)
                    })?;
                    p.cells.push(x);
                }
                apply_axis(&mut p, fig.sweep.axis, v).map_err(|m| {
                    CliError::config(format!("figures[{idx}].sweep.values[{j}]"), m)
                })?;
                check_point(&p).map_err(|e| match e {
                    CliError::Config { path, message } => CliError::Config {
                        path: format!("figures[{idx}]: {path}"),
                        message,
                    },
                    other => other,
                })?;
                out.push(p);
            }
        }
        Ok(out)
    }

    /// CSV header for a figure.
    pub fn columns(&self, fig: &Figure) -> Vec<String> {
        let mut cols: Vec<String> = fig
            .sweep
            .axis
            .columns()
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend(fig.series.keys().map(|k| k.column().to_string()));
        cols
    }
}

fn apply_axis(p: &mut Point, axis: Axis, v: &AxisValue) -> Result<(), String> {
    match (axis, *v) {
        (Axis::AvgPower, AxisValue::Scalar(x)) => p.budget.avg_power_dbm = x,
        (Axis::Theta, AxisValue::Scalar(x)) => p.theta = x,
        (Axis::Position, AxisValue::Pair([x, y])) => {
            p.vlc.rx_position_m[0] = x;
            p.vlc.rx_position_m[1] = y;
        }
        (Axis::SubFrames, AxisValue::Scalar(x)) => p.n = Some(to_count(x)?),
        (Axis::Lambda, AxisValue::Scalar(x)) => p.source.lambda = x,
        (Axis::Beta, AxisValue::Scalar(x)) => p.source.beta = x,
        _ => return Err("value does not match the axis".into()),
    }
    Ok(())
}

fn to_count(x: f64) -> Result<usize, String> {
    if x.fract() != 0.0 || !(x >= 1.0) || x > 1e6 {
        return Err(format!("{x} is not a whole count"));
    }
    Ok(x as usize)
}

fn apply_series(p: &mut Point, param: SeriesParam, x: f64, sharing: Sharing) -> Result<(), String> {
    match param {
        SeriesParam::AvgPower => p.budget.avg_power_dbm = x,
        SeriesParam::Nu => p.budget.avg_to_peak_ratio = x,
        SeriesParam::Theta => p.theta = x,
        SeriesParam::Alpha => p.source.alpha = x,
        SeriesParam::Beta => p.source.beta = x,
        SeriesParam::Lambda => p.source.lambda = x,
        SeriesParam::Load => {
            if !(x > 0.0 && x.is_finite()) {
                return Err("load must be positive".into());
            }
            p.load = Some(x)
        }
        SeriesParam::SubFrames => p.n = Some(to_count(x)?),
        SeriesParam::HalfAngle => p.vlc.half_intensity_angle_deg = x,
        SeriesParam::RfDistance => p.rf.distance_m = x,
        SeriesParam::Vertical => {
            if !(x > 0.0) {
                return Err("vertical distance must be positive".into());
            }
            p.vlc.rx_position_m[2] = p.vlc.tx_position_m[2] - x;
        }
        SeriesParam::RxX => p.vlc.rx_position_m[0] = x,
        SeriesParam::Users => {
            let u = to_count(x)? as f64;
            match sharing {
                Sharing::Fdma => {
                    p.rf.bandwidth_hz /= u;
                    p.vlc.bandwidth_hz /= u;
                }
                Sharing::Tdma => p.frame.duration_s /= u,
            }
        }
    }
    Ok(())
}

fn check_point(p: &Point) -> Result<(), CliError> {
    p.rf.validate()?;
    p.vlc.validate()?;
    p.budget.validate()?;
    p.source.validate()?;
    p.frame.validate()?;
    if !(p.theta > 0.0 && p.theta.is_finite()) {
        return Err(CliError::config("theta", "must be positive"));
    }
    if let Some(n) = p.n {
        if n < 2 {
            return Err(CliError::config("n", "must be at least 2"));
        }
    }
    Ok(())
}
