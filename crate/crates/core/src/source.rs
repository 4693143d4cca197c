//! Two-state Markov ON-OFF arrival process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::perron::ln_perron_2x2;

/// ON-OFF source: `alpha` is the ON→OFF probability, `beta` the OFF→ON
/// probability, and `lambda` bits arrive in every ON frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "lambda_bits_per_frame")]
    pub lambda: f64,
}

impl SourceSpec {
    pub fn new(alpha: f64, beta: f64, lambda: f64) -> Result<Self> {
        let s = Self {
            alpha,
            beta,
            lambda,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("source.alpha", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("source.beta", "must lie in [0, 1]"));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(Error::invalid(
                "source.beta",
                "alpha + beta must be positive",
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(
                "source.lambda_bits_per_frame",
                "must be nonnegative",
            ));
        }
        Ok(())
    }

    pub fn p_on(&self) -> f64 {
        self.beta / (self.alpha + self.beta)
    }

    pub fn p_off(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn mean_rate(&self) -> f64 {
        self.p_on() * self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    /// Asymptotic log-MGF `lim (1/t) ln E[e^{theta A(t)}]`: the log Perron root
    /// of `diag(e^{theta lambda}, 1) J`.
    pub fn lmgf(&self, theta: f64) -> f64 {
        ln_onoff_root(self.alpha, self.beta, theta * self.lambda)
    }

    /// Finite-horizon log-MGF
    /// `(1/t) ln [p_on p_off] (D J)^{t-1} D [1 1]^T`, `D = diag(e^{theta lambda}, 1)`.
    pub fn lmgf_finite(&self, theta: f64, t: u64) -> f64 {
        assert!(t >= 1);
        let s = theta * self.lambda;
        let p = ScaledMatrix::step(self.alpha, self.beta, s).pow(t - 1);
        let (row, ln_row) = self.initial_row(s);
        let v = [
            row[0] * p.m[0][0] + row[1] * p.m[1][0],
            row[0] * p.m[0][1] + row[1] * p.m[1][1],
        ];
        (ln_row + p.ln_scale + ln_dot_terminal(v, s)) / t as f64
    }

    /// `[p_on p_off] D^{1/2}` normalized to unit maximum, with its log scale.
    fn initial_row(&self, s: f64) -> ([f64; 2], f64) {
        let l = [self.p_on().ln() + 0.5 * s, self.p_off().ln()];
        let m = l[0].max(l[1]);
        ([(l[0] - m).exp(), (l[1] - m).exp()], m)
    }

    /// `sup_t` of the finite-horizon log-MGF.
    ///
    /// Walks `t = 1, 2, ...` until successive values move by less than
    /// `1e-6` (at most `t_cap` steps), then compares the running maximum
    /// with the `t -> inf` limit, which bounds the tail of an increasing
    /// sequence.
    pub fn sup_lmgf_finite(&self, theta: f64, t_cap: u64) -> SupOverTime {
        let s = theta * self.lambda;
        let m = ScaledMatrix::step(self.alpha, self.beta, s);
        let (mut row, mut ln_scale) = self.initial_row(s);
        let mut best = f64::NEG_INFINITY;
        let mut arg = 1;
        let mut prev = f64::NAN;
        let mut t = 1u64;
        let mut capped = false;
        loop {
            let v = (ln_scale + ln_dot_terminal(row, s)) / t as f64;
            if v > best {
                best = v;
                arg = t;
            }
            if t >= 2 && (v - prev).abs() < 1e-6 {
                break;
            }
            if t >= t_cap {
                capped = true;
                log::warn!("sup over t hit the cap t = {t_cap} at theta = {theta}");
                break;
            }
            prev = v;
            // row <- row * M, renormalized.
            let next = [
                row[0] * m.m[0][0] + row[1] * m.m[1][0],
                row[0] * m.m[0][1] + row[1] * m.m[1][1],
            ];
            let mx = next[0].max(next[1]);
            row = [next[0] / mx, next[1] / mx];
            ln_scale += m.ln_scale + mx.ln();
            t += 1;
        }
        let limit = self.lmgf(theta);
        let (value, arg) = if limit > best {
            (limit, None)
        } else {
            (best, Some(arg))
        };
        SupOverTime {
            value,
            argmax_t: arg,
            horizon: t,
            capped,
        }
    }

    /// Streaming generator started from the steady state.
    pub fn process(&self, seed: u64) -> OnOffProcess {
        OnOffProcess::new(*self, seed)
    }

    pub fn generate(&self, frames: usize, seed: u64) -> ArrivalTrace {
        let mut p = self.process(seed);
        let mut arrivals = Vec::with_capacity(frames);
        let mut on = Vec::with_capacity(frames);
        for _ in 0..frames {
            let (state, a) = p.next_frame();
            on.push(state);
            arrivals.push(a);
        }
        ArrivalTrace { arrivals, on, seed }
    }
}

/// Log Perron root of `diag(e^s, 1) [[1-a, a], [b, 1-b]]`.
pub fn ln_onoff_root(alpha: f64, beta: f64, s: f64) -> f64 {
    ln_perron_2x2(
        (1.0 - alpha).ln() + s,
        (alpha * beta).ln() + s,
        (1.0 - beta).ln(),
    )
}

/// `ln(v . D^{1/2} 1)` with `D = diag(e^s, 1)`.
fn ln_dot_terminal(v: [f64; 2], s: f64) -> f64 {
    crate::numeric::log_add_exp(v[0].ln() + 0.5 * s, v[1].ln())
}

/// 2×2 nonnegative matrix `e^{ln_scale} m` with `max m = 1`.
///
/// Powers of `D J` are taken through the similar matrix
/// `K = D^{1/2} J D^{1/2}`, whose entries stay within a factor `e^{s/2}` of
/// each other instead of `e^s`.
#[derive(Debug, Clone, Copy)]
struct ScaledMatrix {
    m: [[f64; 2]; 2],
    ln_scale: f64,
}

impl ScaledMatrix {
    fn identity() -> Self {
        Self {
            m: [[1.0, 0.0], [0.0, 1.0]],
            ln_scale: 0.0,
        }
    }

    /// `K = D^{1/2} J D^{1/2}`.
    fn step(alpha: f64, beta: f64, s: f64) -> Self {
        let ln_rows = [
            [(1.0 - alpha).ln() + s, alpha.ln() + 0.5 * s],
            [beta.ln() + 0.5 * s, (1.0 - beta).ln()],
        ];
        let mx = ln_rows
            .iter()
            .flatten()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = (ln_rows[i][j] - mx).exp();
            }
        }
        Self { m, ln_scale: mx }
    }

    fn mul(&self, o: &Self) -> Self {
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        let mx = m.iter().flatten().cloned().fold(0.0, f64::max);
        if mx == 0.0 {
            return Self {
                m,
                ln_scale: f64::NEG_INFINITY,
            };
        }
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v /= mx;
            }
        }
        Self {
            m,
            ln_scale: self.ln_scale + o.ln_scale + mx.ln(),
        }
    }

    fn pow(&self, mut k: u64) -> Self {
        let mut acc = Self::identity();
        let mut base = *self;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }
}

/// Result of [`SourceSpec::sup_lmgf_finite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupOverTime {
    pub value: f64,
    /// Horizon attaining the supremum, or `None` when the limit dominates.
    pub argmax_t: Option<u64>,
    /// Last horizon evaluated.
    pub horizon: u64,
    pub capped: bool,
}

/// Markov chain sample path.
#[derive(Debug, Clone)]
pub struct OnOffProcess {
    spec: SourceSpec,
    on: bool,
    started: bool,
    rng: ChaCha8Rng,
}

impl OnOffProcess {
    pub fn new(spec: SourceSpec, seed: u64) -> Self {
        Self {
            spec,
            on: false,
            started: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// State and arrivals of the next frame.
    pub fn next_frame(&mut self) -> (bool, f64) {
        let u: f64 = self.rng.random();
        if !self.started {
            self.on = u < self.spec.p_on();
            self.started = true;
        } else if self.on {
            self.on = u >= self.spec.alpha;
        } else {
            self.on = u < self.spec.beta;
        }
        (self.on, if self.on { self.spec.lambda } else { 0.0 })
    }
}

/// Recorded arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalTrace {
    pub arrivals: Vec<f64>,
    pub on: Vec<bool>,
    pub seed: u64,
}
