//! Finite-difference integration of `v_t = v_xx - (v² - u²)^n` with
//! `u = -erf(x / (2 sqrt t))`, started from `v_inf(., tau)`.
//!
//! Diffusion is Crank–Nicolson on a uniform symmetric grid, the reaction is
//! explicit with `u` taken at the half step, and the ends are pinned to
//! `v_inf(±L, t)`. Reductions run over fixed chunks so that results do not
//! depend on the number of threads.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{log_grid, AsymptoticBundle};
use crate::error::{Error, Result};
use crate::fit::{loglog_slope, SlopeFit};
use crate::special::mu1;

/// Chunk length for parallel reductions.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    /// `amp exp(-x²/width²)`.
    Bump {
        amp: f64,
        width: f64,
    },
    /// Linear interpolation of `(x, psi)` samples, zero outside.
    Tabulated {
        x: Vec<f64>,
        psi: Vec<f64>,
    },
}

impl Perturbation {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Bump { amp, width } => amp * (-(x / width).powi(2)).exp(),
            Perturbation::Tabulated { x: xs, psi } => {
                if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&a| a <= x).clamp(1, xs.len() - 1);
                let (a, b) = (xs[i - 1], xs[i]);
                let w = if b > a { (x - a) / (b - a) } else { 0.0 };
                psi[i - 1] + w * (psi[i] - psi[i - 1])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u32,
    pub tau: f64,
    pub t_end: f64,
    /// Half-length of the domain.
    pub l: f64,
    pub dx: f64,
    pub safety: f64,
    pub perturbation: Perturbation,
    /// Number of log-spaced checkpoints including both ends.
    pub checkpoints: usize,
}

impl SimConfig {
    /// Defaults for `n`: `tau = 100`, `t_end = 10^4`, the smallest allowed
    /// `L` and the largest allowed `dx`.
    pub fn new(n: u32) -> Self {
        let tau = 100.0;
        let t_end = 1e4;
        let alpha = 0.5 - 1.0 / f64::from(2 * n + 1);
        Self {
            n,
            tau,
            t_end,
            l: 10.0 * t_end.sqrt(),
            dx: tau.powf(alpha) / 20.0,
            safety: 0.9,
            perturbation: Perturbation::None,
            checkpoints: 17,
        }
    }

    /// Flat `key = value` text with keys `n, tau, t_end, L, dx, safety,
    /// perturb_amp, perturb_width, checkpoints`. `#` starts a comment. Keys
    /// not given take the defaults of [`SimConfig::new`], with `L` and `dx`
    /// re-derived from the given `t_end` and `tau`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let k = k.trim().to_string();
            let v = v.trim().trim_matches('"').to_string();
            const KEYS: [&str; 9] = [
                "n",
                "tau",
                "t_end",
                "L",
                "dx",
                "safety",
                "perturb_amp",
                "perturb_width",
                "checkpoints",
            ];
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", no + 1)));
            }
            if kv.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{k}'",
                    no + 1
                )));
            }
        }
        let num = |k: &str| -> Result<Option<f64>> {
            kv.get(k)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Config(format!("{k}: '{v}' is not a number")))
                })
                .transpose()
        };
        let n = kv
            .get("n")
            .ok_or_else(|| Error::Config("missing key 'n'".into()))?
            .parse::<u32>()
            .map_err(|_| Error::Config("n must be a positive integer".into()))?;
        let mut c = Self::new(n);
        if let Some(v) = num("tau")? {
            c.tau = v;
        }
        if let Some(v) = num("t_end")? {
            c.t_end = v;
        }
        let alpha = 0.5 - 1.0 / f64::from(2 * n + 1);
        c.l = num("L")?.unwrap_or(10.0 * c.t_end.sqrt());
        c.dx = num("dx")?.unwrap_or(c.tau.powf(alpha) / 20.0);
        if let Some(v) = num("safety")? {
            c.safety = v;
        }
        let amp = num("perturb_amp")?.unwrap_or(0.0);
        let width = num("perturb_width")?.unwrap_or(5.0);
        if amp != 0.0 {
            c.perturbation = Perturbation::Bump { amp, width };
        }
        if let Some(v) = kv.get("checkpoints") {
            c.checkpoints = v
                .parse()
                .map_err(|_| Error::Config("checkpoints must be a positive integer".into()))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let _ = writeln!(s, "L = {}", self.l);
        let _ = writeln!(s, "dx = {}", self.dx);
        let _ = writeln!(s, "safety = {}", self.safety);
        if let Perturbation::Bump { amp, width } = self.perturbation {
            let _ = writeln!(s, "perturb_amp = {amp}");
            let _ = writeln!(s, "perturb_width = {width}");
        }
        let _ = writeln!(s, "checkpoints = {}", self.checkpoints);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Config(format!("n must be >= 4, got {}", self.n)));
        }
        if !(self.tau >= 1.0) {
            return Err(Error::Config(format!("tau must be >= 1, got {}", self.tau)));
        }
        if !(self.t_end > self.tau) {
            return Err(Error::Config(format!(
                "t_end = {} must exceed tau = {}",
                self.t_end, self.tau
            )));
        }
        if !(self.l >= 10.0 * self.t_end.sqrt()) {
            return Err(Error::Config(format!(
                "L = {} is below 10 sqrt(t_end) = {}",
                self.l,
                10.0 * self.t_end.sqrt()
            )));
        }
        let alpha = 0.5 - 1.0 / f64::from(2 * self.n + 1);
        let dx_max = self.tau.powf(alpha) / 20.0;
        if !(self.dx > 0.0 && self.dx <= dx_max * (1.0 + 1e-12)) {
            return Err(Error::Config(format!(
                "dx = {} must lie in (0, tau^alpha/20 = {dx_max}]",
                self.dx
            )));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Config(format!(
                "safety must lie in (0, 1], got {}",
                self.safety
            )));
        }
        if self.checkpoints < 2 {
            return Err(Error::Config("need at least 2 checkpoints".into()));
        }
        if let Perturbation::Bump { amp, width } = self.perturbation {
            if !amp.is_finite() || !(width > 0.0) {
                return Err(Error::Config(
                    "perturbation needs finite amp and width > 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        let mut ts = log_grid(self.tau, self.t_end, self.checkpoints);
        ts[0] = self.tau;
        *ts.last_mut().unwrap() = self.t_end;
        ts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl PdeState {
    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// `max |v(x_j) - v(-x_j)|`.
    pub fn evenness_error(&self) -> f64 {
        let n = self.v.len();
        (0..n / 2)
            .map(|j| (self.v[j] - self.v[n - 1 - j]).abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric grid `x_j = (j - m) L/m`, `j = 0..=2m`, with `m = ceil(L/dx)`.
pub fn grid(l: f64, dx: f64) -> Vec<f64> {
    let m = (l / dx).ceil() as i64;
    let h = l / m as f64;
    (-m..=m).map(|j| j as f64 * h).collect()
}

/// `(v² - u²)^n`.
pub fn reaction(v: f64, u: f64, n: i32) -> f64 {
    (v * v - u * u).powi(n)
}

/// `u(x, t) = -erf(x / (2 sqrt t))`.
pub fn u_exact(x: f64, t: f64) -> f64 {
    let y = x / t.sqrt();
    if y >= 0.0 {
        -mu1(y)
    } else {
        mu1(-y)
    }
}

pub fn init_state(cfg: &SimConfig, bundle: &AsymptoticBundle) -> Result<PdeState> {
    cfg.validate()?;
    if bundle.params.n != cfg.n {
        return Err(Error::Config(format!(
            "bundle has n = {}, config n = {}",
            bundle.params.n, cfg.n
        )));
    }
    let x = grid(cfg.l, cfg.dx);
    let last = x.len() - 1;
    let mut v: Vec<f64> = x
        .par_iter()
        .map(|&xj| Ok(bundle.v_infinity(xj, cfg.tau)? + cfg.perturbation.eval(xj)))
        .collect::<Result<_>>()?;
    v[0] = bundle.v_infinity(x[0], cfg.tau)?;
    v[last] = bundle.v_infinity(x[last], cfg.tau)?;
    Ok(PdeState { x, v, t: cfg.tau })
}

/// Factorisation of the constant tridiagonal matrix `(1 + 2r, -r)` on the
/// interior points.
#[derive(Debug, Clone)]
struct Thomas {
    r: f64,
    cp: Vec<f64>,
    inv: Vec<f64>,
}

impl Thomas {
    fn new(r: f64, m: usize) -> Result<Self> {
        let (a, b) = (-r, 1.0 + 2.0 * r);
        let mut cp = vec![0.0; m];
        let mut inv = vec![0.0; m];
        let mut denom = b;
        for i in 0..m {
            if i > 0 {
                denom = b - a * cp[i - 1];
            }
            if denom.abs() < 1e-300 || !denom.is_finite() {
                return Err(Error::Simulation {
                    t: f64::NAN,
                    reason: "tridiagonal solver broke down".into(),
                });
            }
            inv[i] = 1.0 / denom;
            cp[i] = a * inv[i];
        }
        Ok(Self { r, cp, inv })
    }

    fn solve(&self, d: &mut [f64]) {
        let a = -self.r;
        let m = d.len();
        d[0] *= self.inv[0];
        for i in 1..m {
            d[i] = (d[i] - a * d[i - 1]) * self.inv[i];
        }
        for i in (0..m - 1).rev() {
            d[i] -= self.cp[i] * d[i + 1];
        }
    }
}

/// Reusable state for repeated steps of the same size.
#[derive(Debug, Default)]
pub struct Stepper {
    cache: Option<(u64, Thomas)>,
    rhs: Vec<f64>,
}

/// Largest `|d/dv (v² - u²)^n|` seen during the last reaction evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepInfo {
    pub max_jacobian: f64,
}

impl Stepper {
    pub fn new() -> Self {
        Self::default()
    }

    /// One step of size `dt`. `reaction_n = None` gives the heat equation.
    /// `bc` are the new end values.
    pub fn step(
        &mut self,
        state: &mut PdeState,
        dt: f64,
        reaction_n: Option<u32>,
        bc: (f64, f64),
    ) -> Result<StepInfo> {
        if !(dt > 0.0) {
            return Err(Error::Simulation {
                t: state.t,
                reason: format!("non-positive step {dt}"),
            });
        }
        let h = state.dx();
        let r = 0.5 * dt / (h * h);
        let m = state.v.len() - 2;
        let key = dt.to_bits();
        if self.cache.as_ref().map(|c| c.0) != Some(key) {
            self.cache = Some((key, Thomas::new(r, m)?));
        }
        let th = &self.cache.as_ref().unwrap().1;
        let t_half = state.t + 0.5 * dt;
        let scale = 0.5 / t_half.sqrt();
        let v = &state.v;
        let x = &state.x;
        self.rhs.resize(m, 0.0);
        let max_jac = self
            .rhs
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(c, out)| {
                let mut jac = 0.0f64;
                for (k, o) in out.iter_mut().enumerate() {
                    let j = c * CHUNK + k + 1;
                    let lap = v[j - 1] - 2.0 * v[j] + v[j + 1];
                    let mut val = v[j] + r * lap;
                    if let Some(n) = reaction_n {
                        let u = libm::erf(x[j] * scale);
                        let s = v[j] * v[j] - u * u;
                        let s1 = s.powi(n as i32 - 1);
                        val -= dt * s1 * s;
                        jac = jac.max((2.0 * f64::from(n) * v[j] * s1).abs());
                    }
                    *o = val;
                }
                jac
            })
            .reduce(|| 0.0, f64::max);
        self.rhs[0] += r * bc.0;
        self.rhs[m - 1] += r * bc.1;
        th.solve(&mut self.rhs);
        state.v[1..=m].copy_from_slice(&self.rhs);
        state.v[0] = bc.0;
        state.v[m + 1] = bc.1;
        state.t += dt;
        if let Some(j) = state.v.iter().position(|a| !a.is_finite()) {
            return Err(Error::Simulation {
                t: state.t,
                reason: format!("non-finite value at x = {}", state.x[j]),
            });
        }
        Ok(StepInfo {
            max_jacobian: max_jac,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub sup: f64,
    pub l1: f64,
    /// `F(0, t) = (v² - u²)^n / 2` at the centre.
    pub f0: f64,
    pub peak_x: f64,
    pub peak_f: f64,
    /// Smallest `x >= 0` where `F` falls to half its peak.
    pub half_width: f64,
    pub evenness: f64,
    /// `max |v(±L) - 1|`.
    pub boundary_defect: f64,
    /// Minima of `a = (v+u)/2` and `b = (v-u)/2`.
    pub min_a: f64,
    pub min_b: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub config: SimConfig,
    pub dx: f64,
    pub points: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Log-log slope of the sup norm over the last decade.
    pub sup_slope: Option<SlopeFit>,
    /// Log-log slope of `F(0, t)` over the last decade.
    pub f0_slope: Option<SlopeFit>,
    /// `F(0, t_end) t_end^(2 n gamma)`.
    pub f0_scaled: f64,
    pub eta2: f64,
    pub steps: u64,
}

/// Rows `(t, x, v, v_inf, F)` at one checkpoint.
pub type FieldBlock = Vec<[f64; 5]>;

fn chunked_sum(xs: &[f64]) -> f64 {
    let partial: Vec<f64> = xs.par_chunks(CHUNK).map(|c| c.iter().sum()).collect();
    partial.iter().sum()
}

fn measure(
    state: &PdeState,
    bundle: &AsymptoticBundle,
    steps: u64,
    fields: Option<&mut Vec<FieldBlock>>,
) -> Result<Checkpoint> {
    let t = state.t;
    let n = bundle.params.n as i32;
    let vinf: Vec<f64> = state
        .x
        .par_iter()
        .map(|&x| bundle.v_infinity(x, t))
        .collect::<Result<_>>()?;
    let diff: Vec<f64> = state
        .v
        .iter()
        .zip(&vinf)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let sup = diff.iter().cloned().fold(0.0, f64::max);
    let l1 = chunked_sum(&diff) * state.dx();
    let front: Vec<f64> = state
        .x
        .iter()
        .zip(&state.v)
        .map(|(&x, &v)| 0.5 * reaction(v, u_exact(x, t), n))
        .collect();
    let mid = state.x.len() / 2;
    let f0 = front[mid];
    let (mut peak_x, mut peak_f) = (0.0, f64::MIN);
    for j in mid..front.len() {
        if front[j] > peak_f {
            peak_f = front[j];
            peak_x = state.x[j];
        }
    }
    let mut half_width = state.x[state.x.len() - 1];
    for j in mid..front.len() {
        if front[j] <= 0.5 * peak_f && state.x[j] >= peak_x {
            half_width = state.x[j];
            break;
        }
    }
    let last = state.v.len() - 1;
    let boundary_defect = (state.v[0] - 1.0).abs().max((state.v[last] - 1.0).abs());
    let (mut min_a, mut min_b) = (f64::INFINITY, f64::INFINITY);
    for (&x, &v) in state.x.iter().zip(&state.v) {
        let u = u_exact(x, t);
        min_a = min_a.min(0.5 * (v + u));
        min_b = min_b.min(0.5 * (v - u));
    }
    if let Some(f) = fields {
        f.push(
            (0..state.x.len())
                .map(|j| [t, state.x[j], state.v[j], vinf[j], front[j]])
                .collect(),
        );
    }
    Ok(Checkpoint {
        t,
        sup,
        l1,
        f0,
        peak_x,
        peak_f,
        half_width,
        evenness: state.evenness_error(),
        boundary_defect,
        min_a,
        min_b,
        steps,
    })
}

/// Least-squares log-log slope of `value(c)` over checkpoints with
/// `t` in `[t_lo, t_hi]`; needs at least 4 of them.
pub fn fit_decay<F: Fn(&Checkpoint) -> f64>(
    report: &ConvergenceReport,
    window: (f64, f64),
    value: F,
) -> Result<SlopeFit> {
    let pts: Vec<&Checkpoint> = report
        .checkpoints
        .iter()
        .filter(|c| c.t >= window.0 * (1.0 - 1e-12) && c.t <= window.1 * (1.0 + 1e-12))
        .filter(|c| value(c) > 0.0)
        .collect();
    if pts.len() < 4 {
        return Err(Error::Fit(format!(
            "{} checkpoints in [{}, {}], need 4",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let ts: Vec<f64> = pts.iter().map(|c| c.t).collect();
    let ys: Vec<f64> = pts.iter().map(|c| value(c)).collect();
    loglog_slope(&ts, &ys)
}

/// Integrate from `tau` to `t_end`; `fields`, if given, receives one block
/// per checkpoint.
pub fn run(
    cfg: &SimConfig,
    bundle: &AsymptoticBundle,
    mut fields: Option<&mut Vec<FieldBlock>>,
) -> Result<ConvergenceReport> {
    let mut state = init_state(cfg, bundle)?;
    let n = cfg.n;
    let h = state.dx();
    let last = state.x.len() - 1;
    let (xl, xr) = (state.x[0], state.x[last]);
    let mut stepper = Stepper::new();
    let mut checkpoints = Vec::new();
    let times = cfg.checkpoint_times();
    let mut steps = 0u64;
    checkpoints.push(measure(&state, bundle, steps, fields.as_deref_mut())?);
    // Initial Jacobian bound.
    let mut jac = state
        .x
        .iter()
        .zip(&state.v)
        .map(|(&x, &v)| {
            let u = u_exact(x, cfg.tau);
            (2.0 * f64::from(n) * v * (v * v - u * u).powi(n as i32 - 1)).abs()
        })
        .fold(0.0, f64::max);
    for &target in &times[1..] {
        while state.t < target {
            let mut dt = cfg.safety * (0.5 * h * h).min(1.0 / jac.max(1e-300));
            if state.t + dt >= target * (1.0 - 1e-14) {
                dt = target - state.t;
            }
            let t_new = state.t + dt;
            let bc = (bundle.v_infinity(xl, t_new)?, bundle.v_infinity(xr, t_new)?);
            let info = stepper.step(&mut state, dt, Some(n), bc)?;
            if (state.t - target).abs() <= 1e-12 * target {
                state.t = target;
            }
            jac = info.max_jacobian;
            steps += 1;
        }
        checkpoints.push(measure(&state, bundle, steps, fields.as_deref_mut())?);
    }
    let p = &bundle.params;
    let t_end = cfg.t_end;
    let mut report = ConvergenceReport {
        schema: 1,
        config: cfg.clone(),
        dx: h,
        points: state.x.len(),
        f0_scaled: checkpoints.last().unwrap().f0 * t_end.powf(2.0 * f64::from(n) * p.gamma),
        checkpoints,
        sup_slope: None,
        f0_slope: None,
        eta2: bundle.eta.eta2(),
        steps,
    };
    let window = ((t_end / 10.0).max(cfg.tau), t_end);
    report.sup_slope = fit_decay(&report, window, |c| c.sup).ok();
    report.f0_slope = fit_decay(&report, window, |c| c.f0).ok();
    Ok(report)
}

/// Heat equation only: evolve `exp(-x²/w²)` from `t0` to `t1` on `[-l, l]`
/// with spacing `dx` and `dt = safety dx²/2`, and return the sup error
/// against the exact solution.
pub fn heat_error(l: f64, dx: f64, w: f64, t0: f64, t1: f64, safety: f64) -> Result<f64> {
    let exact = |x: f64, t: f64| {
        let s = w * w + 4.0 * (t - t0);
        (w * w / s).sqrt() * (-x * x / s).exp()
    };
    let x = grid(l, dx);
    let v = x.iter().map(|&a| exact(a, t0)).collect();
    let mut state = PdeState { x, v, t: t0 };
    let h = state.dx();
    let mut stepper = Stepper::new();
    let dt0 = safety * 0.5 * h * h;
    let steps = ((t1 - t0) / dt0).ceil() as u64;
    let dt = (t1 - t0) / steps as f64;
    for k in 1..=steps {
        let t_new = t0 + k as f64 * dt;
        let bc = (exact(-l, t_new), exact(l, t_new));
        stepper.step(&mut state, dt, None, bc)?;
    }
    let t = state.t;
    Ok(state
        .x
        .iter()
        .zip(&state.v)
        .map(|(&a, &v)| (v - exact(a, t)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_symmetric() {
        let g = grid(10.0, 0.3);
        let n = g.len();
        assert_eq!(n % 2, 1);
        assert_eq!(g[n / 2], 0.0);
        for j in 0..n {
            assert_eq!(g[j], -g[n - 1 - j]);
        }
    }

    #[test]
    fn reaction_vanishes_on_v_equal_abs_u() {
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let u = u_exact(x, 50.0);
            assert_eq!(reaction(u.abs(), u, 4), 0.0);
        }
    }

    #[test]
    fn thomas_matches_dense() {
        let r = 0.7;
        let th = Thomas::new(r, 5).unwrap();
        let x = [1.0, -2.0, 0.5, 3.0, 0.25];
        let mut d = [0.0; 5];
        for i in 0..5 {
            d[i] = (1.0 + 2.0 * r) * x[i];
            if i > 0 {
                d[i] -= r * x[i - 1];
            }
            if i < 4 {
                d[i] -= r * x[i + 1];
            }
        }
        th.solve(&mut d);
        for i in 0..5 {
            assert!((d[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn parse_flat_config() {
        let c = SimConfig::parse("n = 4\n# comment\nt_end = 400\nperturb_amp = 1e-3\n").unwrap();
        assert_eq!(c.n, 4);
        assert_eq!(c.l, 200.0);
        assert_eq!(
            c.perturbation,
            Perturbation::Bump {
                amp: 1e-3,
                width: 5.0
            }
        );
        assert!(SimConfig::parse("n = 4\nfoo = 1\n")
            .unwrap_err()
            .is_config());
        assert!(SimConfig::parse("n = 4\nL = 10\n").unwrap_err().is_config());
        assert!(SimConfig::parse("n = 4\ndx = 5\n").unwrap_err().is_config());
        assert!(SimConfig::parse("n = 4\nt_end = 50\n")
            .unwrap_err()
            .is_config());
        assert!(SimConfig::parse("tau = 4\n").unwrap_err().is_config());
        let c2 = SimConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c, c2);
    }

    #[test]
    fn bump_peak_is_amplitude() {
        let p = Perturbation::Bump {
            amp: 1e-3,
            width: 5.0,
        };
        assert_eq!(p.eval(0.0), 1e-3);
        assert!(p.eval(3.0) < 1e-3);
        assert_eq!(p.eval(2.0), p.eval(-2.0));
    }

    #[test]
    fn heat_second_order() {
        let e1 = heat_error(20.0, 0.2, 1.0, 1.0, 2.0, 0.9).unwrap();
        let e2 = heat_error(20.0, 0.1, 1.0, 1.0, 2.0, 0.9).unwrap();
        let order = (e1 / e2).log2();
        assert!(
            (order - 2.0).abs() < 0.2,
            "order {order}, errors {e1:e} {e2:e}"
        );
    }
}
