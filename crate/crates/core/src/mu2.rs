//! Diffusive-scale correction `mu2`, solved through `m(x) = mu2(x) x^delta`:
//!
//! `m'' + (x/2 - 2 delta/x) m' + (delta(delta+1)/x² - n eps/2) m = (2 mu1(x) m / x)^n / x²`
//!
//! with `m(0) = lambda` and Gaussian decay at infinity. An inner shot from
//! `(xi, rho, 0)` towards the origin fixes `rho = c0(xi)`; an outer shot over
//! `xi` selects the decaying solution.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_lsq;
use crate::ode::{
    bisect_shoot, integrate, IntegratorOptions, LeftEnd, Node, Order, Profile, RhsFn, RightTail,
    Sample, ShootingOutcome, ShotClass, Termination,
};
use crate::params::ModelParams;
use crate::special::mu1_over_y;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mu2Options {
    /// Where leftward shots stop.
    pub x_min: f64,
    /// Below this the left Taylor series replaces the grid.
    pub x_taylor: f64,
    /// Upper end of the Taylor fit window.
    pub taylor_fit_hi: f64,
    /// Rightward integration stops here or when `m < m_floor * lambda`.
    pub y_max: f64,
    pub m_floor: f64,
    /// How far outer shots are followed before they count as undecided.
    pub outer_span: f64,
    pub ode_tol: f64,
    pub node_spacing: f64,
    /// Bisection widths; zero runs to the floating point floor.
    pub inner_tol: f64,
    pub outer_tol: f64,
}

impl Default for Mu2Options {
    fn default() -> Self {
        Self {
            x_min: 1e-3,
            x_taylor: 0.05,
            taylor_fit_hi: 0.5,
            y_max: 10.0,
            m_floor: 1e-14,
            outer_span: 30.0,
            ode_tol: 1e-12,
            node_spacing: 0.02,
            inner_tol: 0.0,
            outer_tol: 0.0,
        }
    }
}

/// `(2 mu1(x)/x)`.
fn two_mu1_over_x(x: f64) -> f64 {
    2.0 * mu1_over_y(x)
}

/// Right-hand side of the `m` equation solved for `m''`.
pub fn m_rhs(p: &ModelParams) -> RhsFn {
    let n = p.n as i32;
    let d = p.delta;
    let dd1 = p.delta_delta1();
    let half_neps = 0.5 * f64::from(p.n) * p.epsilon;
    Arc::new(move |x, m, dm| {
        let x2 = x * x;
        -(0.5 * x - 2.0 * d / x) * dm - (dd1 / x2 - half_neps) * m
            + (two_mu1_over_x(x) * m).powi(n) / x2
    })
}

/// The curve on which `m'' = 0` for `m' = 0`:
/// `c2(xi) = ((n eps/2) (xi0² - xi²) / (2 mu1(xi)/xi)^n)^eps`.
pub fn c2_curve(xi: f64, p: &ModelParams) -> Result<f64> {
    if !(xi > 0.0 && xi <= p.xi0) {
        return Err(Error::Domain(format!(
            "c2 curve defined on (0, {}], got xi = {xi}",
            p.xi0
        )));
    }
    Ok(c2_unchecked(xi, p))
}

fn c2_unchecked(xi: f64, p: &ModelParams) -> f64 {
    let half_neps = 0.5 * f64::from(p.n) * p.epsilon;
    let base = half_neps * (p.xi0 * p.xi0 - xi * xi) / two_mu1_over_x(xi).powi(p.n as i32);
    base.max(0.0).powf(p.epsilon)
}

/// `omega1(xi) = (2 mu1(xi)/xi)^n / xi²`.
fn omega1(xi: f64, p: &ModelParams) -> f64 {
    two_mu1_over_x(xi).powi(p.n as i32) / (xi * xi)
}

/// `omega1'(xi) c2(xi)^(n-1) + omega2'(xi)`, which vanishes at the maximum of c2.
pub fn xi_m_condition(xi: f64, p: &ModelParams) -> f64 {
    let h = 1e-6 * xi;
    let d_omega1 = (omega1(xi + h, p) - omega1(xi - h, p)) / (2.0 * h);
    let d_omega2 = 2.0 * p.delta_delta1() / xi.powi(3);
    d_omega1 * c2_unchecked(xi, p).powi(p.n as i32 - 1) + d_omega2
}

/// Location of the maximum of the c2 curve, by bisection on
/// [`xi_m_condition`] over `(0, xi0)`.
pub fn find_xi_m(p: &ModelParams) -> Result<f64> {
    let mut a = 1e-3 * p.xi0;
    let mut b = p.xi0 * (1.0 - 1e-9);
    let fa = xi_m_condition(a, p);
    let fb = xi_m_condition(b, p);
    if fa.signum() == fb.signum() {
        return Err(Error::Config(format!(
            "xi_m condition has no sign change on ({a}, {b}): {fa}, {fb}"
        )));
    }
    while b - a > 1e-14 * p.xi0 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if xi_m_condition(mid, p).signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

fn shot_options(o: &Mu2Options, atol: f64) -> IntegratorOptions {
    IntegratorOptions::new(o.ode_tol)
        .atol(atol)
        .h_max(o.node_spacing)
}

const INNER_ATOL: f64 = 1e-20;
const OUTER_ATOL: f64 = 1e-30;

/// Leftward shot from `(xi, rho, 0)`: reaching `m = lambda` is an
/// undershoot, reaching the c2 curve an overshoot.
pub fn classify_inner(
    xi: f64,
    rho: f64,
    p: &ModelParams,
    o: &Mu2Options,
) -> Result<ShootingOutcome> {
    let rhs = m_rhs(p);
    let lambda = p.lambda;
    let hits_lambda = move |_: f64, m: f64, _: f64| m - lambda;
    let hits_c2 = |x: f64, m: f64, _: f64| m - c2_unchecked(x, p);
    let tr = integrate(
        |x, m, dm| rhs(x, m, dm),
        xi,
        rho,
        0.0,
        o.x_min,
        &[&hits_lambda, &hits_c2],
        &shot_options(o, INNER_ATOL),
    )?;
    let out = match tr.termination {
        Termination::Event { index: 0, x } => ShootingOutcome::new(ShotClass::Undershoot, Some(x)),
        Termination::Event { x, .. } => ShootingOutcome::new(ShotClass::Overshoot, Some(x)),
        Termination::Overflow { x } => ShootingOutcome::new(ShotClass::Overshoot, Some(x)),
        Termination::StepUnderflow { x } => ShootingOutcome::new(ShotClass::Undecided, Some(x)),
        Termination::Reached => ShootingOutcome::new(ShotClass::Undecided, None),
    };
    Ok(ShootingOutcome {
        trajectory: Some(tr),
        ..out
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    pub xi: f64,
    /// `c0(xi)`: the undershoot end of the final bracket.
    pub rho: f64,
    /// The overshoot end.
    pub rho_over: f64,
    pub c2: f64,
    pub shots: usize,
}

/// `c0(xi)` by bisection over `rho` in `(lambda, c2(xi))`.
pub fn inner_shoot_c0(xi: f64, p: &ModelParams, o: &Mu2Options) -> Result<InnerResult> {
    let c2 = c2_curve(xi, p)?;
    if !(c2 > p.lambda) {
        return Err(Error::Domain(format!(
            "xi = {xi} lies outside the lens: c2 = {c2} <= lambda"
        )));
    }
    let gap = c2 - p.lambda;
    let res = bisect_shoot(
        |rho| classify_inner(xi, rho, p, o),
        p.lambda + 1e-9 * gap,
        c2 - 1e-9 * gap,
        o.inner_tol,
    )?;
    let (under, over) = if res.lo_class == ShotClass::Undershoot {
        (res.lo, res.hi)
    } else {
        (res.hi, res.lo)
    };
    Ok(InnerResult {
        xi,
        rho: under,
        rho_over: over,
        c2,
        shots: res.history.len(),
    })
}

/// Insert-once cache of inner shots keyed by the bit pattern of `xi`.
#[derive(Debug, Default)]
pub struct C0Cache {
    map: Mutex<BTreeMap<u64, InnerResult>>,
}

impl C0Cache {
    pub fn get_or_solve(&self, xi: f64, p: &ModelParams, o: &Mu2Options) -> Result<InnerResult> {
        let key = xi.to_bits();
        if let Some(r) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(*r);
        }
        let r = inner_shoot_c0(xi, p, o)?;
        // A concurrent solve of the same key computes the identical value.
        self.map.lock().expect("cache lock").entry(key).or_insert(r);
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rightward shot from `(xi, c0(xi), 0)`: `m` reaching 0 is an undershoot,
/// `m'` returning to 0 an overshoot.
pub fn classify_outer(
    xi: f64,
    cache: &C0Cache,
    p: &ModelParams,
    o: &Mu2Options,
) -> Result<ShootingOutcome> {
    let inner = cache.get_or_solve(xi, p, o)?;
    let rhs = m_rhs(p);
    let hits_zero = |_: f64, m: f64, _: f64| m;
    let turns = |_: f64, _: f64, dm: f64| dm;
    let tr = integrate(
        |x, m, dm| rhs(x, m, dm),
        xi,
        inner.rho,
        0.0,
        xi + o.outer_span,
        &[&hits_zero, &turns],
        &shot_options(o, OUTER_ATOL),
    )?;
    let out = match tr.termination {
        Termination::Event { index: 0, x } => ShootingOutcome::new(ShotClass::Undershoot, Some(x)),
        Termination::Event { x, .. } => ShootingOutcome::new(ShotClass::Overshoot, Some(x)),
        Termination::Overflow { x } => ShootingOutcome::new(ShotClass::Overshoot, Some(x)),
        Termination::StepUnderflow { x } => ShootingOutcome::new(ShotClass::Undecided, Some(x)),
        Termination::Reached => ShootingOutcome::new(ShotClass::Undecided, None),
    };
    Ok(ShootingOutcome {
        trajectory: Some(tr),
        ..out
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mu2Solution {
    pub n: u32,
    pub lambda: f64,
    pub delta: f64,
    pub xi_m: f64,
    pub c2_max: f64,
    pub xi_star: f64,
    /// Final outer bracket `(undershoot, overshoot)`.
    pub xi_bracket: (f64, f64),
    pub rho_star: f64,
    /// `m` at the end of the final leftward shot, `x_min`.
    pub m_at_x_min: f64,
    pub profile: Profile,
    /// Fitted `m''(0)/2`.
    pub lambda0_fit: f64,
    /// Quartic coefficient of `m`, fitted with the quadratic one fixed.
    pub lambda1_fit: f64,
    /// Amplitude `C` of `mu2 ~ C exp(-y²/4) y^(2 eps - 1)`, averaged over the
    /// last unit of the solved tail.
    pub gauss_c: f64,
    pub outer_shots: usize,
    pub inner_solves: usize,
    pub options: Mu2Options,
}

impl Mu2Solution {
    pub fn attach(&mut self, p: &ModelParams) {
        self.profile.set_rhs(m_rhs(p));
    }

    fn taylor_coeffs(&self) -> &[f64] {
        match &self.profile.left {
            LeftEnd::Taylor { coeffs } => coeffs,
            LeftEnd::Grid => &[],
        }
    }

    /// `m = mu2 y^delta` and its first two derivatives.
    pub fn m(&self, y: f64, order: Order) -> Result<f64> {
        self.profile.eval(y, order)
    }

    /// `mu2(y) = m(y) / y^delta`, for `y > 0`.
    pub fn mu2(&self, y: f64, order: Order) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("mu2 needs y > 0, got {y}")));
        }
        let m = self.profile.eval(y, Order::Value)?;
        let d = self.delta;
        let yd = y.powf(-d);
        Ok(match order {
            Order::Value => m * yd,
            Order::First => {
                let dm = self.profile.eval(y, Order::First)?;
                (dm - d * m / y) * yd
            }
            Order::Second => {
                let dm = self.profile.eval(y, Order::First)?;
                let ddm = self.profile.eval(y, Order::Second)?;
                (ddm - 2.0 * d * dm / y + d * (d + 1.0) * m / (y * y)) * yd
            }
        })
    }

    /// `mu3(y) = mu2(y) - lambda y^-delta = (m - lambda)/y^delta`.
    pub fn mu3(&self, y: f64, order: Order) -> Result<f64> {
        self.mu3_shifted(y, order, 0.0)
    }

    /// `mu3(y) - lambda0 y^(2-delta)` with the exact `lambda0` of the series,
    /// which stays regular at the origin for every `n`.
    pub fn mu3_regular(&self, y: f64, order: Order) -> Result<f64> {
        let l0 = self.taylor_coeffs().get(2).copied().unwrap_or(0.0);
        self.mu3_shifted(y, order, l0)
    }

    /// `(m - lambda - l0 y²)/y^delta`. Below the grid the Taylor series is
    /// differentiated term by term so that the cancellations are exact.
    fn mu3_shifted(&self, y: f64, order: Order, l0: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("mu3 needs y >= 0, got {y}")));
        }
        let d = self.delta;
        if y < self.profile.x_min() {
            let coeffs = self.taylor_coeffs();
            let mut acc = 0.0;
            for (k, &c) in coeffs.iter().enumerate().skip(1) {
                let c = if k == 2 { c - l0 } else { c };
                if c == 0.0 {
                    continue;
                }
                let q = k as f64 - d;
                acc += match order {
                    Order::Value => c * y.powf(q),
                    Order::First => c * q * y.powf(q - 1.0),
                    Order::Second => c * q * (q - 1.0) * y.powf(q - 2.0),
                };
            }
            return Ok(acc);
        }
        let w = self.profile.eval(y, Order::Value)? - self.lambda - l0 * y * y;
        let yd = y.powf(-d);
        Ok(match order {
            Order::Value => w * yd,
            Order::First => {
                let dw = self.profile.eval(y, Order::First)? - 2.0 * l0 * y;
                (dw - d * w / y) * yd
            }
            Order::Second => {
                let dw = self.profile.eval(y, Order::First)? - 2.0 * l0 * y;
                let ddw = self.profile.eval(y, Order::Second)? - 2.0 * l0;
                (ddw - 2.0 * d * dw / y + d * (d + 1.0) * w / (y * y)) * yd
            }
        })
    }

    /// Sampled values of `lambda < c0(xi) < c2(xi)` on `count` evenly spaced
    /// points of `(0, xi_m)`.
    pub fn c0_samples(&self, p: &ModelParams, count: usize) -> Result<Vec<InnerResult>> {
        (1..=count)
            .into_par_iter()
            .map(|k| {
                let xi = self.xi_m * k as f64 / (count + 1) as f64;
                inner_shoot_c0(xi, p, &self.options)
            })
            .collect()
    }
}

pub fn solve_mu2(p: &ModelParams) -> Result<Mu2Solution> {
    solve_mu2_with(p, &Mu2Options::default())
}

pub fn solve_mu2_with(p: &ModelParams, o: &Mu2Options) -> Result<Mu2Solution> {
    let xi_m = find_xi_m(p)?;
    let c2_max = c2_unchecked(xi_m, p);
    let cache = C0Cache::default();

    // Undershoots sit at small xi, overshoots near xi_m. Widen towards 0 if
    // the lower seed is not an undershoot.
    let hi = xi_m * (1.0 - 1e-6);
    let mut lo = 0.25 * xi_m;
    let mut attempt = 0;
    let res = loop {
        match bisect_shoot(|xi| classify_outer(xi, &cache, p, o), lo, hi, o.outer_tol) {
            Ok(r) => break r,
            Err(Error::BracketInvalid { .. }) if attempt < 4 => {
                lo *= 0.25;
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let (xi_under, xi_over) = if res.lo_class == ShotClass::Undershoot {
        (res.lo, res.hi)
    } else {
        (res.hi, res.lo)
    };
    let xi_star = xi_under;
    let inner = cache.get_or_solve(xi_star, p, o)?;
    let rho_star = inner.rho;

    let rhs = m_rhs(p);
    let left = integrate(
        |x, m, dm| rhs(x, m, dm),
        xi_star,
        rho_star,
        0.0,
        o.x_min,
        &[],
        &shot_options(o, INNER_ATOL),
    )?;
    let m_at_x_min = left.last().y;
    let floor = o.m_floor * p.lambda;
    let below_floor = move |_: f64, m: f64, _: f64| m - floor;
    let right = integrate(
        |x, m, dm| rhs(x, m, dm),
        xi_star,
        rho_star,
        0.0,
        o.y_max,
        &[&below_floor],
        &shot_options(o, OUTER_ATOL),
    )?;
    if matches!(
        right.termination,
        Termination::Overflow { .. } | Termination::StepUnderflow { .. }
    ) {
        return Err(Error::Integration {
            x: right.last().x,
            reason: format!("final rightward m profile: {:?}", right.termination),
        });
    }
    let mut samples: Vec<Sample> = left.into_increasing();
    samples.pop(); // xi_star is the first sample of the rightward leg
    samples.extend(right.samples.iter().copied());

    for s in samples.iter().filter(|s| s.x > xi_star) {
        if !(s.y > 0.0 && s.dy < 0.0) {
            return Err(Error::Consistency(format!(
                "m not positive and decreasing right of xi* at x = {}",
                s.x
            )));
        }
    }

    // Quadratic coefficient of m at the origin, fitted freely for reporting.
    let fit_pts: Vec<&Sample> = samples
        .iter()
        .filter(|s| s.x >= o.x_taylor && s.x <= o.taylor_fit_hi)
        .collect();
    let xs: Vec<f64> = fit_pts.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = fit_pts.iter().map(|s| s.y - p.lambda).collect();
    let b2 = |x: f64| x * x;
    let b4 = |x: f64| x.powi(4);
    let b6 = |x: f64| x.powi(6);
    let b8 = |x: f64| x.powi(8);
    let free_fit = linear_lsq(&xs, &ys, &[&b2, &b4, &b6, &b8])?;
    // The stored series keeps the exact lambda0 so that the singular
    // y^(2-delta) part of mu3 cancels exactly against the reactive profile.
    // The quartic and sextic coefficients are pinned by value and slope at the
    // first node; the octic one is then a one-parameter least-squares fit.
    let first = *samples
        .iter()
        .find(|s| s.x >= o.x_taylor)
        .ok_or_else(|| Error::Consistency("no samples right of x_taylor".into()))?;
    let a = first.x;
    let w0 = first.y - p.lambda - p.lambda0 * a * a;
    let dw0 = first.dy - 2.0 * p.lambda0 * a;
    // (c4, c6) = base + c8 * dir
    let pin = |r1: f64, r2: f64| {
        let c6 = (0.5 * r2 * a - 2.0 * r1) / a.powi(6);
        let c4 = (r1 - c6 * a.powi(6)) / a.powi(4);
        (c4, c6)
    };
    let base = pin(w0, dw0);
    let lin = pin(w0 - a.powi(8), dw0 - 8.0 * a.powi(7));
    let dir = (lin.0 - base.0, lin.1 - base.1);
    let (mut num, mut den) = (0.0, 0.0);
    for s in &fit_pts {
        let x = s.x;
        let r = s.y - p.lambda - p.lambda0 * x * x - base.0 * x.powi(4) - base.1 * x.powi(6);
        let g = dir.0 * x.powi(4) + dir.1 * x.powi(6) + x.powi(8);
        num += r * g;
        den += g * g;
    }
    let c8 = num / den;
    let tfit = [base.0 + c8 * dir.0, base.1 + c8 * dir.1, c8];
    let taylor = vec![
        p.lambda, 0.0, p.lambda0, 0.0, tfit[0], 0.0, tfit[1], 0.0, tfit[2],
    ];

    // Gaussian tail m = A x^-r exp(-x²/4), matched in value and slope at
    // the last node so the seam is continuous to rounding.
    let end = *samples.last().expect("samples");
    let x_end = end.x;
    let r = -x_end * (end.dy / end.y + 0.5 * x_end);
    let tail = RightTail::Gaussian {
        amplitude: end.y * x_end.powf(r) * (0.25 * x_end * x_end).exp(),
        exponent: r,
    };

    // C from mu2 e^{y²/4} y^(1-2 eps) on the last unit.
    let last_unit: Vec<f64> = samples
        .iter()
        .filter(|s| s.x >= x_end - 1.0)
        .map(|s| {
            s.y * s.x.powf(-p.delta) * (s.x * s.x / 4.0).exp() * s.x.powf(1.0 - 2.0 * p.epsilon)
        })
        .collect();
    let gauss_c = last_unit.iter().sum::<f64>() / last_unit.len() as f64;

    let nodes: Vec<Node> = samples
        .iter()
        .filter(|s| s.x >= o.x_taylor)
        .map(|&s| s.into())
        .collect();
    let profile = Profile::new("m", nodes, LeftEnd::Taylor { coeffs: taylor }, tail)?.with_rhs(rhs);

    Ok(Mu2Solution {
        n: p.n,
        lambda: p.lambda,
        delta: p.delta,
        xi_m,
        c2_max,
        xi_star,
        xi_bracket: (xi_under, xi_over),
        rho_star,
        m_at_x_min,
        profile,
        lambda0_fit: free_fit.coeffs[0],
        lambda1_fit: tfit[0],
        gauss_c,
        outer_shots: res.history.len(),
        inner_solves: cache.len(),
        options: *o,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c2_endpoints() {
        let p = ModelParams::derive(4).unwrap();
        assert_eq!(c2_curve(p.xi0, &p).unwrap(), 0.0);
        let near0 = c2_curve(1e-6, &p).unwrap();
        assert!((near0 - p.lambda).abs() < 1e-9 * p.lambda);
        assert!(c2_curve(0.0, &p).is_err());
        assert!(c2_curve(p.xi0 * 1.01, &p).is_err());
    }

    #[test]
    fn xi_m_is_interior_maximum() {
        for n in [4, 5, 7] {
            let p = ModelParams::derive(n).unwrap();
            let xm = find_xi_m(&p).unwrap();
            assert!(xm > 0.0 && xm < p.xi0);
            let h = 1e-4 * xm;
            let slope = (c2_unchecked(xm + h, &p) - c2_unchecked(xm - h, &p)) / (2.0 * h);
            assert!(slope.abs() < 1e-6, "n={n}: c2'(xi_m) = {slope}");
            assert!(c2_unchecked(xm, &p) > p.lambda);
            assert!(xi_m_condition(0.9 * xm, &p).signum() != xi_m_condition(1.1 * xm, &p).signum());
        }
    }

    #[test]
    fn inner_seeds_classify() {
        let p = ModelParams::derive(4).unwrap();
        let o = Mu2Options::default();
        let xi = 1.0;
        let c2 = c2_curve(xi, &p).unwrap();
        let gap = c2 - p.lambda;
        let low = classify_inner(xi, p.lambda + 1e-6 * gap, &p, &o).unwrap();
        assert_eq!(low.class, ShotClass::Undershoot);
        let high = classify_inner(xi, c2 - 1e-6 * gap, &p, &o).unwrap();
        assert_eq!(high.class, ShotClass::Overshoot);
    }
}
