//! Second reactive correction `phi2 = -lambda0 z^(2-delta) + h`, where
//!
//! `h'' + gamma eta + alpha z eta' = n T^(n-1) ((2 kappa z + 2 eta) h + 2 kappa3 z³ eta)`,
//! `T = 2 kappa z eta + eta²`, `h'(0) = 0`, `h - lambda0 z^(2-delta) -> 0`.
//!
//! Written as `h'' - q h = f`. The production solution shoots on `h(0)`; the
//! variation-of-parameters construction from the homogeneous pair is kept as
//! an independent check.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eta::EtaSolution;
use crate::fit::{linear_lsq, loglog_slope};
use crate::ode::{
    bisect_shoot, integrate, quad_with, IntegratorOptions, LeftEnd, Node, Order, PowerTerm,
    Profile, QuadOptions, RhsFn, RightTail, ShootingOutcome, ShotClass, Termination,
};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi2Options {
    pub z_max: f64,
    /// The homogeneous pair and the quadratures run to `extend * z_max`, so
    /// that truncating `∫ 1/h1²` costs nothing measurable.
    pub extend: f64,
    pub ode_tol: f64,
    pub quad_tol: f64,
    pub node_spacing: f64,
    pub bisect_tol: f64,
}

impl Phi2Options {
    pub fn for_eta(eta: &EtaSolution) -> Self {
        Self {
            z_max: eta.options.z_max,
            extend: 4.0,
            ode_tol: 1e-12,
            quad_tol: 1e-12,
            node_spacing: 0.02,
            bisect_tol: 0.0,
        }
    }
}

/// `q(z)` and `f(z)` built from a solved `eta`.
#[derive(Debug, Clone)]
pub struct HCoefficients {
    eta: Profile,
    n: i32,
    kappa: f64,
    kappa3: f64,
    gamma: f64,
    alpha: f64,
}

impl HCoefficients {
    pub fn new(p: &ModelParams, eta: &EtaSolution) -> Self {
        Self {
            eta: eta.profile.clone(),
            n: p.n as i32,
            kappa: p.kappa,
            kappa3: p.kappa3,
            gamma: p.gamma,
            alpha: p.alpha,
        }
    }

    /// `q = n T^(n-1) (2 kappa z + 2 eta)`.
    pub fn q(&self, z: f64) -> f64 {
        let e = self.eta.value(z);
        let t = 2.0 * self.kappa * z * e + e * e;
        f64::from(self.n) * t.powi(self.n - 1) * (2.0 * self.kappa * z + 2.0 * e)
    }

    /// `f = -gamma eta - alpha z eta' + n T^(n-1) 2 kappa3 z³ eta`.
    pub fn f(&self, z: f64) -> f64 {
        let e = self.eta.value(z);
        let de = self.eta.slope(z);
        let t = 2.0 * self.kappa * z * e + e * e;
        -self.gamma * e - self.alpha * z * de
            + f64::from(self.n) * t.powi(self.n - 1) * 2.0 * self.kappa3 * z.powi(3) * e
    }
}

/// `h'' = q h` for the homogeneous pair.
pub fn homogeneous_rhs(c: &Arc<HCoefficients>) -> RhsFn {
    let c = Arc::clone(c);
    Arc::new(move |z, h, _| c.q(z) * h)
}

/// `h'' = q h + f`.
pub fn h_rhs(c: &Arc<HCoefficients>) -> RhsFn {
    let c = Arc::clone(c);
    Arc::new(move |z, h, _| c.q(z) * h + c.f(z))
}

/// Quadrature over one grid cell with an absolute floor of `tol` times
/// `magnitude`, a bound on the size of the integrand's ingredients. The
/// floor matters where the integrand passes through zero.
fn cell_quad<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, tol: f64, magnitude: f64) -> Result<f64> {
    let opts = QuadOptions::new(tol).abs_tol(tol * (b - a) * magnitude + f64::MIN_POSITIVE);
    quad_with(g, a, b, &opts).map(|r| r.value)
}

fn options(o: &Phi2Options) -> IntegratorOptions {
    IntegratorOptions::new(o.ode_tol)
        .atol(1e-20)
        .h_max(o.node_spacing)
}

#[derive(Debug, Clone)]
pub struct HomogeneousPair {
    /// `h1(0) = 1`, `h1'(0) = 0`.
    pub h1: Profile,
    /// `h2 = h1 ∫_0^z 1/h1²`, tabulated on the nodes of `h1`.
    pub h2: Profile,
    /// `K(z) = ∫_z^∞ 1/h1²` on the nodes of `h1`.
    pub k: Vec<f64>,
    /// `d = ∫_0^∞ 1/h1²`.
    pub d: f64,
    /// Tail amplitude, `h1 ~ d1 z^(p+)`.
    pub d1: f64,
    /// `d2 = (1/d1)² / (2 p+ - 1)`.
    pub d2: f64,
    /// Largest `|h1 h2' - h1' h2 - 1| / (1 + |h1 h2'| + |h1' h2|)` at 20
    /// points of `(0, z_max)`, with `h2` integrated from `h2(0) = 0`,
    /// `h2'(0) = 1` as an independent solution. The two products reach
    /// 1e12 near `z_max`, so only the scaled defect is meaningful there.
    pub wronskian_error: f64,
    /// The same defect without scaling.
    pub wronskian_error_abs: f64,
    /// Largest relative gap between the integrated `h2` and the quotient
    /// formula on `[0, z_max]`.
    pub h2_formula_gap: f64,
}

/// The 20 deterministic sample points used for Wronskian checks: a
/// golden-ratio sequence on `(0, z_max)`.
pub fn wronskian_points(z_max: f64) -> Vec<f64> {
    let g = 0.618_033_988_749_894_9;
    (1..=20).map(|k| ((k as f64 * g).fract()) * z_max).collect()
}

pub fn solve_h1_h2(p: &ModelParams, eta: &EtaSolution, o: &Phi2Options) -> Result<HomogeneousPair> {
    let coeffs = Arc::new(HCoefficients::new(p, eta));
    let rhs = homogeneous_rhs(&coeffs);
    let z_end = o.extend * o.z_max;
    let tr = integrate(
        |z, h, dh| rhs(z, h, dh),
        0.0,
        1.0,
        0.0,
        z_end,
        &[],
        &options(o),
    )?;
    if tr.termination != Termination::Reached {
        return Err(Error::Integration {
            x: tr.last().x,
            reason: format!("h1 stopped early: {:?}", tr.termination),
        });
    }
    let nodes: Vec<Node> = tr.samples.iter().map(|&s| s.into()).collect();

    // d1 from the upper quarter, with the leading relative correction
    // z^(delta - delta') of the potential q.
    let lo = 0.75 * z_end;
    let pts: Vec<&Node> = nodes.iter().filter(|nd| nd.x >= lo).collect();
    let xs: Vec<f64> = pts.iter().map(|nd| nd.x).collect();
    let ys: Vec<f64> = pts.iter().map(|nd| nd.f * nd.x.powf(-p.p_plus)).collect();
    let corr = p.delta_prime - p.delta;
    let one = |_: f64| 1.0;
    let c1 = move |z: f64| z.powf(-corr);
    let fit = linear_lsq(&xs, &ys, &[&one, &c1])?;
    let d1 = fit.coeffs[0];
    let d2 = 1.0 / (d1 * d1) / (2.0 * p.p_plus - 1.0);

    let h1 = Profile::new(
        "h1",
        nodes,
        LeftEnd::Grid,
        RightTail::PowerLaws {
            terms: vec![PowerTerm {
                coeff: d1,
                exponent: -p.p_plus,
            }],
        },
    )?
    .with_rhs(rhs.clone());

    // K by backward accumulation from the analytic tail beyond z_end.
    let nds = h1.nodes();
    let inv2 = |z: f64| {
        let v = h1.value(z);
        1.0 / (v * v)
    };
    let mut k = vec![0.0; nds.len()];
    let last = nds.len() - 1;
    k[last] = d2 * nds[last].x.powf(1.0 - 2.0 * p.p_plus);
    for i in (0..last).rev() {
        let mag = inv2(nds[i].x);
        k[i] = k[i + 1] + cell_quad(inv2, nds[i].x, nds[i + 1].x, o.quad_tol, mag)?;
    }
    let d = k[0];

    let h2_nodes: Vec<Node> = nds
        .iter()
        .zip(&k)
        .map(|(nd, &kk)| {
            let j = d - kk;
            Node {
                x: nd.x,
                f: nd.f * j,
                df: nd.df * j + 1.0 / nd.f,
            }
        })
        .collect();
    let h2 = Profile::new(
        "h2",
        h2_nodes,
        LeftEnd::Grid,
        RightTail::PowerLaws {
            terms: vec![PowerTerm {
                coeff: d * d1,
                exponent: -p.p_plus,
            }],
        },
    )?
    .with_rhs(rhs.clone());

    // Independent h2 from its own initial data.
    let tr2 = integrate(
        |z, h, dh| rhs(z, h, dh),
        0.0,
        0.0,
        1.0,
        o.z_max,
        &[],
        &options(o),
    )?;
    let h2_ode = Profile::new(
        "h2_ode",
        tr2.samples.iter().map(|&s| s.into()).collect(),
        LeftEnd::Grid,
        RightTail::None,
    )?;
    let mut wronskian_error = 0.0f64;
    let mut wronskian_error_abs = 0.0f64;
    for z in wronskian_points(o.z_max) {
        let a = h1.value(z) * h2_ode.slope(z);
        let b = h1.slope(z) * h2_ode.value(z);
        let defect = (a - b - 1.0).abs();
        wronskian_error = wronskian_error.max(defect / (1.0 + a.abs() + b.abs()));
        wronskian_error_abs = wronskian_error_abs.max(defect);
    }
    let mut h2_formula_gap = 0.0f64;
    for nd in h2_ode.nodes().iter().filter(|nd| nd.x > 0.0) {
        let gap = (h2.value(nd.x) - nd.f).abs() / nd.f.abs();
        h2_formula_gap = h2_formula_gap.max(gap);
    }

    Ok(HomogeneousPair {
        h1,
        h2,
        k,
        d,
        d1,
        d2,
        wronskian_error,
        wronskian_error_abs,
        h2_formula_gap,
    })
}

/// Particular solution `h_p = c1 h1 + c2 h2` with `c1 = -∫_0^z h2 f` and
/// `c2 = ∫_0^z h1 f`, on the nodes of `h1`.
///
/// Substituting `h2 = h1 (d - K)` gives `h_p = h1 (A - K B)` with
/// `A = ∫_0^z h1 f K` and `B = ∫_0^z h1 f`; that form is evaluated because
/// it avoids subtracting two terms of size `z^(2 p+)`. Returns the profile and
/// `A` at the last node.
pub fn particular_solution(
    pair: &HomogeneousPair,
    p: &ModelParams,
    eta: &EtaSolution,
    o: &Phi2Options,
) -> Result<(Profile, f64)> {
    let coeffs = Arc::new(HCoefficients::new(p, eta));
    let h1 = &pair.h1;
    let nds = h1.nodes();
    // K between nodes: K(z) = K(z_i) - ∫_{z_i}^z 1/h1², which needs its own
    // quadrature; instead integrate h1 f K with K interpolated through the
    // identity K' = -1/h1² by a cubic Hermite segment.
    let kseg = |i: usize, z: f64| {
        let a = Node {
            x: nds[i].x,
            f: pair.k[i],
            df: -1.0 / (nds[i].f * nds[i].f),
        };
        let b = Node {
            x: nds[i + 1].x,
            f: pair.k[i + 1],
            df: -1.0 / (nds[i + 1].f * nds[i + 1].f),
        };
        crate::ode::Hermite { a, b }.value(z)
    };
    let mut a_acc = 0.0;
    let mut b_acc = 0.0;
    let mut out = Vec::with_capacity(nds.len());
    out.push(Node {
        x: nds[0].x,
        f: 0.0,
        df: 0.0,
    });
    for i in 0..nds.len() - 1 {
        let (za, zb) = (nds[i].x, nds[i + 1].x);
        // f is a sum of terms of the size of eta.
        let mag = nds[i + 1].f * eta.profile.value(za);
        a_acc += cell_quad(
            |z| h1.value(z) * coeffs.f(z) * kseg(i, z),
            za,
            zb,
            o.quad_tol,
            mag * pair.k[i],
        )?;
        b_acc += cell_quad(|z| h1.value(z) * coeffs.f(z), za, zb, o.quad_tol, mag)?;
        let nd = nds[i + 1];
        let kk = pair.k[i + 1];
        out.push(Node {
            x: zb,
            f: nd.f * (a_acc - kk * b_acc),
            df: nd.df * (a_acc - kk * b_acc) + b_acc / nd.f,
        });
    }
    let hp = Profile::new("h_p", out, LeftEnd::Grid, RightTail::None)?.with_rhs(h_rhs(&coeffs));
    Ok((hp, a_acc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HInfinity {
    pub value: f64,
    /// RMS of the extrapolation fit relative to `|value|`.
    pub residual: f64,
}

/// `h_inf = lim h_p/h1` from the last 10% of the common grid, extrapolated
/// against the known correction `z^(2 - delta - p+)`.
pub fn extract_h_infinity(
    zs: &[f64],
    hp: &[f64],
    h1: &[f64],
    p: &ModelParams,
) -> Result<HInfinity> {
    if zs.len() != hp.len() || zs.len() != h1.len() || zs.len() < 10 {
        return Err(Error::Fit(
            "h_inf extraction needs matching grids of >= 10 points".into(),
        ));
    }
    let z_last = zs[zs.len() - 1];
    let start = zs.partition_point(|&z| z < 0.9 * z_last);
    let xs = &zs[start..];
    let ratios: Vec<f64> = (start..zs.len()).map(|i| hp[i] / h1[i]).collect();
    let e = 2.0 - p.delta - p.p_plus;
    let one = |_: f64| 1.0;
    let corr = move |z: f64| z.powf(e);
    let fit = linear_lsq(xs, &ratios, &[&one, &corr])?;
    let value = fit.coeffs[0];
    let residual = fit.rms / value.abs().max(f64::MIN_POSITIVE);
    if !value.is_finite() {
        return Err(Error::Fit("h_inf extrapolation diverged".into()));
    }
    Ok(HInfinity { value, residual })
}

/// Linear response of `h` to a term `c z^-s` in the `eta` tail: the forced
/// term is `c response(s) z^(2-s)`.
pub fn response(p: &ModelParams, s: f64) -> f64 {
    let nf = f64::from(p.n);
    let dd1 = p.delta_delta1();
    let k3k = p.kappa3 / p.kappa;
    (-p.gamma + p.alpha * s + nf * nf * dd1 * k3k + nf * (nf - 1.0) * dd1 * p.lambda0 / p.lambda)
        / indicial(p, s)
}

/// Coefficient of `z^(1 - 2 delta)` produced by the `eta²` part of `T` and
/// `q` acting on the leading `lambda z^-delta`.
fn quadratic_forcing(p: &ModelParams) -> f64 {
    let nf = f64::from(p.n);
    let k3k = p.kappa3 / p.kappa;
    nf * p.delta_delta1() * p.lambda / (2.0 * p.kappa)
        * ((nf - 1.0) * p.lambda * k3k + (nf + 1.0) * p.lambda0)
        / indicial(p, 1.0 + 2.0 * p.delta)
}

/// Coefficient of the `z^(1 - 2 delta)` term in `h - lambda0 z^(2-delta)`
/// for `n <= 5`, where `eta` carries `lambda_p z^-(1+2 delta)`. For `n >= 6`
/// that exponent is `2 - delta'` and the term is part of `lambda'`, so zero
/// is returned.
pub fn forced_tail_coefficient(p: &ModelParams) -> f64 {
    if p.n > 5 {
        return 0.0;
    }
    p.lambda_p() * response(p, 1.0 + 2.0 * p.delta) + quadratic_forcing(p)
}

/// Coefficient of `z^(2-delta')` forced by `lambda_inf z^-delta'` in `eta`.
/// Used as a cross-check of the fitted `lambda'`.
pub fn predicted_lambda_prime(p: &ModelParams, lambda_inf: f64) -> f64 {
    let mut c = lambda_inf * response(p, p.delta_prime);
    if p.n > 5 {
        c += quadratic_forcing(p);
    }
    c
}

/// `(2 - s)(1 - s) - n delta (delta + 1)`.
fn indicial(p: &ModelParams, s: f64) -> f64 {
    (2.0 - s) * (1.0 - s) - f64::from(p.n) * p.delta_delta1()
}

/// Known tail of `h` apart from the fitted `lambda'` term: `lambda0`, the
/// quadratic forcing for `n <= 5`, and the linear response to the `eta`
/// tail terms that are not products of others, except `delta'` (`lambda_p`
/// for `n <= 5`, the next homogeneous exponent for `n >= 6`).
fn fixed_tail(p: &ModelParams, eta: &EtaSolution) -> Vec<PowerTerm> {
    let mut t = vec![PowerTerm {
        coeff: p.lambda0,
        exponent: p.delta - 2.0,
    }];
    if p.n <= 5 {
        t.push(PowerTerm {
            coeff: quadratic_forcing(p),
            exponent: 2.0 * p.delta - 1.0,
        });
    }
    if let RightTail::PowerLaws { terms } = &eta.profile.right {
        for term in terms {
            let s = term.exponent;
            let primary = s == 1.0 + 2.0 * p.delta || s == crate::eta::homogeneous_exponent(p);
            if !primary || s == p.delta_prime {
                continue;
            }
            t.push(PowerTerm {
                coeff: term.coeff * response(p, s),
                exponent: s - 2.0,
            });
        }
    }
    t
}

fn tail_sum(terms: &[PowerTerm], z: f64) -> (f64, f64) {
    terms.iter().fold((0.0, 0.0), |(v, dv), t| {
        (
            v + t.coeff * z.powf(-t.exponent),
            dv - t.exponent * t.coeff * z.powf(-t.exponent - 1.0),
        )
    })
}

/// Shot from `(0, h0, 0)` to `z_max`, classified by the sign of the
/// two-term tail condition `Z k' - (2 - delta') k` with `k = h - known tail`.
/// That condition holds for the decaying solution and is increasing in `h0`.
pub fn classify_h_shot(
    h0: f64,
    p: &ModelParams,
    coeffs: &Arc<HCoefficients>,
    known: &[PowerTerm],
    o: &Phi2Options,
) -> Result<ShootingOutcome> {
    let rhs = h_rhs(coeffs);
    let tr = integrate(
        |z, h, dh| rhs(z, h, dh),
        0.0,
        h0,
        0.0,
        o.z_max,
        &[],
        &options(o),
    )?;
    if tr.termination != Termination::Reached {
        let class = if tr.last().y > 0.0 {
            ShotClass::Overshoot
        } else {
            ShotClass::Undershoot
        };
        return Ok(ShootingOutcome::new(class, Some(tr.last().x)));
    }
    let g = tail_condition(p, known, tr.last().x, tr.last().y, tr.last().dy);
    let class = if g < 0.0 {
        ShotClass::Undershoot
    } else {
        ShotClass::Overshoot
    };
    Ok(ShootingOutcome {
        class,
        event_x: None,
        trajectory: Some(tr),
    })
}

fn tail_condition(p: &ModelParams, known: &[PowerTerm], z: f64, h: f64, dh: f64) -> f64 {
    let (v, dv) = tail_sum(known, z);
    z * (dh - dv) - (2.0 - p.delta_prime) * (h - v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub h_inf: f64,
    pub h_inf_residual: f64,
    /// `A(∞)`, the direct value of `h_inf` from the quadrature.
    pub h_inf_direct: f64,
    /// `sup |h_shoot - h_vp| / sup |h_shoot|` on `[0, z_max/4]`.
    pub agreement: f64,
    pub d: f64,
    pub d1: f64,
    pub d2: f64,
    pub wronskian_error: f64,
    pub wronskian_error_abs: f64,
    pub h2_formula_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phi2Solution {
    pub n: u32,
    pub lambda0: f64,
    pub delta: f64,
    pub h0: f64,
    /// `h''(0)/2 = (q(0) h0 + f(0))/2`.
    pub h2: f64,
    /// Linear coefficient from a polynomial fit near 0.
    pub h1_fit: f64,
    pub h2_fit: f64,
    pub profile: Profile,
    pub lambda_prime: f64,
    pub lambda_prime_predicted: f64,
    /// Log-log slope on `[z_max/2, z_max]` of `h` minus its known tail terms
    /// (`lambda0 z^(2-delta)` and the terms forced by the `eta` tail).
    pub tail_slope: f64,
    pub report: ConstructionReport,
    pub shots: usize,
    pub options: Phi2Options,
}

impl Phi2Solution {
    pub fn attach(&mut self, p: &ModelParams, eta: &EtaSolution) {
        let c = Arc::new(HCoefficients::new(p, eta));
        self.profile.set_rhs(h_rhs(&c));
    }

    pub fn h(&self, z: f64, order: Order) -> Result<f64> {
        self.profile.eval(z, order)
    }

    /// `phi2 = -lambda0 z^(2-delta) + h`.
    pub fn phi2(&self, z: f64, order: Order) -> Result<f64> {
        let e = 2.0 - self.delta;
        let h = self.profile.eval(z, order)?;
        let s = match order {
            Order::Value => z.powf(e),
            Order::First => e * z.powf(e - 1.0),
            Order::Second => e * (e - 1.0) * z.powf(e - 2.0),
        };
        // z^0 and its derivatives at z = 0 are 1, 0, 0 by convention.
        let s = if e == 0.0 {
            if order == Order::Value {
                1.0
            } else {
                0.0
            }
        } else {
            s
        };
        Ok(h - self.lambda0 * s)
    }
}

pub fn solve_h(p: &ModelParams, eta: &EtaSolution) -> Result<Phi2Solution> {
    solve_h_with(p, eta, &Phi2Options::for_eta(eta))
}

pub fn solve_h_with(p: &ModelParams, eta: &EtaSolution, o: &Phi2Options) -> Result<Phi2Solution> {
    if eta.n != p.n {
        return Err(Error::Config(format!(
            "eta solved for n = {}, parameters for n = {}",
            eta.n, p.n
        )));
    }
    let coeffs = Arc::new(HCoefficients::new(p, eta));

    let known = fixed_tail(p, eta);

    // Production: shooting. The problem is linear in h0, so any bracket
    // that straddles the root works; widen until it does.
    let mut half = 1.0;
    let res = loop {
        match bisect_shoot(
            |h0| classify_h_shot(h0, p, &coeffs, &known, o),
            -half,
            half,
            o.bisect_tol,
        ) {
            Ok(r) => break r,
            Err(Error::BracketInvalid { .. }) if half < 1e6 => half *= 10.0,
            Err(e) => return Err(e),
        }
    };
    let h0 = res.root;
    let rhs = h_rhs(&coeffs);
    let tr = integrate(
        |z, h, dh| rhs(z, h, dh),
        0.0,
        h0,
        0.0,
        o.z_max,
        &[],
        &options(o),
    )?;
    let nodes: Vec<Node> = tr.samples.iter().map(|&s| s.into()).collect();

    // Tail: lambda' on the upper half of the grid, with the next decaying
    // homogeneous exponent alongside.
    let mut terms = known.clone();
    let window: Vec<&Node> = nodes.iter().filter(|nd| nd.x >= 0.5 * o.z_max).collect();
    let xs: Vec<f64> = window.iter().map(|nd| nd.x).collect();
    let ks: Vec<f64> = window
        .iter()
        .map(|nd| nd.f - tail_sum(&terms, nd.x).0)
        .collect();
    let e1 = 2.0 - p.delta_prime;
    let e2 = p.p_minus;
    let b1 = move |z: f64| z.powf(e1);
    let b2 = move |z: f64| z.powf(e2);
    let fit = linear_lsq(&xs, &ks, &[&b1, &b2])?;
    let lambda_prime = fit.coeffs[0];
    // The continuation itself matches value and slope at the last node.
    let end = *nodes.last().expect("non-empty trajectory");
    let (kv, kd) = {
        let (v, dv) = tail_sum(&terms, end.x);
        (end.f - v, end.df - dv)
    };
    let (z, a11, a12) = (end.x, end.x.powf(e1), end.x.powf(e2));
    let (a21, a22) = (e1 * a11 / z, e2 * a12 / z);
    let det = a11 * a22 - a12 * a21;
    let c1 = (kv * a22 - a12 * kd) / det;
    let c2 = (a11 * kd - a21 * kv) / det;
    terms.push(PowerTerm {
        coeff: c1,
        exponent: -e1,
    });
    terms.push(PowerTerm {
        coeff: c2,
        exponent: -e2,
    });

    let raw: Vec<f64> = window
        .iter()
        .map(|nd| (nd.f - tail_sum(&known, nd.x).0).abs())
        .collect();
    let tail_slope = loglog_slope(&xs, &raw)?.slope;

    let profile = Profile::new("h", nodes, LeftEnd::Grid, RightTail::PowerLaws { terms })?
        .with_rhs(rhs.clone());

    // Taylor data at the origin.
    let h2 = 0.5 * (coeffs.q(0.0) * h0 + coeffs.f(0.0));
    let fine = integrate(
        |z, h, dh| rhs(z, h, dh),
        0.0,
        h0,
        0.0,
        0.2,
        &[],
        &IntegratorOptions::new(o.ode_tol).atol(1e-20).h_max(2e-3),
    )?;
    let fx: Vec<f64> = fine.samples.iter().skip(1).map(|s| s.x).collect();
    let fy: Vec<f64> = fine.samples.iter().skip(1).map(|s| s.y - h0).collect();
    let m1 = |z: f64| z;
    let m2 = |z: f64| z * z;
    let m3 = |z: f64| z.powi(3);
    let m4 = |z: f64| z.powi(4);
    let m5 = |z: f64| z.powi(5);
    let tfit = linear_lsq(&fx, &fy, &[&m1, &m2, &m3, &m4, &m5])?;

    // Validation: variation of parameters.
    let pair = solve_h1_h2(p, eta, o)?;
    let (hp, a_inf) = particular_solution(&pair, p, eta, o)?;
    let zs: Vec<f64> = hp.nodes().iter().map(|nd| nd.x).collect();
    let cut = zs.partition_point(|&z| z <= o.z_max);
    let hpv: Vec<f64> = hp.nodes()[..cut].iter().map(|nd| nd.f).collect();
    let h1v: Vec<f64> = pair.h1.nodes()[..cut].iter().map(|nd| nd.f).collect();
    let hinf = extract_h_infinity(&zs[..cut], &hpv, &h1v, p)?;

    let quarter = 0.25 * o.z_max;
    let mut sup_diff = 0.0f64;
    let mut sup_h = 0.0f64;
    for (nd_p, nd_1) in hp.nodes().iter().zip(pair.h1.nodes()) {
        if nd_p.x > quarter {
            break;
        }
        let h_vp = nd_p.f - hinf.value * nd_1.f;
        let h_s = profile.value(nd_p.x);
        sup_diff = sup_diff.max((h_vp - h_s).abs());
        sup_h = sup_h.max(h_s.abs());
    }
    let agreement = sup_diff / sup_h;
    if !(agreement < 1e-3) {
        return Err(Error::Consistency(format!(
            "shooting and variation of parameters disagree by {agreement:e} on [0, {quarter}]"
        )));
    }

    Ok(Phi2Solution {
        n: p.n,
        lambda0: p.lambda0,
        delta: p.delta,
        h0,
        h2,
        h1_fit: tfit.coeffs[0],
        h2_fit: tfit.coeffs[1],
        profile,
        lambda_prime,
        lambda_prime_predicted: predicted_lambda_prime(p, eta.lambda_inf),
        tail_slope,
        report: ConstructionReport {
            h_inf: hinf.value,
            h_inf_residual: hinf.residual,
            h_inf_direct: a_inf,
            agreement,
            d: pair.d,
            d1: pair.d1,
            d2: pair.d2,
            wronskian_error: pair.wronskian_error,
            wronskian_error_abs: pair.wronskian_error_abs,
            h2_formula_gap: pair.h2_formula_gap,
        },
        shots: res.history.len(),
        options: *o,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(p: &ModelParams, h_inf: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let zs: Vec<f64> = (0..=600).map(|i| i as f64 * 0.05).collect();
        let h1: Vec<f64> = zs.iter().map(|z| 1.0 + 0.05 * z.powf(p.p_plus)).collect();
        let hp: Vec<f64> = zs
            .iter()
            .zip(&h1)
            .map(|(z, h)| h_inf * h + p.lambda0 * z.powf(2.0 - p.delta))
            .collect();
        (zs, hp, h1)
    }

    #[test]
    fn h_inf_synthetic() {
        let p = ModelParams::derive(4).unwrap();
        let (zs, hp, h1) = synthetic(&p, 3.0);
        let r = extract_h_infinity(&zs, &hp, &h1, &p).unwrap();
        assert!((r.value - 3.0).abs() < 1e-9, "{}", r.value);
        let (zs, hp, h1) = synthetic(&p, 0.0);
        let r = extract_h_infinity(&zs, &hp, &h1, &p).unwrap();
        assert!(r.value.abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn forced_coefficient_zero_beyond_five() {
        let p = ModelParams::derive(6).unwrap();
        assert_eq!(forced_tail_coefficient(&p), 0.0);
        let p = ModelParams::derive(4).unwrap();
        assert!(forced_tail_coefficient(&p).is_finite());
    }

    #[test]
    fn golden_points_inside() {
        let pts = wronskian_points(30.0);
        assert_eq!(pts.len(), 20);
        assert!(pts.iter().all(|&z| z > 0.0 && z < 30.0));
    }
}
