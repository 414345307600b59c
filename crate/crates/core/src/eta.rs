//! Reactive-scale profile `eta'' = (2 kappa z eta + eta²)^n`, `eta'(0) = -kappa`,
//! `eta(∞) = 0`, found by shooting on `eta(0)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_lsq;
use crate::ode::{
    bisect_shoot, integrate, IntegratorOptions, LeftEnd, Node, PowerTerm, Profile, RhsFn,
    RightTail, ShootingOutcome, ShotClass, Termination,
};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaOptions {
    /// End of the tabulated grid.
    pub z_max: f64,
    /// How far a trial shot is followed before it is called undecided.
    pub classify_span: f64,
    /// Bisection width on `eta(0)`. Zero runs to the floating point floor.
    pub bisect_tol: f64,
    pub ode_tol: f64,
    /// Largest spacing of the stored grid.
    pub node_spacing: f64,
}

impl EtaOptions {
    pub fn for_params(p: &ModelParams) -> Self {
        Self {
            z_max: 30f64.max(10.0 * p.lambda.powf(1.0 / p.delta)),
            classify_span: 500.0,
            bisect_tol: 0.0,
            ode_tol: 1e-12,
            node_spacing: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtaSolution {
    pub n: u32,
    pub eta0: f64,
    /// Final bisection bracket `(undershoot, overshoot)`.
    pub bracket: (f64, f64),
    pub profile: Profile,
    /// `(eta0, -kappa, eta2, 0, -eta4)`.
    pub taylor: [f64; 5],
    /// `eta2` from a polynomial fit of the solved profile near 0.
    pub eta2_fit: f64,
    pub lambda_inf: f64,
    pub tail_fit_rms: f64,
    /// Magnitude of the growing-mode component removed at `z_max`.
    pub growing_mode_removed: f64,
    pub shots: usize,
    pub options: EtaOptions,
}

impl EtaSolution {
    pub fn eta2(&self) -> f64 {
        self.taylor[2]
    }

    pub fn eta4(&self) -> f64 {
        -self.taylor[4]
    }

    /// Reattach the governing equation after deserialisation.
    pub fn attach(&mut self, p: &ModelParams) {
        self.profile.set_rhs(eta_rhs(p));
    }
}

/// `(2 kappa z eta + eta²)^n`.
pub fn eta_rhs(p: &ModelParams) -> RhsFn {
    let n = p.n as i32;
    let k2 = 2.0 * p.kappa;
    Arc::new(move |z, e, _| (k2 * z * e + e * e).powi(n))
}

/// `(eta2, eta4)` with `eta2 = eta0^(2n)/2` and
/// `eta4 = (n/12) eta0^(2n-2) (kappa² - eta0^(2n+1))`.
pub fn eta_taylor(p: &ModelParams, eta0: f64) -> (f64, f64) {
    let n = p.n as i32;
    let eta2 = 0.5 * eta0.powi(2 * n);
    let eta4 =
        f64::from(p.n) / 12.0 * eta0.powi(2 * n - 2) * (p.kappa * p.kappa - eta0.powi(2 * n + 1));
    (eta2, eta4)
}

/// Classify one trial `eta(0) = rho`: reaching zero is an undershoot, a
/// turning point or blow-up is an overshoot.
pub fn classify_eta_shot(
    rho: f64,
    p: &ModelParams,
    span: f64,
    opts: &IntegratorOptions,
) -> Result<ShootingOutcome> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!(
            "shooting parameter {rho} must be positive"
        )));
    }
    let rhs = eta_rhs(p);
    let hits_zero = |_: f64, y: f64, _: f64| y;
    let turns = |_: f64, _: f64, dy: f64| dy;
    let tr = integrate(
        |z, y, dy| rhs(z, y, dy),
        0.0,
        rho,
        -p.kappa,
        span,
        &[&hits_zero, &turns],
        opts,
    )?;
    let out = match tr.termination {
        Termination::Event { index: 0, x } => ShootingOutcome::new(ShotClass::Undershoot, Some(x)),
        Termination::Event { x, .. } => ShootingOutcome::new(ShotClass::Overshoot, Some(x)),
        Termination::Overflow { x } => ShootingOutcome::new(ShotClass::Overshoot, Some(x)),
        Termination::StepUnderflow { x } => {
            let class = if tr.last().dy > 0.0 {
                ShotClass::Overshoot
            } else {
                ShotClass::Undecided
            };
            ShootingOutcome::new(class, Some(x))
        }
        Termination::Reached => ShootingOutcome::new(ShotClass::Undecided, None),
    };
    Ok(ShootingOutcome {
        trajectory: Some(tr),
        ..out
    })
}

/// Decay exponent of the second homogeneous solution of the linearised tail
/// equation, `(sqrt(4 n delta (delta+1) + 1) - 1)/2`.
pub fn homogeneous_exponent(p: &ModelParams) -> f64 {
    0.5 * ((4.0 * f64::from(p.n) * p.delta_delta1() + 1.0).sqrt() - 1.0)
}

/// Tail exponents beyond the leading `lambda z^-delta`: `(fixed, fitted)`.
///
/// For `n <= 5` the particular `z^-(1+2 delta)` term sits close to the
/// homogeneous `z^-delta'` term and is entered with its closed-form
/// coefficient; only `lambda_inf` is fitted. For `n >= 6` the particular term
/// is `delta'` itself and the next homogeneous exponent is fitted alongside.
fn tail_layout(p: &ModelParams) -> (Vec<PowerTerm>, Vec<f64>) {
    let fixed = vec![PowerTerm {
        coeff: p.lambda,
        exponent: p.delta,
    }];
    let hom = homogeneous_exponent(p);
    if p.n <= 5 {
        let mut fixed = fixed;
        fixed.push(PowerTerm {
            coeff: p.lambda_p(),
            exponent: 1.0 + 2.0 * p.delta,
        });
        (fixed, vec![p.delta_prime, 2.0 * p.delta_prime - p.delta])
    } else {
        (fixed, vec![p.delta_prime, hom, 2.0 * hom - p.delta])
    }
}

fn shot_options(o: &EtaOptions) -> IntegratorOptions {
    IntegratorOptions::new(o.ode_tol)
        .atol(1e-24)
        .h_max(o.node_spacing)
}

pub fn solve_eta(p: &ModelParams) -> Result<EtaSolution> {
    solve_eta_with(p, &EtaOptions::for_params(p))
}

pub fn solve_eta_with(p: &ModelParams, o: &EtaOptions) -> Result<EtaSolution> {
    // Shots and the final profile must use identical step control: the
    // bisection balances the growing mode of the discrete trajectory, and a
    // different step sequence would reintroduce it.
    let opts = shot_options(o);
    let lo = 1e-3;
    let hi = 2.0 * p.kappa.powf(1.0 / (2.0 * f64::from(p.n) + 1.0));
    let mut span = o.classify_span;
    let res = match bisect_shoot(
        |r| classify_eta_shot(r, p, span, &opts),
        lo,
        hi,
        o.bisect_tol,
    ) {
        Ok(r) => r,
        Err(Error::BracketInvalid { .. }) => {
            span *= 4.0;
            bisect_shoot(
                |r| classify_eta_shot(r, p, span, &opts),
                lo,
                hi,
                o.bisect_tol,
            )?
        }
        Err(e) => return Err(e),
    };
    // The undershoot end stays positive over the grid.
    let (under, over) = if res.lo_class == ShotClass::Undershoot {
        (res.lo, res.hi)
    } else {
        (res.hi, res.lo)
    };
    let eta0 = under;
    let rhs = eta_rhs(p);
    let tr = integrate(
        |z, y, dy| rhs(z, y, dy),
        0.0,
        eta0,
        -p.kappa,
        o.z_max,
        &[],
        &opts,
    )?;
    if tr.termination != Termination::Reached {
        return Err(Error::Integration {
            x: tr.last().x,
            reason: format!("final eta profile stopped early: {:?}", tr.termination),
        });
    }
    let nodes: Vec<Node> = tr.samples.iter().map(|&s| s.into()).collect();
    if let Some(bad) = nodes.iter().find(|nd| !(nd.f > 0.0 && nd.df < 0.0)) {
        return Err(Error::Consistency(format!(
            "eta not positive and decreasing at z = {}",
            bad.x
        )));
    }

    // Tail: least squares on the upper half of the grid.
    let (mut terms, free) = tail_layout(p);
    let window: Vec<&Node> = nodes.iter().filter(|nd| nd.x >= 0.5 * o.z_max).collect();
    let xs: Vec<f64> = window.iter().map(|nd| nd.x).collect();
    let ys: Vec<f64> = window
        .iter()
        .map(|nd| {
            nd.f - terms
                .iter()
                .map(|t| t.coeff * nd.x.powf(-t.exponent))
                .sum::<f64>()
        })
        .collect();
    // The last basis function absorbs the residual growing mode z^(p+)
    // left by the finite shooting precision; it is not part of the tail.
    let growing = -p.p_plus;
    let basis: Vec<Box<dyn Fn(f64) -> f64>> = free
        .iter()
        .chain(std::iter::once(&growing))
        .map(|&q| Box::new(move |z: f64| z.powf(-q)) as Box<dyn Fn(f64) -> f64>)
        .collect();
    let basis_refs: Vec<&dyn Fn(f64) -> f64> = basis.iter().map(|b| b.as_ref()).collect();
    let fit = linear_lsq(&xs, &ys, &basis_refs)?;
    for (&q, &c) in free.iter().zip(&fit.coeffs) {
        terms.push(PowerTerm {
            coeff: c,
            exponent: q,
        });
    }
    let lambda_inf = fit.coeffs[0];
    // Bisection pins eta(0) only to an ulp, which leaves a growing-mode
    // component of a few ulps times h1(z) ~ z^(p+) in the grid. Remove the
    // fitted amount; near the origin it is far below rounding.
    let c_grow = *fit.coeffs.last().expect("growing-mode coefficient");
    let mut nodes = nodes;
    for nd in nodes.iter_mut() {
        let g = c_grow * nd.x.powf(p.p_plus);
        nd.f -= g;
        if nd.x > 0.0 {
            nd.df -= p.p_plus * g / nd.x;
        }
    }
    let growing_mode_removed = (c_grow * o.z_max.powf(p.p_plus)).abs();

    let profile = Profile::new("eta", nodes, LeftEnd::Grid, RightTail::PowerLaws { terms })?
        .with_rhs(rhs.clone());

    let (eta2, eta4) = eta_taylor(p, eta0);
    let eta2_fit = fit_eta2(p, eta0, o.ode_tol)?;
    Ok(EtaSolution {
        n: p.n,
        eta0,
        bracket: (under, over),
        profile,
        taylor: [eta0, -p.kappa, eta2, 0.0, -eta4],
        eta2_fit,
        lambda_inf,
        tail_fit_rms: fit.rms,
        growing_mode_removed,
        shots: res.history.len(),
        options: *o,
    })
}

/// Quadratic coefficient of `eta` at 0 from a polynomial fit of a finely
/// sampled trajectory on `[0, 0.2]`.
fn fit_eta2(p: &ModelParams, eta0: f64, tol: f64) -> Result<f64> {
    let rhs = eta_rhs(p);
    let opts = IntegratorOptions::new(tol).atol(1e-24).h_max(2e-3);
    let tr = integrate(
        |z, y, dy| rhs(z, y, dy),
        0.0,
        eta0,
        -p.kappa,
        0.2,
        &[],
        &opts,
    )?;
    let xs: Vec<f64> = tr.samples.iter().skip(1).map(|s| s.x).collect();
    let ys: Vec<f64> = tr
        .samples
        .iter()
        .skip(1)
        .map(|s| s.y - eta0 + p.kappa * s.x)
        .collect();
    let b2 = |z: f64| z * z;
    let b3 = |z: f64| z.powi(3);
    let b4 = |z: f64| z.powi(4);
    let b5 = |z: f64| z.powi(5);
    let b6 = |z: f64| z.powi(6);
    let fit = linear_lsq(&xs, &ys, &[&b2, &b3, &b4, &b5, &b6])?;
    Ok(fit.coeffs[0])
}
