//! The assembled large-time profile `v_inf`, the front limits, the
//! inhomogeneous term `I` left over when `v_inf` is put into the equation,
//! and the potential `V̂` of the linearised problem.
//!
//! With `y = x/sqrt(t)` and `z = x/t^alpha`,
//!
//! `v_inf = mu1(y) + t^-gamma eta(z) + t^-eps mu3(y) + t^-3gamma phi2(z)`.
//!
//! `mu3` carries `lambda0 y^(2-delta)` and `phi2` carries
//! `-lambda0 z^(2-delta)`; since `t^-eps y^(2-delta) = t^-3gamma z^(2-delta)`
//! the two cancel identically. Evaluation uses the regular pieces
//! `mu3 - lambda0 y^(2-delta)` and `h = phi2 + lambda0 z^(2-delta)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eta::{solve_eta, EtaSolution};
use crate::mu2::{solve_mu2, Mu2Solution};
use crate::ode::{quad_with, Order, QuadOptions};
use crate::params::ModelParams;
use crate::phi2::{solve_h, Phi2Solution};
use crate::special::mu1;

#[derive(Debug, Clone)]
pub struct AsymptoticBundle {
    pub params: ModelParams,
    pub eta: EtaSolution,
    pub mu2: Mu2Solution,
    pub phi2: Phi2Solution,
}

/// `phi = v_inf - mu1` and its time and space derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiParts {
    pub ubar: f64,
    pub phi: f64,
    pub phi_t: f64,
    pub phi_xx: f64,
}

impl AsymptoticBundle {
    pub fn new(
        params: ModelParams,
        mut eta: EtaSolution,
        mut mu2: Mu2Solution,
        mut phi2: Phi2Solution,
    ) -> Result<Self> {
        let n = params.n;
        for (name, m) in [("eta", eta.n), ("mu2", mu2.n), ("phi2", phi2.n)] {
            if m != n {
                return Err(Error::Config(format!(
                    "{name} profile solved for n = {m}, bundle has n = {n}"
                )));
            }
        }
        eta.attach(&params);
        mu2.attach(&params);
        phi2.attach(&params, &eta);
        let b = Self {
            params,
            eta,
            mu2,
            phi2,
        };
        b.check()?;
        Ok(b)
    }

    /// Solve all three profiles for `n`.
    pub fn solve(n: u32) -> Result<Self> {
        let p = ModelParams::derive(n)?;
        let eta = solve_eta(&p)?;
        let mu2 = solve_mu2(&p)?;
        let phi2 = solve_h(&p, &eta)?;
        Self::new(p, eta, mu2, phi2)
    }

    /// Cheap invariants, re-checked whenever a bundle is built or loaded.
    pub fn check(&self) -> Result<()> {
        if mu1(0.0) != 0.0 {
            return Err(Error::Consistency("mu1(0) != 0".into()));
        }
        if (mu1(40.0) - 1.0).abs() > 1e-15 {
            return Err(Error::Consistency("mu1(inf) != 1".into()));
        }
        let e0 = self.eta.profile.value(0.0);
        if !(e0 > 0.0) || (e0 - self.eta.eta0).abs() > 1e-12 * e0 {
            return Err(Error::Consistency(format!(
                "eta profile starts at {e0}, eta0 = {}",
                self.eta.eta0
            )));
        }
        for nd in self.eta.profile.nodes() {
            if !(nd.f > 0.0) || !nd.f.is_finite() || !nd.df.is_finite() {
                return Err(Error::Consistency(format!("eta invalid at z = {}", nd.x)));
            }
        }
        for nd in self.mu2.profile.nodes() {
            if !(nd.f > 0.0) || !nd.f.is_finite() {
                return Err(Error::Consistency(format!("m invalid at y = {}", nd.x)));
            }
        }
        for nd in self.phi2.profile.nodes() {
            if !nd.f.is_finite() || !nd.df.is_finite() {
                return Err(Error::Consistency(format!("h invalid at z = {}", nd.x)));
            }
        }
        Ok(())
    }

    fn check_t(t: f64) -> Result<()> {
        if !(t >= 1.0) || !t.is_finite() {
            return Err(Error::Domain(format!("need t >= 1, got {t}")));
        }
        Ok(())
    }

    /// `v_inf(x, t)`; even in `x`.
    pub fn v_infinity(&self, x: f64, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        let x = x.abs();
        let p = &self.params;
        let y = x / t.sqrt();
        let z = x * t.powf(-p.alpha);
        let eta = self.eta.profile.eval(z, Order::Value)?;
        let m = self.mu2.mu3_regular(y, Order::Value)?;
        let h = self.phi2.h(z, Order::Value)?;
        Ok(mu1(y) + t.powf(-p.gamma) * eta + t.powf(-p.epsilon) * m + t.powf(-3.0 * p.gamma) * h)
    }

    /// The same function grouped as `mu1 + t^-eps mu2(y) + t^-gamma phi1(z)
    /// + t^-3gamma phi2(z)` with `phi1 = eta - lambda z^-delta`. Singular
    /// pieces cancel numerically here, so it is for reporting only; `x != 0`.
    pub fn v_infinity_direct(&self, x: f64, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        let x = x.abs();
        if x == 0.0 {
            return Err(Error::Domain(
                "the unregularised grouping is singular at x = 0".into(),
            ));
        }
        let p = &self.params;
        let y = x / t.sqrt();
        let z = x * t.powf(-p.alpha);
        let phi1 = self.eta.profile.eval(z, Order::Value)? - p.lambda * z.powf(-p.delta);
        let mu2 = self.mu2.mu2(y, Order::Value)?;
        let phi2 = self.phi2.phi2(z, Order::Value)?;
        Ok(mu1(y)
            + t.powf(-p.epsilon) * mu2
            + t.powf(-p.gamma) * phi1
            + t.powf(-3.0 * p.gamma) * phi2)
    }

    /// `phi`, `phi_t` and `phi_xx` at `x > 0`; second derivatives come from
    /// the governing equations of the profiles.
    pub fn phi_parts(&self, x: f64, t: f64) -> Result<PhiParts> {
        Self::check_t(t)?;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("phi_parts needs x > 0, got {x}")));
        }
        let p = &self.params;
        let (g, e, a) = (p.gamma, p.epsilon, p.alpha);
        let y = x / t.sqrt();
        let z = x * t.powf(-a);
        let et = [
            self.eta.profile.eval(z, Order::Value)?,
            self.eta.profile.eval(z, Order::First)?,
            self.eta.profile.eval(z, Order::Second)?,
        ];
        let mm = [
            self.mu2.mu3_regular(y, Order::Value)?,
            self.mu2.mu3_regular(y, Order::First)?,
            self.mu2.mu3_regular(y, Order::Second)?,
        ];
        let hh = [
            self.phi2.h(z, Order::Value)?,
            self.phi2.h(z, Order::First)?,
            self.phi2.h(z, Order::Second)?,
        ];
        let tg = t.powf(-g);
        let te = t.powf(-e);
        let t3 = t.powf(-3.0 * g);
        let phi = tg * et[0] + te * mm[0] + t3 * hh[0];
        let phi_t = -(tg * (g * et[0] + a * z * et[1])
            + te * (e * mm[0] + 0.5 * y * mm[1])
            + t3 * (3.0 * g * hh[0] + a * z * hh[1]))
            / t;
        let t2a = t.powf(-2.0 * a);
        let phi_xx = tg * t2a * et[2] + te / t * mm[2] + t3 * t2a * hh[2];
        Ok(PhiParts {
            ubar: mu1(y),
            phi,
            phi_t,
            phi_xx,
        })
    }

    /// `I = -phi_t + phi_xx - (2 ubar phi + phi²)^n` at `x > 0`.
    pub fn eval_i(&self, x: f64, t: f64) -> Result<f64> {
        let s = self.phi_parts(x, t)?;
        let r = (2.0 * s.ubar * s.phi + s.phi * s.phi).powi(self.params.n as i32);
        Ok(-s.phi_t + s.phi_xx - r)
    }

    /// `lim t^(2n gamma) F(t^alpha z, t) = (2 kappa |z| eta + eta²)^n / 2`.
    pub fn front_reactive(&self, z: f64) -> Result<f64> {
        let z = z.abs();
        let e = self.eta.profile.eval(z, Order::Value)?;
        Ok(0.5 * (2.0 * self.params.kappa * z * e + e * e).powi(self.params.n as i32))
    }

    /// `lim t^(n eps) F(sqrt(t) y, t) = (2 mu1 mu2)^n / 2`, `y != 0`.
    pub fn front_diffusive(&self, y: f64) -> Result<f64> {
        let y = y.abs();
        if y == 0.0 {
            return Err(Error::Domain(
                "the diffusive front limit diverges at y = 0".into(),
            ));
        }
        let m = self.mu2.mu2(y, Order::Value)?;
        Ok(0.5 * (2.0 * mu1(y) * m).powi(self.params.n as i32))
    }

    /// `|t^(eps-gamma) eta(t^gamma y) - lambda y^-delta|`.
    pub fn matching_defect(&self, y: f64, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        let p = &self.params;
        let e = self.eta.profile.eval(t.powf(p.gamma) * y, Order::Value)?;
        Ok((t.powf(p.epsilon - p.gamma) * e - p.lambda * y.powf(-p.delta)).abs())
    }

    /// `V̂ = 2n (2 ubar phi + phi²)^(n-1) (ubar + phi)`.
    pub fn potential(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        Self::check_t(t)?;
        let x = x.abs();
        let ubar = mu1(x / t.sqrt());
        let phi = self.v_infinity(x, t)? - ubar;
        let n = self.params.n as i32;
        let v = 2.0 * f64::from(n) * (2.0 * ubar * phi + phi * phi).powi(n - 1) * (ubar + phi);
        Ok((v, 2.0 * ubar + phi))
    }

    /// Minimum of `V̂` on a log grid in `x` from deep inside the reactive
    /// zone to 20 diffusion lengths.
    pub fn potential_scan(&self, t: f64, points: usize) -> Result<PotentialScan> {
        Self::check_t(t)?;
        let lo = 1e-3 * t.powf(self.params.alpha);
        let hi = 20.0 * t.sqrt();
        let xs = log_grid(lo, hi, points.max(2));
        let vals: Vec<(f64, f64)> = xs
            .par_iter()
            .map(|&x| self.potential(x, t))
            .collect::<Result<_>>()?;
        let mut scan = PotentialScan {
            t,
            min: f64::INFINITY,
            argmin: lo,
            min_two_u_plus_phi: f64::INFINITY,
            points: xs.len(),
        };
        for (&x, &(v, w)) in xs.iter().zip(&vals) {
            if v < scan.min {
                scan.min = v;
                scan.argmin = x;
            }
            scan.min_two_u_plus_phi = scan.min_two_u_plus_phi.min(w);
        }
        Ok(scan)
    }

    /// `N(t) = 2 ∫_0^∞ |I(sqrt(t) y, t)| dy`.
    pub fn inhomo_norm(&self, t: f64, tol: f64) -> Result<InhomoNorm> {
        Self::check_t(t)?;
        let st = t.sqrt();
        let g = |y: f64| self.eval_i(st * y, t).map(f64::abs);
        // Breakpoints at the seams of the profiles and across both scales.
        let zr = t.powf(-self.params.gamma);
        let mut bps: Vec<f64> = Vec::new();
        for k in [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            bps.push(k * zr);
        }
        bps.push(self.eta.options.z_max * zr);
        bps.push(self.phi2.options.z_max * zr);
        bps.push(self.mu2.profile.x_min());
        bps.push(self.mu2.profile.x_max());
        bps.extend((1..=8).map(|k| 0.25 * k as f64));
        // Cut-off: scan outward until the integrand is negligible.
        let probe = log_grid(1e-3 * zr, 40.0, 400);
        let vals: Vec<f64> = probe.par_iter().map(|&y| g(y)).collect::<Result<_>>()?;
        let peak = vals.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::Consistency(format!(
                "I vanishes identically at t = {t}"
            )));
        }
        let mut x_cut = 40.0;
        for (&y, &v) in probe.iter().zip(&vals).rev() {
            if v > 1e-16 * peak {
                x_cut = (y * 1.1).min(40.0);
                break;
            }
        }
        bps.retain(|&b| b > 0.0 && b < x_cut);
        bps.push(0.0);
        bps.push(x_cut);
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let opts = QuadOptions::new(tol).abs_tol(1e-3 * tol * peak * x_cut);
        let pieces: Vec<f64> = bps
            .par_windows(2)
            .map(|w| {
                let err = std::cell::Cell::new(None);
                let r = quad_with(
                    |y| match g(y) {
                        Ok(v) => v,
                        Err(e) => {
                            err.set(Some(e));
                            0.0
                        }
                    },
                    w[0],
                    w[1],
                    &opts,
                )?;
                if let Some(e) = err.take() {
                    return Err(e);
                }
                Ok(r.value)
            })
            .collect::<Result<_>>()?;
        let value = 2.0 * pieces.iter().sum::<f64>();
        Ok(InhomoNorm {
            t,
            value,
            x_cut,
            peak,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialScan {
    pub t: f64,
    pub min: f64,
    pub argmin: f64,
    pub min_two_u_plus_phi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InhomoNorm {
    pub t: f64,
    pub value: f64,
    /// Upper end of the `y` integration.
    pub x_cut: f64,
    /// Largest sampled `|I(sqrt(t) y, t)|`.
    pub peak: f64,
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_ends() {
        let g = log_grid(1e-2, 1e2, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-2).abs() < 1e-16);
        assert!((g[2] - 1.0).abs() < 1e-14);
        assert!((g[4] - 1e2).abs() < 1e-12);
    }
}
