//! Closed-form exponents and constants of the model, all derived from the
//! reaction order `n`.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational exponents.
pub type Rational = Ratio<i64>;

/// Exponents that are exact rationals for integer `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactExponents {
    /// `1/(2n+1)`
    pub gamma: Rational,
    /// `1/(n-1)`
    pub epsilon: Rational,
    /// `1/2 - gamma`
    pub alpha: Rational,
    /// `(n+2)/(n-1)`
    pub delta: Rational,
}

impl ExactExponents {
    pub fn new(n: u32) -> Self {
        let n = i64::from(n);
        let gamma = Rational::new(1, 2 * n + 1);
        let epsilon = Rational::new(1, n - 1);
        let alpha = Rational::new(1, 2) - gamma;
        let delta = Rational::new(n + 2, n - 1);
        Self {
            gamma,
            epsilon,
            alpha,
            delta,
        }
    }
}

fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Every exponent and constant the profile solvers and the simulator need.
///
/// Binary64 fields are evaluated once here; the exact exponents are kept in
/// [`ExactExponents`] so that comparisons against rational targets are exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u32,
    pub exact: ExactExponents,
    pub gamma: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Second tail exponent of the reactive profile.
    pub delta_prime: f64,
    /// `1/sqrt(pi)`, slope of `erf(y/2)` at the origin.
    pub kappa: f64,
    /// Cubic Taylor coefficient of `erf(y/2)`, `-kappa/12`.
    pub kappa3: f64,
    /// Amplitude of the `z^-delta` tail of the reactive profile.
    pub lambda: f64,
    /// Quadratic Taylor coefficient of `m = mu2 * y^delta` at the origin.
    pub lambda0: f64,
    /// Zero of the `c2` curve.
    pub xi0: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    /// Exponent of the singular branch of `m` near the origin, `p_plus + delta`.
    pub p_sing: f64,
}

/// Smallest reaction order the asymptotic construction supports.
pub const MIN_ORDER: u32 = 4;

/// Largest order accepted. Beyond this `(2 kappa)^n` and the profile powers
/// `eta^(2n)` start to lose too much precision to be useful.
pub const MAX_ORDER: u32 = 40;

impl ModelParams {
    /// Derive all constants for reaction order `n`.
    pub fn derive(n: u32) -> Result<Self> {
        if n < MIN_ORDER {
            return Err(Error::Domain(format!(
                "reaction order n = {n} is not supported: the two-scale asymptotics hold only for n >= 4 (n = 2, 3 are excluded)"
            )));
        }
        if n > MAX_ORDER {
            return Err(Error::Domain(format!(
                "reaction order n = {n} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let exact = ExactExponents::new(n);
        let gamma = to_f64(exact.gamma);
        let epsilon = to_f64(exact.epsilon);
        let alpha = to_f64(exact.alpha);
        let delta = to_f64(exact.delta);
        let nf = f64::from(n);

        let kappa = 1.0 / std::f64::consts::PI.sqrt();
        let kappa3 = -kappa / 12.0;
        let dd1 = delta * (delta + 1.0);

        // lambda^(n-1) (2 kappa)^n = delta (delta + 1)
        let lambda = (dd1 / (2.0 * kappa).powi(n as i32)).powf(epsilon);

        let disc = (4.0 * nf * dd1 + 1.0).sqrt();
        let delta_prime = if n <= 5 {
            (disc - 1.0) / 2.0
        } else {
            2.0 * delta + 1.0
        };
        let p_plus = 0.5 * (1.0 + disc);
        let p_minus = 0.5 * (1.0 - disc);

        let numer = -2.0 * nf * kappa3 * dd1 - kappa * (delta - 2.0 * epsilon);
        let denom = (nf - 1.0) * dd1 + 2.0 * (2.0 * delta - 1.0);
        let lambda0 = 0.5 * (lambda / kappa) * numer / denom;

        let xi0 = (dd1 / (nf * epsilon / 2.0)).sqrt();

        Ok(Self {
            n,
            exact,
            gamma,
            epsilon,
            alpha,
            delta,
            delta_prime,
            kappa,
            kappa3,
            lambda,
            lambda0,
            xi0,
            p_plus,
            p_minus,
            p_sing: p_plus + delta,
        })
    }

    /// `delta (delta + 1)`, which appears in almost every asymptotic relation.
    pub fn delta_delta1(&self) -> f64 {
        self.delta * (self.delta + 1.0)
    }

    /// Coefficient of the `z^(-1-2 delta)` particular solution in the
    /// reactive profile tail.
    pub fn lambda_p(&self) -> f64 {
        let nf = f64::from(self.n);
        let d = self.delta;
        let two_kl = 2.0 * self.kappa * self.lambda;
        nf * two_kl.powi(self.n as i32 - 1) * self.lambda.powi(2)
            / ((1.0 + 2.0 * d) * (2.0 + 2.0 * d) - nf * self.delta_delta1())
    }

    /// Named fields as `(name, value)` pairs, in a stable order, for tabular
    /// export.
    pub fn table(&self) -> Vec<(&'static str, String)> {
        let r = |q: Rational| format!("{}/{}", q.numer(), q.denom());
        vec![
            ("n", self.n.to_string()),
            ("gamma", r(self.exact.gamma)),
            ("epsilon", r(self.exact.epsilon)),
            ("alpha", r(self.exact.alpha)),
            ("delta", r(self.exact.delta)),
            ("delta_prime", fmt_f64(self.delta_prime)),
            ("kappa", fmt_f64(self.kappa)),
            ("kappa3", fmt_f64(self.kappa3)),
            ("lambda", fmt_f64(self.lambda)),
            ("lambda0", fmt_f64(self.lambda0)),
            ("xi0", fmt_f64(self.xi0)),
            ("p_plus", fmt_f64(self.p_plus)),
            ("p_minus", fmt_f64(self.p_minus)),
            ("p_sing", fmt_f64(self.p_sing)),
        ]
    }
}

/// Shortest decimal string that round-trips to the same binary64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponents_n4() {
        let p = ModelParams::derive(4).unwrap();
        assert_eq!(p.exact.gamma, Rational::new(1, 9));
        assert_eq!(p.exact.epsilon, Rational::new(1, 3));
        assert_eq!(p.exact.alpha, Rational::new(7, 18));
        assert_eq!(p.exact.delta, Rational::new(2, 1));
        assert_eq!(p.exact.alpha + p.exact.gamma, Rational::new(1, 2));
    }

    #[test]
    fn n4_constants() {
        let p = ModelParams::derive(4).unwrap();
        assert!((p.lambda - 1.5468).abs() < 1e-4);
        assert!((p.delta_prime - (97f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!((p.p_plus - 5.4244).abs() < 1e-4);
        assert!((p.xi0 - 3.0).abs() < 1e-15);
        assert!((p.lambda0 - p.lambda / 18.0).abs() < 1e-15);
    }

    #[test]
    fn n6_switches_branch() {
        let p = ModelParams::derive(6).unwrap();
        assert_eq!(p.exact.delta, Rational::new(8, 5));
        assert!((p.delta_prime - 21.0 / 5.0).abs() < 1e-15);
        assert!((p.lambda - 1.1504).abs() < 1e-4);
    }

    #[test]
    fn rejects_small_orders() {
        for n in 0..4 {
            let err = ModelParams::derive(n).unwrap_err();
            assert!(matches!(err, Error::Domain(_)));
            assert!(err.to_string().contains("n >= 4"));
        }
    }

    #[test]
    fn invariants_hold_for_moderate_orders() {
        for n in 4..=20 {
            let p = ModelParams::derive(n).unwrap();
            assert!(p.gamma > 0.0 && p.gamma < p.epsilon);
            assert!(4.0 * p.gamma < 0.5);
            assert!(p.delta > 1.0 && p.delta <= 2.0);
            assert!(p.delta_prime > 3.0 && p.delta_prime <= 2.0 * p.delta + 1.0 + 1e-12);
            assert!(p.lambda > 0.0 && p.lambda0 > 0.0);
            assert!(p.p_plus > 0.0 && p.p_minus < 0.0);
            assert!((p.p_plus + p.p_minus - 1.0).abs() < 1e-12);
            let prod = -f64::from(n) * p.delta_delta1();
            assert!((p.p_plus * p.p_minus - prod).abs() < 1e-10 * prod.abs());
            assert!(p.p_sing > 7.0);
            assert!(-p.p_minus > p.delta_prime - 2.0);
            if n >= 6 {
                let root_branch =
                    ((4.0 * f64::from(n) * p.delta_delta1() + 1.0).sqrt() - 1.0) / 2.0;
                assert!(root_branch >= 2.0 * p.delta + 1.0);
            }
        }
    }
}
