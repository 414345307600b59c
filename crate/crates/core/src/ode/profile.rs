//! Tabulated solution of a scalar second-order ODE on a half line.
//!
//! Inside the grid values and slopes come from cubic Hermite interpolation
//! of the stored `(f, f')` pairs. Left of the grid a Taylor polynomial is
//! used, right of it an asymptotic tail. Second derivatives are always
//! taken from the governing equation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};

/// Right-hand side `f'' = rhs(x, f, f')` of the governing equation.
pub type RhsFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: f64,
    pub f: f64,
    pub df: f64,
}

impl From<Sample> for Node {
    fn from(s: Sample) -> Self {
        Node {
            x: s.x,
            f: s.y,
            df: s.dy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeftEnd {
    /// The grid starts where the profile starts.
    Grid,
    /// `f(x) = Σ c_k x^k` left of the first node.
    Taylor { coeffs: Vec<f64> },
}

/// `coeff * x^(-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coeff: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RightTail {
    /// No continuation past the last node.
    None,
    /// `Σ c_i x^(-q_i)`.
    PowerLaws { terms: Vec<PowerTerm> },
    /// `C x^(-r) exp(-x²/4)`.
    Gaussian { amplitude: f64, exponent: f64 },
}

impl RightTail {
    fn value(&self, x: f64) -> f64 {
        match self {
            RightTail::None => f64::NAN,
            RightTail::PowerLaws { terms } => {
                terms.iter().map(|t| t.coeff * x.powf(-t.exponent)).sum()
            }
            RightTail::Gaussian {
                amplitude,
                exponent,
            } => amplitude * x.powf(-exponent) * (-x * x / 4.0).exp(),
        }
    }

    fn slope(&self, x: f64) -> f64 {
        match self {
            RightTail::None => f64::NAN,
            RightTail::PowerLaws { terms } => terms
                .iter()
                .map(|t| -t.exponent * t.coeff * x.powf(-t.exponent - 1.0))
                .sum(),
            RightTail::Gaussian { exponent, .. } => self.value(x) * (-exponent / x - x / 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

impl TryFrom<u8> for Order {
    type Error = Error;

    fn try_from(k: u8) -> Result<Self> {
        match k {
            0 => Ok(Order::Value),
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(Error::Domain(format!("derivative order {k} not supported"))),
        }
    }
}

/// Cubic Hermite interpolation on one interval.
#[derive(Debug, Clone, Copy)]
pub struct Hermite {
    pub a: Node,
    pub b: Node,
}

impl Hermite {
    pub fn value(&self, x: f64) -> f64 {
        let h = self.b.x - self.a.x;
        let t = (x - self.a.x) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.a.f
            + (t3 - 2.0 * t2 + t) * h * self.a.df
            + (-2.0 * t3 + 3.0 * t2) * self.b.f
            + (t3 - t2) * h * self.b.df
    }

    pub fn slope(&self, x: f64) -> f64 {
        let h = self.b.x - self.a.x;
        let t = (x - self.a.x) / h;
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) / h * self.a.f
            + (3.0 * t2 - 4.0 * t + 1.0) * self.a.df
            + (-6.0 * t2 + 6.0 * t) / h * self.b.f
            + (3.0 * t2 - 2.0 * t) * self.b.df
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    nodes: Vec<Node>,
    pub left: LeftEnd,
    pub right: RightTail,
    #[serde(skip)]
    rhs: Option<RhsFn>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("name", &self.name)
            .field("nodes", &self.nodes.len())
            .field("x_range", &(self.x_min(), self.x_max()))
            .field("left", &self.left)
            .field("right", &self.right)
            .field("has_rhs", &self.rhs.is_some())
            .finish()
    }
}

impl Profile {
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<Node>,
        left: LeftEnd,
        right: RightTail,
    ) -> Result<Self> {
        let name = name.into();
        if nodes.len() < 2 {
            return Err(Error::Domain(format!(
                "profile {name}: need at least two nodes"
            )));
        }
        if nodes[0].x < 0.0 {
            return Err(Error::Domain(format!(
                "profile {name}: grid starts below zero"
            )));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[1].x > w[0].x)) {
            return Err(Error::Domain(format!(
                "profile {name}: grid not strictly increasing at x = {}",
                w[1].x
            )));
        }
        if nodes.iter().any(|n| !(n.f.is_finite() && n.df.is_finite())) {
            return Err(Error::Domain(format!(
                "profile {name}: non-finite node data"
            )));
        }
        Ok(Self {
            name,
            nodes,
            left,
            right,
            rhs: None,
        })
    }

    pub fn with_rhs(mut self, rhs: RhsFn) -> Self {
        self.rhs = Some(rhs);
        self
    }

    pub fn set_rhs(&mut self, rhs: RhsFn) {
        self.rhs = Some(rhs);
    }

    pub fn has_rhs(&self) -> bool {
        self.rhs.is_some()
    }

    /// A profile that is identically `c`.
    pub fn constant(name: impl Into<String>, c: f64, x_max: f64) -> Self {
        let nodes = vec![
            Node {
                x: 0.0,
                f: c,
                df: 0.0,
            },
            Node {
                x: x_max,
                f: c,
                df: 0.0,
            },
        ];
        Profile::new(
            name,
            nodes,
            LeftEnd::Grid,
            RightTail::PowerLaws {
                terms: vec![PowerTerm {
                    coeff: c,
                    exponent: 0.0,
                }],
            },
        )
        .expect("valid constant profile")
        .with_rhs(Arc::new(|_, _, _| 0.0))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn x_min(&self) -> f64 {
        self.nodes[0].x
    }

    pub fn x_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].x
    }

    fn segment(&self, x: f64) -> Hermite {
        let i = self.nodes.partition_point(|n| n.x <= x);
        let i = i.clamp(1, self.nodes.len() - 1);
        Hermite {
            a: self.nodes[i - 1],
            b: self.nodes[i],
        }
    }

    fn taylor(coeffs: &[f64], x: f64, deriv: usize) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .skip(deriv)
            .map(|(k, &c)| {
                let fac: f64 = (0..deriv).map(|j| (k - j) as f64).product();
                c * fac * x.powi((k - deriv) as i32)
            })
            .sum()
    }

    /// Value at `x >= 0`; NaN for negative `x`.
    pub fn value(&self, x: f64) -> f64 {
        if !(x >= 0.0) {
            return f64::NAN;
        }
        if x < self.x_min() {
            if let LeftEnd::Taylor { coeffs } = &self.left {
                return Self::taylor(coeffs, x, 0);
            }
            return f64::NAN;
        }
        if x > self.x_max() {
            return self.right.value(x);
        }
        self.segment(x).value(x)
    }

    /// First derivative at `x >= 0`.
    pub fn slope(&self, x: f64) -> f64 {
        if !(x >= 0.0) {
            return f64::NAN;
        }
        if x < self.x_min() {
            if let LeftEnd::Taylor { coeffs } = &self.left {
                return Self::taylor(coeffs, x, 1);
            }
            return f64::NAN;
        }
        if x > self.x_max() {
            return self.right.slope(x);
        }
        self.segment(x).slope(x)
    }

    /// Second derivative from the governing equation.
    pub fn curvature(&self, x: f64) -> f64 {
        match &self.rhs {
            Some(rhs) => rhs(x, self.value(x), self.slope(x)),
            None => f64::NAN,
        }
    }

    /// Evaluate the requested derivative order with domain checks.
    pub fn eval(&self, x: f64, order: Order) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!(
                "profile {}: evaluation at negative x = {x}; pass |x|",
                self.name
            )));
        }
        let v = match order {
            Order::Value => self.value(x),
            Order::First => self.slope(x),
            Order::Second => {
                if self.rhs.is_none() {
                    return Err(Error::Domain(format!(
                        "profile {}: no governing equation attached for second derivatives",
                        self.name
                    )));
                }
                self.curvature(x)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!(
                "profile {}: no continuation at x = {x}",
                self.name
            )))
        }
    }

    /// Largest normalised defect of the stored slopes against the governing
    /// equation, `|f'(b) - f'(a) - ∫_a^b rhs| / (h max(1, |rhs|))`, over grid
    /// intervals with `a >= from` and `b <= to`. The integral uses 3-point
    /// Gauss–Legendre on the interpolant.
    pub fn ode_residual(&self, from: f64, to: f64) -> Result<f64> {
        let rhs = self.rhs.as_ref().ok_or_else(|| {
            Error::Domain(format!(
                "profile {}: no governing equation attached",
                self.name
            ))
        })?;
        let gl = [
            (-0.774_596_669_241_483_4, 5.0 / 9.0),
            (0.0, 8.0 / 9.0),
            (0.774_596_669_241_483_4, 5.0 / 9.0),
        ];
        let mut worst = 0.0f64;
        for w in self.nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.x < from || b.x > to {
                continue;
            }
            let seg = Hermite { a, b };
            let h = b.x - a.x;
            let mut integral = 0.0;
            let mut scale = 1.0f64;
            for (t, wt) in gl {
                let x = a.x + 0.5 * h * (1.0 + t);
                let r = rhs(x, seg.value(x), seg.slope(x));
                scale = scale.max(r.abs());
                integral += 0.5 * h * wt * r;
            }
            let defect = (b.df - a.df - integral).abs() / (h * scale);
            worst = worst.max(defect);
        }
        Ok(worst)
    }

    /// Relative jumps `(value, slope)` across the left and right seams.
    /// Entries are `None` where the profile has no continuation.
    pub fn seam_jumps(&self) -> [Option<(f64, f64)>; 2] {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let first = self.nodes[0];
        let last = self.nodes[self.nodes.len() - 1];
        let left = match &self.left {
            LeftEnd::Taylor { coeffs } => Some((
                rel(Self::taylor(coeffs, first.x, 0), first.f),
                rel(Self::taylor(coeffs, first.x, 1), first.df),
            )),
            LeftEnd::Grid => None,
        };
        let right = match &self.right {
            RightTail::None => None,
            tail => Some((
                rel(tail.value(last.x), last.f),
                rel(tail.slope(last.x), last.df),
            )),
        };
        [left, right]
    }
}
