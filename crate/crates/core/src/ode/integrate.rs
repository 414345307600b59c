use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|y|` beyond this is treated as finite-time blow-up.
pub const OVERFLOW_GUARD: f64 = 1e150;

/// One accepted point of a second-order trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// Integration reached the end of the requested span.
    Reached,
    /// Event `index` changed sign; `x` is the located crossing.
    Event { index: usize, x: f64 },
    /// The step size collapsed below what the precision of `x` resolves.
    StepUnderflow { x: f64 },
    /// `|y|` exceeded [`OVERFLOW_GUARD`].
    Overflow { x: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn last(&self) -> Sample {
        *self
            .samples
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn first(&self) -> Sample {
        self.samples[0]
    }

    /// Samples reordered so that `x` is increasing.
    pub fn into_increasing(mut self) -> Vec<Sample> {
        if self.samples.len() > 1 && self.samples[0].x > self.samples[1].x {
            self.samples.reverse();
        }
        self.samples
    }
}

/// Event function `g(x, y, y')`; the event fires when `g` changes sign.
pub type EventFn<'a> = &'a dyn Fn(f64, f64, f64) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude; also bounds the spacing of stored samples.
    pub h_max: f64,
    /// Initial step magnitude. `None` picks one from the span.
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl IntegratorOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol * 1e-6,
            h_max: f64::INFINITY,
            h_init: None,
            max_steps: 2_000_000,
        }
    }

    pub fn atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    pub fn h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn h_init(mut self, h: f64) -> Self {
        self.h_init = Some(h);
        self
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th and 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Copy)]
struct State([f64; 2]);

impl State {
    fn axpy(self, h: f64, ks: &[(f64, [f64; 2])]) -> State {
        let mut out = self.0;
        for (a, k) in ks {
            out[0] += h * a * k[0];
            out[1] += h * a * k[1];
        }
        State(out)
    }
}

/// One Dormand–Prince step. Returns the 5th order solution and the
/// embedded error estimate.
fn dp_step<F>(rhs: &F, x: f64, s: State, h: f64) -> (State, [f64; 2])
where
    F: Fn(f64, f64, f64) -> f64,
{
    let f = |x: f64, s: State| [s.0[1], rhs(x, s.0[0], s.0[1])];
    let k1 = f(x, s);
    let k2 = f(x + C2 * h, s.axpy(h, &[(A21, k1)]));
    let k3 = f(x + C3 * h, s.axpy(h, &[(A31, k1), (A32, k2)]));
    let k4 = f(x + C4 * h, s.axpy(h, &[(A41, k1), (A42, k2), (A43, k3)]));
    let k5 = f(
        x + C5 * h,
        s.axpy(h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]),
    );
    let k6 = f(
        x + h,
        s.axpy(h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]),
    );
    let y5 = s.axpy(h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
    let k7 = f(x + h, y5);
    let mut err = [0.0; 2];
    for i in 0..2 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Integrate `y'' = rhs(x, y, y')` from `x0` towards `x_end` (either
/// direction), stopping at the first sign change of any event function.
///
/// The step-size controller is deterministic, so a fixed set of inputs
/// always yields the same trajectory bit for bit.
pub fn integrate<F>(
    rhs: F,
    x0: f64,
    y0: f64,
    dy0: f64,
    x_end: f64,
    events: &[EventFn<'_>],
    opts: &IntegratorOptions,
) -> Result<Trajectory>
where
    F: Fn(f64, f64, f64) -> f64,
{
    if !(1e-14..=1e-3).contains(&opts.rtol) {
        return Err(Error::Domain(format!(
            "integrator tolerance {} outside [1e-14, 1e-3]",
            opts.rtol
        )));
    }
    if !(x0.is_finite() && x_end.is_finite() && y0.is_finite() && dy0.is_finite()) {
        return Err(Error::Integration {
            x: x0,
            reason: "non-finite initial data".into(),
        });
    }
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    let span = (x_end - x0).abs();
    let mut samples = vec![Sample {
        x: x0,
        y: y0,
        dy: dy0,
    }];
    if span == 0.0 {
        return Ok(Trajectory {
            samples,
            termination: Termination::Reached,
        });
    }

    let mut last_sign: Vec<i8> = events.iter().map(|g| sign(g(x0, y0, dy0))).collect();

    let mut x = x0;
    let mut s = State([y0, dy0]);
    let mut h = opts
        .h_init
        .unwrap_or_else(|| (span * 1e-3).min(1e-2))
        .min(opts.h_max)
        .min(span);
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(Error::Integration {
                x,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        steps += 1;

        let remaining = (x_end - x) * dir;
        if remaining <= 4.0 * f64::EPSILON * x_end.abs().max(x.abs()) {
            return Ok(Trajectory {
                samples,
                termination: Termination::Reached,
            });
        }
        let last_step = h >= remaining;
        let h_try = if last_step { remaining } else { h };
        if h_try <= f64::EPSILON * x.abs().max(1e-300) * 4.0 {
            return Ok(Trajectory {
                samples,
                termination: Termination::StepUnderflow { x },
            });
        }

        let (s_new, e) = dp_step(&rhs, x, s, dir * h_try);
        let mut err = 0.0f64;
        let mut finite = true;
        for i in 0..2 {
            if !s_new.0[i].is_finite() || !e[i].is_finite() {
                finite = false;
                break;
            }
            let scale = opts.atol + opts.rtol * s.0[i].abs().max(s_new.0[i].abs());
            err = err.max(e[i].abs() / scale);
        }
        if !finite {
            h = h_try * 0.25;
            continue;
        }
        if err > 1.0 {
            let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            h = h_try * factor;
            continue;
        }

        let x_new = if last_step { x_end } else { x + dir * h_try };

        // Events: earliest crossing within the step wins.
        let mut fired: Option<(usize, f64, State)> = None;
        for (idx, g) in events.iter().enumerate() {
            let sg = sign(g(x_new, s_new.0[0], s_new.0[1]));
            if sg != 0 && last_sign[idx] != 0 && sg != last_sign[idx] {
                let (theta, state) = locate(&rhs, g, x, s, dir * h_try, last_sign[idx], opts);
                let xe = x + dir * h_try * theta;
                if fired.is_none_or(|(_, xf, _)| (xe - xf) * dir < 0.0) {
                    fired = Some((idx, xe, state));
                }
            }
        }
        if let Some((index, xe, state)) = fired {
            samples.push(Sample {
                x: xe,
                y: state.0[0],
                dy: state.0[1],
            });
            return Ok(Trajectory {
                samples,
                termination: Termination::Event { index, x: xe },
            });
        }
        for (idx, g) in events.iter().enumerate() {
            let sg = sign(g(x_new, s_new.0[0], s_new.0[1]));
            if sg != 0 {
                last_sign[idx] = sg;
            }
        }

        x = x_new;
        s = s_new;
        samples.push(Sample {
            x,
            y: s.0[0],
            dy: s.0[1],
        });

        if s.0[0].abs() > OVERFLOW_GUARD || s.0[1].abs() > OVERFLOW_GUARD {
            return Ok(Trajectory {
                samples,
                termination: Termination::Overflow { x },
            });
        }
        if last_step {
            return Ok(Trajectory {
                samples,
                termination: Termination::Reached,
            });
        }

        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h_try * factor).min(opts.h_max);
    }
}

/// Bisect the step fraction until the crossing is pinned to within the
/// integrator tolerance in `x`. Returns the fraction just past the crossing
/// and the state there.
fn locate<F>(
    rhs: &F,
    g: EventFn<'_>,
    x: f64,
    s: State,
    h: f64,
    start_sign: i8,
    opts: &IntegratorOptions,
) -> (f64, State)
where
    F: Fn(f64, f64, f64) -> f64,
{
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let (mut s_hi, _) = dp_step(rhs, x, s, h);
    let x_tol = opts.rtol.max(1e-14) * x.abs().max(1.0);
    for _ in 0..200 {
        if (hi - lo) * h.abs() <= x_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (sm, _) = dp_step(rhs, x, s, h * mid);
        let sg = sign(g(x + h * mid, sm.0[0], sm.0[1]));
        if sg == start_sign {
            lo = mid;
        } else {
            hi = mid;
            s_hi = sm;
        }
    }
    (hi, s_hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_solution_is_exact() {
        let opts = IntegratorOptions::new(1e-10);
        let tr = integrate(|_, _, _| 0.0, 0.0, 1.0, -1.0, 2.0, &[], &opts).unwrap();
        assert_eq!(tr.termination, Termination::Reached);
        let last = tr.last();
        assert_eq!(last.x, 2.0);
        assert!((last.y + 1.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_growth_reaches_e() {
        let opts = IntegratorOptions::new(1e-12);
        let tr = integrate(|_, y, _| y, 0.0, 1.0, 1.0, 1.0, &[], &opts).unwrap();
        assert!((tr.last().y - std::f64::consts::E).abs() < 1e-10);
    }

    #[test]
    fn integrates_leftwards() {
        let opts = IntegratorOptions::new(1e-12);
        let tr = integrate(|_, y, _| y, 0.0, 1.0, 1.0, -1.0, &[], &opts).unwrap();
        assert_eq!(tr.last().x, -1.0);
        assert!((tr.last().y - (-1.0f64).exp()).abs() < 1e-11);
        let inc = tr.into_increasing();
        assert!(inc.windows(2).all(|w| w[0].x < w[1].x));
    }

    #[test]
    fn event_located_on_linear_root() {
        let opts = IntegratorOptions::new(1e-10);
        let g = |_: f64, y: f64, _: f64| y;
        for root in [0.3, 1.0, 1.7, 2.9] {
            let tr = integrate(|_, _, _| 0.0, 0.0, root, -1.0, 5.0, &[&g], &opts).unwrap();
            match tr.termination {
                Termination::Event { index, x } => {
                    assert_eq!(index, 0);
                    assert!((x - root).abs() <= 1e-10 * root.max(1.0), "{x} vs {root}");
                }
                other => panic!("expected event, got {other:?}"),
            }
        }
    }

    #[test]
    fn earliest_event_wins() {
        let opts = IntegratorOptions::new(1e-10).h_init(1.0);
        let g0 = |x: f64, _: f64, _: f64| x - 0.9;
        let g1 = |x: f64, _: f64, _: f64| x - 0.5;
        let tr = integrate(|_, _, _| 0.0, 0.0, 0.0, 0.0, 2.0, &[&g0, &g1], &opts).unwrap();
        match tr.termination {
            Termination::Event { index, x } => {
                assert_eq!(index, 1);
                assert!((x - 0.5).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blow_up_is_reported() {
        // y'' = 2 y^3 with y = 1/(1-x) blows up at x = 1.
        let opts = IntegratorOptions::new(1e-10);
        let tr = integrate(|_, y, _| 2.0 * y * y * y, 0.0, 1.0, 1.0, 2.0, &[], &opts).unwrap();
        match tr.termination {
            Termination::Overflow { x } | Termination::StepUnderflow { x } => {
                assert!((x - 1.0).abs() < 1e-6)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn error_decreases_with_tolerance() {
        let err = |tol: f64| {
            let opts = IntegratorOptions::new(tol).atol(tol);
            let tr = integrate(|_, y, _| y, 0.0, 1.0, 1.0, 4.0, &[], &opts).unwrap();
            (tr.last().y - 4f64.exp()).abs() / 4f64.exp()
        };
        let mut prev = err(1e-4);
        for k in 5..=11 {
            let e = err(10f64.powi(-k));
            assert!(e < prev, "tol 1e-{k}: {e} !< {prev}");
            assert!(e < 10f64.powi(-k) * 100.0);
            prev = e;
        }
    }

    #[test]
    fn rejects_bad_tolerance() {
        let opts = IntegratorOptions::new(2.0);
        assert!(integrate(|_, _, _| 0.0, 0.0, 0.0, 0.0, 1.0, &[], &opts).is_err());
    }
}
