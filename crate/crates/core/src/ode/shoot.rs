use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};

/// Classification of one trial trajectory into one of two disjoint open
/// sets of initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShotClass {
    /// Trajectory falls through the lower barrier (e.g. crosses zero).
    Undershoot,
    /// Trajectory turns around or crosses the upper barrier.
    Overshoot,
    /// Neither happened on the available span.
    Undecided,
}

#[derive(Debug, Clone)]
pub struct ShootingOutcome {
    pub class: ShotClass,
    /// Where the classifying event happened, if any.
    pub event_x: Option<f64>,
    pub trajectory: Option<Trajectory>,
}

impl ShootingOutcome {
    pub fn new(class: ShotClass, event_x: Option<f64>) -> Self {
        Self {
            class,
            event_x,
            trajectory: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShootResult {
    /// Midpoint of the final bracket.
    pub root: f64,
    /// End of the final bracket classified like the initial `lo`.
    pub lo: f64,
    /// End of the final bracket classified like the initial `hi`.
    pub hi: f64,
    pub lo_class: ShotClass,
    pub hi_class: ShotClass,
    /// Every trial parameter with its class and event location.
    pub history: Vec<(f64, ShotClass, Option<f64>)>,
    /// True if bisection stopped at an undecided shot or at the floating
    /// point floor rather than at `tol`.
    pub floor_reached: bool,
}

/// Bisect on the shooting parameter between two differently classified
/// ends until the bracket is narrower than `tol`.
///
/// With `tol = 0` the bisection continues until the midpoint is no longer
/// representable strictly between the ends.
pub fn bisect_shoot<F>(mut classify: F, lo: f64, hi: f64, tol: f64) -> Result<ShootResult>
where
    F: FnMut(f64) -> Result<ShootingOutcome>,
{
    let mut history = Vec::new();
    let c_lo = classify(lo)?;
    history.push((lo, c_lo.class, c_lo.event_x));
    let c_hi = classify(hi)?;
    history.push((hi, c_hi.class, c_hi.event_x));
    let lo_class = c_lo.class;
    let hi_class = c_hi.class;
    if lo_class == hi_class || lo_class == ShotClass::Undecided || hi_class == ShotClass::Undecided
    {
        return Err(Error::BracketInvalid {
            lo,
            hi,
            class: format!("{lo_class:?}/{hi_class:?}"),
        });
    }

    let (mut a, mut b) = (lo, hi);
    let mut floor_reached = false;
    while (b - a).abs() > tol {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            floor_reached = true;
            break;
        }
        let out = classify(mid)?;
        history.push((mid, out.class, out.event_x));
        match out.class {
            c if c == lo_class => a = mid,
            c if c == hi_class => b = mid,
            _ => {
                floor_reached = true;
                break;
            }
        }
    }
    Ok(ShootResult {
        root: 0.5 * (a + b),
        lo: a,
        hi: b,
        lo_class,
        hi_class,
        history,
        floor_reached,
    })
}
