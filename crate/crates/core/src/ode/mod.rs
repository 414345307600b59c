//! Numerical kernel shared by the profile solvers: an adaptive embedded
//! Runge–Kutta integrator for scalar second-order ODEs with terminal events,
//! bisection shooting, adaptive quadrature and tabulated profiles.

mod integrate;
mod profile;
mod quad;
mod shoot;

pub use integrate::{
    integrate, EventFn, IntegratorOptions, Sample, Termination, Trajectory, OVERFLOW_GUARD,
};
pub use profile::{Hermite, LeftEnd, Node, Order, PowerTerm, Profile, RhsFn, RightTail};
pub use quad::{quad, quad_to_infinity, quad_with, QuadOptions, QuadResult};
pub use shoot::{bisect_shoot, ShootResult, ShootingOutcome, ShotClass};
