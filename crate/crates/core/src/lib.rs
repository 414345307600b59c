//! Matched-asymptotic profiles and PDE verification for the reaction front
//! of `nA + nB -> C` with a diffusion-limited far field.

// `!(a >= b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod asymptotics;
pub mod error;
pub mod eta;
pub mod fit;
pub mod mu2;
pub mod ode;
pub mod params;
pub mod pde;
pub mod phi2;
pub mod pipeline;
pub mod special;

pub use asymptotics::AsymptoticBundle;
pub use error::{Error, Result};
pub use eta::{solve_eta, EtaSolution};
pub use mu2::{solve_mu2, Mu2Solution};
pub use params::{ExactExponents, ModelParams};
pub use phi2::{solve_h, Phi2Solution};
