//! The outer profile `mu1(y) = erf(y/2)` and a few helpers around it.

use std::f64::consts::PI;

/// `1/sqrt(pi)`.
pub const KAPPA: f64 = 0.564_189_583_547_756_3;

/// `erf(y/2)`.
pub fn mu1(y: f64) -> f64 {
    libm::erf(0.5 * y)
}

/// `d/dy erf(y/2) = kappa exp(-y²/4)`.
pub fn mu1_prime(y: f64) -> f64 {
    (-0.25 * y * y).exp() / PI.sqrt()
}

/// `mu1(y)/y`, continuous at 0 with value `kappa`.
pub fn mu1_over_y(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        // kappa (1 - y²/12 + y⁴/160)
        let y2 = y * y;
        KAPPA * (1.0 - y2 / 12.0 + y2 * y2 / 160.0)
    } else {
        mu1(y) / y
    }
}

/// `mu1(y) - kappa y`, accurate for small `y`.
pub fn mu1_minus_linear(y: f64) -> f64 {
    if y.abs() < 0.1 {
        let y2 = y * y;
        // Series of erf(y/2) without the linear term.
        let mut term = KAPPA * y;
        let mut sum = 0.0;
        for k in 1..12 {
            let kf = k as f64;
            term *= -y2 / 4.0 * (2.0 * kf - 1.0) / (kf * (2.0 * kf + 1.0));
            sum += term;
        }
        sum
    } else {
        mu1(y) - KAPPA * y
    }
}

/// `mu1(y) - kappa y - kappa3 y³`, accurate for small `y`.
pub fn mu1_minus_cubic(y: f64) -> f64 {
    mu1_minus_linear(y) + KAPPA / 12.0 * y * y * y
}
