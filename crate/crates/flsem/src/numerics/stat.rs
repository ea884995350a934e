//! Chi-square tails and AR(1) covariance construction.

use nalgebra::DMatrix;
use statrs::function::gamma::gamma_ur;

use crate::error::{validation, Result};

/// Upper tail probability `P(χ²_dof > x)` via the regularized upper
/// incomplete gamma function `Q(dof/2, x/2)`. Fractional degrees of freedom
/// are allowed (the Welch–Satterthwaite calibration produces them).
/// Saturates at the extremes; monotone nonincreasing in `x`.
pub fn chi2_upper_tail(x: f64, dof: f64) -> f64 {
    assert!(dof > 0.0, "chi2_upper_tail needs dof > 0");
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// AR(1) covariance: entry `(j,k) = ρ^{|j−k|}`. Requires `|ρ| < 1`.
pub fn ar1_covariance(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(validation(format!("AR(1) needs |rho| < 1, got {rho}")));
    }
    if p == 0 {
        return Err(validation("AR(1) needs p >= 1"));
    }
    Ok(DMatrix::from_fn(p, p, |j, k| rho.powi((j as i32 - k as i32).abs())))
}
