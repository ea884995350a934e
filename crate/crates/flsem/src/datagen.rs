//! Deterministic generators for the simulation designs used throughout the
//! test suite and the Monte Carlo benchmark: a 1-D design with ten active
//! outcome covariates and five active exposure covariates, a 2-D surface
//! design, and a power-study variant of the 1-D design with a scaled
//! functional effect.
//!
//! Covariates fall into four groups: confounders `𝒞` (affect exposure and
//! outcome), precision variables `𝒫` (outcome only), instruments `ℐ`
//! (exposure only), and irrelevant variables `𝒮`. The generators label them
//! in the returned truth so selection errors can be scored.
//!
//! The outcome integrates the observed exposure with the same rectangle
//! rule the estimators use, `Y = Xβ* + Δ·Σ_j Z(t_j)·B*(t_j) + ε`;
//! endogeneity enters through the covariance between the exposure noise
//! scores `(ξ̃₁, ξ̃₂)` and `ε`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::numerics::{ar1_covariance, mvn_sample, Grid, RngStream};

/// Simulation design identifiers (config form in parentheses).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    /// 1-D functional effect (`example1_1d`).
    Example1OneDim,
    /// 2-D surface effect (`example2_2d`).
    Example2TwoDim,
    /// 1-D design with the functional effect rescaled by `b` (`example4_power`).
    Example4Power,
}

impl Design {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "example1_1d" => Ok(Design::Example1OneDim),
            "example2_2d" => Ok(Design::Example2TwoDim),
            "example4_power" => Ok(Design::Example4Power),
            other => Err(validation(format!("unknown design '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Design::Example1OneDim => "example1_1d",
            Design::Example2TwoDim => "example2_2d",
            Design::Example4Power => "example4_power",
        }
    }
}

/// Configuration of one simulated dataset.
///
/// `rho1` is the AR(1) correlation of the scalar covariates; `rho2` is the
/// endogeneity knob (covariance between the exposure noise scores and the
/// outcome error); `b` scales the functional effect in the power design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub b: f64,
    pub m: usize,
    pub m1: usize,
    pub m2: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn example1(n: usize, p: usize, rho1: f64, rho2: f64, seed: u64) -> Self {
        SimConfig {
            design: Design::Example1OneDim,
            n,
            p,
            rho1,
            rho2,
            b: 0.0,
            m: 100,
            m1: 0,
            m2: 0,
            seed,
        }
    }

    /// 2-D design at the reduced desk-scale grid (20×30); pass
    /// `full_grid = true` for the original 100×150 resolution.
    pub fn example2(n: usize, p: usize, rho1: f64, rho2: f64, seed: u64, full_grid: bool) -> Self {
        let (m1, m2) = if full_grid { (100, 150) } else { (20, 30) };
        SimConfig {
            design: Design::Example2TwoDim,
            n,
            p,
            rho1,
            rho2,
            b: 0.0,
            m: 0,
            m1,
            m2,
            seed,
        }
    }

    pub fn example4(n: usize, p: usize, rho1: f64, rho2: f64, b: f64, seed: u64) -> Self {
        SimConfig { design: Design::Example4Power, b, ..SimConfig::example1(n, p, rho1, rho2, seed) }
    }

    /// Joint covariance of the exposure scores and the outcome error,
    /// `(ξ̃₁, ξ̃₂, ε)`: unit variances except `Var(ξ̃₂) = 0.64`, with
    /// `Cov(ξ̃₁,ε) = ρ₂` and `Cov(ξ̃₂,ε) = 0.8·ρ₂`.
    pub fn noise_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0, 0.0, self.rho2,
                0.0, 0.64, 0.8 * self.rho2,
                self.rho2, 0.8 * self.rho2, 1.0,
            ],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(validation("n must be positive"));
        }
        if self.p < 10 {
            return Err(validation(format!(
                "p must be at least 10 (true supports occupy the first ten indices), got {}",
                self.p
            )));
        }
        if !(self.rho1.abs() < 1.0) {
            return Err(validation(format!("|rho1| must be < 1, got {}", self.rho1)));
        }
        // the joint draw of (ξ̃₁, ξ̃₂, ε) must be a valid Gaussian
        if nalgebra::Cholesky::new(self.noise_covariance()).is_none() {
            return Err(validation(format!(
                "rho2 = {} makes the joint (xi1, xi2, eps) covariance non-PSD \
                 (need 2*rho2^2 < 1)",
                self.rho2
            )));
        }
        if self.design == Design::Example4Power && !(self.b >= 0.0) {
            return Err(validation(format!("b must be nonnegative, got {}", self.b)));
        }
        match self.design {
            Design::Example2TwoDim => {
                if self.m1 < 2 || self.m2 < 2 {
                    return Err(validation("2-D design needs m1, m2 >= 2"));
                }
            }
            _ => {
                if self.m < 2 {
                    return Err(validation("1-D design needs m >= 2"));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth attached to generated datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthInfo {
    /// True scalar outcome coefficients (length p).
    pub beta: Vec<f64>,
    /// True functional effect on the grid.
    pub b_on_grid: Vec<f64>,
    /// True exposure coefficient functions on the grid, one row per covariate
    /// (zero rows off the exposure support).
    pub coef_on_grid: Vec<Vec<f64>>,
    /// Confounder indices `𝒞` (0-based).
    pub confounders: Vec<usize>,
    /// Precision-variable indices `𝒫`.
    pub precision: Vec<usize>,
    /// Instrument indices `ℐ`.
    pub instruments: Vec<usize>,
    /// Irrelevant indices `𝒮`.
    pub irrelevant: Vec<usize>,
    /// Realized outcome errors.
    pub eps: Vec<f64>,
    /// Realized exposure noise scores.
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
}

impl TruthInfo {
    /// Support of the exposure model, `𝒞 ∪ ℐ`.
    pub fn exposure_support(&self) -> Vec<usize> {
        let mut s: Vec<usize> =
            self.confounders.iter().chain(&self.instruments).copied().collect();
        s.sort_unstable();
        s
    }

    /// Support of the outcome model, `𝒞 ∪ 𝒫`.
    pub fn outcome_support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.confounders.iter().chain(&self.precision).copied().collect();
        s.sort_unstable();
        s
    }
}

/// A generated dataset: scalar design matrix, functional exposure values on
/// the grid, outcome vector, grid, and (for simulations) the ground truth.
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    pub grid: Grid,
    pub truth: Option<TruthInfo>,
}

/// Orthonormal trigonometric basis on `[0,1]`:
/// `φ_{2k−1}(t) = √2 cos((2k−1)πt)`, `φ_{2k}(t) = √2 sin((2k−1)πt)`.
pub fn basis_phi(k: usize, t: f64) -> f64 {
    assert!(k >= 1, "basis index starts at 1");
    let s = std::f64::consts::SQRT_2;
    if k % 2 == 1 {
        s * (k as f64 * std::f64::consts::PI * t).cos()
    } else {
        s * ((k - 1) as f64 * std::f64::consts::PI * t).sin()
    }
}

/// 1-D exposure coefficient functions (0-based index, active for `l < 5`).
pub fn coef_1d(l: usize, t: f64) -> f64 {
    use std::f64::consts::PI;
    match l {
        0 => 2.0 * t * t,
        1 => (3.0 * PI * t / 2.0 + PI / 2.0).cos(),
        2 => {
            2.0f64.sqrt() * (PI * t / 2.0).sin() + 3.0 * 2.0f64.sqrt() * (3.0 * PI * t / 2.0).sin()
        }
        3 => 25.0 * (-t).exp(),
        4 => 5.0 + 7.0 * t,
        _ => 0.0,
    }
}

/// 2-D exposure coefficient surfaces (0-based index, active for `l < 5`).
pub fn coef_2d(l: usize, t1: f64, t2: f64) -> f64 {
    use std::f64::consts::PI;
    match l {
        0 => 2.0 * (t1 * t1 + t2 * t2),
        1 => 3.0 * (PI * t1 / 2.0).cos() * (PI * t2 / 2.0).cos(),
        2 => 2.0f64.sqrt() / 2.0 * ((PI * t1 / 2.0).sin() + 3.0 * (3.0 * PI * t2 / 2.0).sin()),
        3 => (-(t1 - t2)).exp(),
        4 => 2.0 + t1 + t2,
        _ => 0.0,
    }
}

/// 2-D functional effect surface.
pub fn b_surface_2d(t1: f64, t2: f64) -> f64 {
    (-(t1 - t2)).exp()
}

fn beta_truth(p: usize, lead: f64) -> DVector<f64> {
    let mut beta = DVector::zeros(p);
    beta[0] = lead;
    for (j, v) in [5.5, 4.0, 3.5, 5.0, 4.5].iter().enumerate() {
        beta[5 + j] = *v;
    }
    beta
}

fn group_labels(p: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>) {
    (vec![0], (5..10).collect(), (1..5).collect(), (10..p).collect())
}

/// Functional-effect coefficients `scale·(−1)^{k+1}k⁻²` for `k = 1..=terms`.
fn b_basis_coefficients(scale: f64, terms: usize) -> Vec<f64> {
    (1..=terms)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            scale * sign / (k * k) as f64
        })
        .collect()
}

/// Generate a dataset according to the configured design. Identical
/// configurations produce bit-identical datasets.
pub fn generate(cfg: &SimConfig) -> Result<FunctionalDataset> {
    cfg.validate()?;
    match cfg.design {
        Design::Example1OneDim => generate_1d(cfg, 4.0, 10),
        Design::Example4Power => generate_1d(cfg, cfg.b, 5),
        Design::Example2TwoDim => generate_2d(cfg),
    }
}

fn generate_1d(cfg: &SimConfig, b_scale: f64, b_terms: usize) -> Result<FunctionalDataset> {
    let grid = Grid::uniform_1d(cfg.m)?;
    let m = grid.len();
    let (n, p) = (cfg.n, cfg.p);
    let mut stream = RngStream::new(cfg.seed);

    let x = mvn_sample(&ar1_covariance(p, cfg.rho1)?, n, &mut stream)?;
    let noise = mvn_sample(&cfg.noise_covariance(), n, &mut stream)?;

    let mut coef_on_grid = DMatrix::zeros(p, m);
    for l in 0..5 {
        for j in 0..m {
            coef_on_grid[(l, j)] = coef_1d(l, grid.point(j)[0]);
        }
    }
    let phi1 = DVector::from_fn(m, |j, _| basis_phi(1, grid.point(j)[0]));
    let phi2 = DVector::from_fn(m, |j, _| basis_phi(2, grid.point(j)[0]));

    let mut z = &x * &coef_on_grid;
    for i in 0..n {
        for j in 0..m {
            z[(i, j)] += noise[(i, 0)] * phi1[j] + noise[(i, 1)] * phi2[j];
        }
    }

    let b_coefs = b_basis_coefficients(b_scale, b_terms);
    let b_on_grid = DVector::from_fn(m, |j, _| {
        let t = grid.point(j)[0];
        b_coefs.iter().enumerate().map(|(i, c)| c * basis_phi(i + 1, t)).sum()
    });

    let beta = beta_truth(p, 7.0);
    let y = &x * &beta + (&z * &b_on_grid) * grid.delta() + noise.column(2);

    let (confounders, precision, instruments, irrelevant) = group_labels(p);
    let truth = TruthInfo {
        beta: beta.as_slice().to_vec(),
        b_on_grid: b_on_grid.as_slice().to_vec(),
        coef_on_grid: (0..p).map(|l| coef_on_grid.row(l).iter().copied().collect()).collect(),
        confounders,
        precision,
        instruments,
        irrelevant,
        eps: noise.column(2).iter().copied().collect(),
        xi1: noise.column(0).iter().copied().collect(),
        xi2: noise.column(1).iter().copied().collect(),
    };

    Ok(FunctionalDataset { x, z, y, grid, truth: Some(truth) })
}

fn generate_2d(cfg: &SimConfig) -> Result<FunctionalDataset> {
    let grid = Grid::uniform_2d(cfg.m1, cfg.m2)?;
    let m = grid.len();
    let (n, p) = (cfg.n, cfg.p);
    let mut stream = RngStream::new(cfg.seed);

    let x = mvn_sample(&ar1_covariance(p, cfg.rho1)?, n, &mut stream)?;
    let noise = mvn_sample(&cfg.noise_covariance(), n, &mut stream)?;

    let mut coef_on_grid = DMatrix::zeros(p, m);
    for l in 0..5 {
        for j in 0..m {
            let pt = grid.point(j);
            coef_on_grid[(l, j)] = coef_2d(l, pt[0], pt[1]);
        }
    }
    // random surfaces: φ₁ = 1.588 sin(πt₁), φ₂ = 2.157(cos(πt₂) − 0.039)
    let phi1 =
        DVector::from_fn(m, |j, _| 1.588 * (std::f64::consts::PI * grid.point(j)[0]).sin());
    let phi2 = DVector::from_fn(m, |j, _| {
        2.157 * ((std::f64::consts::PI * grid.point(j)[1]).cos() - 0.039)
    });

    let mut z = &x * &coef_on_grid;
    for i in 0..n {
        for j in 0..m {
            z[(i, j)] += noise[(i, 0)] * phi1[j] + noise[(i, 1)] * phi2[j];
        }
    }

    let b_on_grid = DVector::from_fn(m, |j, _| {
        let pt = grid.point(j);
        b_surface_2d(pt[0], pt[1])
    });

    let beta = beta_truth(p, 2.0);
    let y = &x * &beta + (&z * &b_on_grid) * grid.delta() + noise.column(2);

    let (confounders, precision, instruments, irrelevant) = group_labels(p);
    let truth = TruthInfo {
        beta: beta.as_slice().to_vec(),
        b_on_grid: b_on_grid.as_slice().to_vec(),
        coef_on_grid: (0..p).map(|l| coef_on_grid.row(l).iter().copied().collect()).collect(),
        confounders,
        precision,
        instruments,
        irrelevant,
        eps: noise.column(2).iter().copied().collect(),
        xi1: noise.column(0).iter().copied().collect(),
        xi2: noise.column(1).iter().copied().collect(),
    };

    Ok(FunctionalDataset { x, z, y, grid, truth: Some(truth) })
}
