//! Outcome-model fitting: `Y = Xβ + ∫ Ẑ(t) B(t) dt + error` with an exact
//! L0 constraint on β (at most `J_y` nonzeros) and an RKHS ridge penalty on
//! the functional coefficient `B`. Plugging in the fitted exposure `Ẑ`
//! partials out the endogenous variation; passing the observed `Z` instead
//! gives the endogeneity-ignoring baseline.
//!
//! For a fixed control set `A` the solution is closed-form: with
//! `G = Δ·Ẑ·Σ` (the quadrature design of the functional term) and
//! `M_A = I − X_A(X_AᵀX_A)⁻¹X_Aᵀ`,
//!
//! ```text
//! α̂ = (Gᵀ M_A G + nλΣ)⁻¹ Gᵀ M_A Y,     β̂_A = (X_AᵀX_A)⁻¹ X_Aᵀ (Y − Gα̂).
//! ```
//!
//! The support iteration alternates scalar dual updates
//! `d_ℓ = n⁻¹ X_ℓᵀ(Y − Xβ − Gα)` with keeping the `J_y` largest `|β_ℓ + d_ℓ|`
//! and re-solving, stopping on a stable or cycling support.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{numerical, validation, Result};
use crate::exposure::GramContext;
use crate::numerics::{Grid, KernelSpec};
use crate::screening::top_k_by_score;

/// Fitted outcome model.
#[derive(Debug, Clone)]
pub struct OutcomeFit {
    /// Sparse scalar coefficients (length p, zero off the active set).
    pub beta: DVector<f64>,
    /// Active control indices, ascending.
    pub active_set: Vec<usize>,
    /// Representer coefficients of `B̂`; grid values are `Σ·α̂`.
    pub alpha: DVector<f64>,
    /// `B̂` evaluated on the grid.
    pub b_on_grid: DVector<f64>,
    pub lambda: f64,
    /// Residual variance `‖Y − Xβ̂ − Gα̂‖²/(n − |Â|)` (optionally also
    /// charging the functional degrees of freedom, see [`OutcomeOptions`]).
    pub sigma2: f64,
    /// Objective value at the fixed point.
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fitting options; the defaults match the reference pipeline.
#[derive(Debug, Clone)]
pub struct OutcomeOptions {
    pub max_iter: usize,
    /// Charge the trace of the functional smoother against the residual
    /// degrees of freedom when estimating `σ̂²`.
    pub charge_functional_df: bool,
}

impl Default for OutcomeOptions {
    fn default() -> Self {
        OutcomeOptions { max_iter: 100, charge_functional_df: false }
    }
}

/// Reusable per-dataset quantities for repeated solves (support iterations,
/// sparsity ladders): the quadrature design, its projections into the Gram
/// eigenbasis, and the count of numerically positive Gram directions.
pub struct OutcomeContext<'a> {
    ctx: &'a GramContext,
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    /// `G = Δ·Ẑ·Σ`.
    g: DMatrix<f64>,
    /// `Δ²·W·Wᵀ` (m×m) with `W = Vᵀ·Ẑᵀ`.
    abar_full: DMatrix<f64>,
    /// `W·X` (m×p).
    wx: DMatrix<f64>,
    /// `W·Y`.
    wy: DVector<f64>,
    /// Number of leading Gram eigenvalues above the positivity cutoff.
    k_pos: usize,
}

impl<'a> OutcomeContext<'a> {
    pub fn new(
        y: &'a DVector<f64>,
        x: &'a DMatrix<f64>,
        zhat: &'a DMatrix<f64>,
        ctx: &'a GramContext,
    ) -> Result<Self> {
        let n = y.len();
        let m = ctx.m();
        if x.nrows() != n || zhat.nrows() != n {
            return Err(validation("outcome fit: X, Zhat, Y row counts must agree"));
        }
        if zhat.ncols() != m {
            return Err(validation("outcome fit: Zhat columns must match the grid"));
        }
        if x.iter().any(|v| !v.is_finite())
            || zhat.iter().any(|v| !v.is_finite())
            || y.iter().any(|v| !v.is_finite())
        {
            return Err(validation("outcome fit: inputs must be finite"));
        }
        let delta = ctx.delta;
        let g = (zhat * &ctx.sigma) * delta;
        let w = ctx.eigenvectors().transpose() * zhat.transpose();
        let abar_full = (&w * w.transpose()) * (delta * delta);
        let wx = &w * x;
        let wy = &w * y;
        let dmax = ctx.eigenvalues().first().copied().unwrap_or(0.0);
        let k_pos = ctx.eigenvalues().iter().take_while(|&&d| d > 1e-13 * dmax).count();
        Ok(OutcomeContext { ctx, x, y, g, abar_full, wx, wy, k_pos })
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
}

/// Inverse of `X_AᵀX_A` via Cholesky; rank deficiency is a numerical error.
fn controls_gram_inv(x_a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xtx = x_a.transpose() * x_a;
    nalgebra::Cholesky::new(xtx)
        .map(|ch| ch.inverse())
        .ok_or_else(|| numerical("rank-deficient control block X_A"))
}

struct SupportSolve {
    alpha: DVector<f64>,
    beta_a: DVector<f64>,
    /// trace of the functional smoother (computed on demand)
    df_b: Option<f64>,
}

fn solve_support(
    oc: &OutcomeContext<'_>,
    active: &[usize],
    lambda: f64,
    want_df: bool,
) -> Result<SupportSolve> {
    let n = oc.y.len();
    let m = oc.ctx.m();
    let k = oc.k_pos;
    let d = oc.ctx.eigenvalues();

    // Ā = Δ²·Vᵀ Ẑᵀ M_A Ẑ V and g₀ = Δ·Vᵀ Ẑᵀ M_A Y, assembled from the
    // cached full-data pieces and the low-rank control correction
    let (abar, g0, xtx_inv, x_a) = if active.is_empty() {
        (oc.abar_full.clone(), (&oc.wy * oc.ctx.delta).clone_owned(), None, None)
    } else {
        let x_a = {
            let mut out = DMatrix::zeros(n, active.len());
            for (c, &l) in active.iter().enumerate() {
                out.set_column(c, &oc.x.column(l));
            }
            out
        };
        let xtx_inv = controls_gram_inv(&x_a)?;
        let wx_a = {
            let mut out = DMatrix::zeros(m, active.len());
            for (c, &l) in active.iter().enumerate() {
                out.set_column(c, &oc.wx.column(l));
            }
            out
        };
        let xty = x_a.transpose() * oc.y;
        let abar = &oc.abar_full
            - (&wx_a * &xtx_inv * wx_a.transpose()) * (oc.ctx.delta * oc.ctx.delta);
        let g0 = (&oc.wy - &wx_a * (&xtx_inv * &xty)) * oc.ctx.delta;
        (abar, g0, Some(xtx_inv), Some(x_a))
    };

    // restrict to the numerically positive Gram directions (descending
    // eigenvalues, so a prefix) and solve (Ā_PP·D_P + nλI) α̃_P = g₀_P
    let mut lhs = DMatrix::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            lhs[(r, c)] = abar[(r, c)] * d[c];
        }
        lhs[(r, r)] += n as f64 * lambda;
    }
    let lu = lhs.clone().lu();
    let alpha_t = lu
        .solve(&DVector::from_fn(k, |b, _| g0[b]))
        .ok_or_else(|| numerical("singular functional ridge system"))?;

    let df_b = if want_df {
        // tr[(ĀD + nλI)⁻¹ ĀD] = k − nλ·tr[(ĀD + nλI)⁻¹]
        let inv = lu.try_inverse().ok_or_else(|| numerical("singular functional ridge system"))?;
        Some(k as f64 - n as f64 * lambda * inv.trace())
    } else {
        None
    };

    let mut alpha = DVector::zeros(m);
    let v = oc.ctx.eigenvectors();
    for j in 0..m {
        let mut s = 0.0;
        for b in 0..k {
            s += v[(j, b)] * alpha_t[b];
        }
        alpha[j] = s;
    }

    let beta_a = match (xtx_inv, x_a) {
        (Some(inv), Some(x_a)) => {
            let resid = oc.y - &oc.g * &alpha;
            inv * (x_a.transpose() * resid)
        }
        _ => DVector::zeros(0),
    };

    Ok(SupportSolve { alpha, beta_a, df_b })
}

/// Closed-form solve on a fixed control set `A`: returns `(α̂, β̂_A)`.
pub fn fit_b_given_support(
    y: &DVector<f64>,
    zhat: &DMatrix<f64>,
    active: &[usize],
    x: &DMatrix<f64>,
    ctx: &GramContext,
    lambda: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(lambda > 0.0) {
        return Err(validation("outcome lambda must be positive"));
    }
    for w in active.windows(2) {
        if w[0] >= w[1] {
            return Err(validation("active set must be strictly ascending"));
        }
    }
    if active.iter().any(|&l| l >= x.ncols()) {
        return Err(validation("active index out of range"));
    }
    let oc = OutcomeContext::new(y, x, zhat, ctx)?;
    let sol = solve_support(&oc, active, lambda, false)?;
    Ok((sol.alpha, sol.beta_a))
}

/// Default ridge level for the functional term: `1e-3 · trace(Σ)/m`.
pub fn default_outcome_lambda(ctx: &GramContext) -> f64 {
    1e-3 * ctx.sigma.trace() / ctx.m() as f64
}

/// Fit the outcome model with `J_y`-sparse controls by support detection and
/// closed-form root finding. Stops when the active set stabilizes; a cycle
/// returns the visited state of minimal objective value.
pub fn outcome_fit(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    zhat: &DMatrix<f64>,
    grid: &Grid,
    kernel: &KernelSpec,
    j_y: usize,
    lambda: f64,
    opts: &OutcomeOptions,
) -> Result<OutcomeFit> {
    let ctx = GramContext::new(kernel, grid)?;
    outcome_fit_with_ctx(y, x, zhat, &ctx, j_y, lambda, opts)
}

pub fn outcome_fit_with_ctx(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    zhat: &DMatrix<f64>,
    ctx: &GramContext,
    j_y: usize,
    lambda: f64,
    opts: &OutcomeOptions,
) -> Result<OutcomeFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if j_y > p {
        return Err(validation(format!("need J_y <= p, got J_y = {j_y}, p = {p}")));
    }
    if n <= j_y {
        return Err(validation(format!("need n > J_y, got n = {n}, J_y = {j_y}")));
    }
    if !(lambda > 0.0) {
        return Err(validation("outcome lambda must be positive"));
    }
    if opts.max_iter == 0 {
        return Err(validation("max_iter must be positive"));
    }
    let oc = OutcomeContext::new(y, x, zhat, ctx)?;

    // start from the exact solve on the empty support: the functional term
    // strips the reduced-form loadings of the fitted curves before the
    // first selection, so the first duals estimate the direct effects
    let mut beta = DVector::zeros(p);
    let mut alpha = solve_support(&oc, &[], lambda, false)?.alpha;
    let mut active: Vec<usize> = Vec::new();
    let mut first = true;

    let loss_of = |beta: &DVector<f64>, alpha: &DVector<f64>| -> f64 {
        let resid = y - x * beta - &oc.g * alpha;
        let d = ctx.eigenvalues();
        let v = ctx.eigenvectors();
        let at = v.transpose() * alpha;
        let smooth: f64 = (0..ctx.m()).map(|b| at[b] * at[b] * d[b]).sum();
        resid.norm_squared() / (2.0 * n as f64) + lambda / 2.0 * smooth
    };

    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, Vec<usize>)> = None;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let resid = y - x * &beta - &oc.g * &alpha;
        let duals = x.transpose() * &resid / n as f64;
        let scores: Vec<f64> = (0..p).map(|l| (beta[l] + duals[l]).abs()).collect();
        let mut next: Vec<usize> = top_k_by_score(&scores, j_y);
        next.sort_unstable();

        if !first && next == active {
            converged = true;
            break;
        }
        if visited.contains(&next) {
            let (_, b, a, act) = best.clone().expect("cycle implies a visited state");
            beta = b;
            alpha = a;
            active = act;
            converged = true;
            break;
        }
        first = false;

        let sol = solve_support(&oc, &next, lambda, false)?;
        beta = DVector::zeros(p);
        for (k, &l) in next.iter().enumerate() {
            beta[l] = sol.beta_a[k];
        }
        alpha = sol.alpha;
        iterations += 1;
        let loss = loss_of(&beta, &alpha);
        visited.insert(next.clone());
        if best.as_ref().map_or(true, |(bl, ..)| loss < *bl) {
            best = Some((loss, beta.clone(), alpha.clone(), next.clone()));
        }
        active = next;
    }

    if !converged {
        let (_, b, a, act) = best.clone().expect("at least one solve performed");
        beta = b;
        alpha = a;
        active = act;
    }

    let resid = y - x * &beta - &oc.g * &alpha;
    let mut denom = (n - active.len()) as f64;
    if opts.charge_functional_df {
        let sol = solve_support(&oc, &active, lambda, true)?;
        denom -= sol.df_b.unwrap_or(0.0);
        if denom <= 0.0 {
            return Err(numerical("no residual degrees of freedom after charging df"));
        }
    }
    let sigma2 = resid.norm_squared() / denom;
    let loss = loss_of(&beta, &alpha);
    let b_on_grid = &ctx.sigma * &alpha;

    Ok(OutcomeFit {
        beta,
        active_set: active,
        alpha,
        b_on_grid,
        lambda,
        sigma2,
        loss,
        iterations,
        converged,
    })
}

/// Endogeneity-ignoring baseline: the identical fit with the observed
/// exposure values in place of the fitted ones.
pub fn pflm_baseline_fit(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    grid: &Grid,
    kernel: &KernelSpec,
    j_y: usize,
    lambda: f64,
    opts: &OutcomeOptions,
) -> Result<OutcomeFit> {
    outcome_fit(y, x, z, grid, kernel, j_y, lambda, opts)
}

/// Choose the control sparsity by a high-dimensional BIC,
/// `HBIC(J) = log σ̂²_J + |Â_J| · log(p) · log(log n) / n`,
/// over the candidate grid; ties favor the smaller sparsity.
pub fn select_sparsity(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    zhat: &DMatrix<f64>,
    ctx: &GramContext,
    j_grid: &[usize],
    lambda: f64,
    opts: &OutcomeOptions,
) -> Result<(usize, OutcomeFit)> {
    if j_grid.is_empty() {
        return Err(validation("sparsity grid must be nonempty"));
    }
    let n = y.len() as f64;
    let p = x.ncols() as f64;
    let penalty_unit = p.ln() * n.ln().ln() / n;
    let mut best: Option<(f64, usize, OutcomeFit)> = None;
    for &j in j_grid {
        let fit = outcome_fit_with_ctx(y, x, zhat, ctx, j, lambda, opts)?;
        let hbic = fit.sigma2.max(1e-300).ln() + fit.active_set.len() as f64 * penalty_unit;
        let better = match &best {
            None => true,
            Some((bh, bj, _)) => hbic < *bh || (hbic == *bh && j < *bj),
        };
        if better {
            best = Some((hbic, j, fit));
        }
    }
    let (_, j, fit) = best.unwrap();
    Ok((j, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn setup(m: usize) -> (Grid, KernelSpec, GramContext) {
        let grid = Grid::uniform_1d(m).unwrap();
        let kernel = KernelSpec::Gaussian { bandwidth: 0.2 };
        let ctx = GramContext::new(&kernel, &grid).unwrap();
        (grid, kernel, ctx)
    }

    fn projector(x_a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x_a.nrows();
        let inv = controls_gram_inv(x_a).unwrap();
        DMatrix::identity(n, n) - x_a * inv * x_a.transpose()
    }

    #[test]
    fn ridge_limit_recovers_ols_and_kills_b() {
        let (_, _, ctx) = setup(12);
        let mut rng = RngStream::new(41);
        let n = 60;
        let x = DMatrix::from_fn(n, 4, |_, _| rng.next_normal());
        let zhat = DMatrix::from_fn(n, 12, |_, _| rng.next_normal());
        let y = DVector::from_fn(n, |i, _| {
            2.0 * x[(i, 0)] - x[(i, 2)] + 0.1 * rng.next_normal()
        });
        let active = vec![0usize, 2];
        let (alpha, beta_a) = fit_b_given_support(&y, &zhat, &active, &x, &ctx, 1e6).unwrap();
        assert!((&ctx.sigma * &alpha).norm() <= 1e-4, "B̂ should vanish");
        // OLS oracle on the active block
        let x_a = {
            let mut out = DMatrix::zeros(n, 2);
            out.set_column(0, &x.column(0));
            out.set_column(1, &x.column(2));
            out
        };
        let ols = controls_gram_inv(&x_a).unwrap() * x_a.transpose() * &y;
        assert!((&beta_a - &ols).amax() <= 1e-6);
    }

    #[test]
    fn exactly_representable_signal_is_recovered() {
        let (_, _, ctx) = setup(15);
        let mut rng = RngStream::new(42);
        let n = 80;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.next_normal());
        let zhat = DMatrix::from_fn(n, 15, |i, j| {
            (std::f64::consts::PI * (j as f64 + 1.0) / 15.0 * (1.0 + i as f64 / n as f64)).sin()
                + 0.3 * rng.next_normal()
        });
        let mut alpha_star = DVector::zeros(15);
        alpha_star[2] = 1.5;
        alpha_star[9] = -0.7;
        let zero_y = DVector::zeros(n);
        let oc = OutcomeContext::new(&zero_y, &x, &zhat, &ctx).unwrap();
        let y = &oc.g * &alpha_star;
        let (alpha, beta_a) = fit_b_given_support(&y, &zhat, &[], &x, &ctx, 1e-8).unwrap();
        assert_eq!(beta_a.len(), 0);
        let pred = &oc.g * &alpha;
        let mse = (&pred - &y).norm_squared() / n as f64;
        assert!(mse <= 1e-4, "in-sample mse {mse}");
    }

    #[test]
    fn zero_outcome_gives_zero_fit() {
        let (grid, kernel, _) = setup(10);
        let mut rng = RngStream::new(43);
        let n = 30;
        let x = DMatrix::from_fn(n, 5, |_, _| rng.next_normal());
        let zhat = DMatrix::from_fn(n, 10, |_, _| rng.next_normal());
        let y = DVector::zeros(n);
        let fit = outcome_fit(
            &y, &x, &zhat, &grid, &kernel, 2, 1e-3, &OutcomeOptions::default(),
        )
        .unwrap();
        assert_eq!(fit.beta.amax(), 0.0);
        assert_eq!(fit.b_on_grid.amax(), 0.0);
        assert_eq!(fit.sigma2, 0.0);
    }

    #[test]
    fn sdar_selection_matches_ols_oracle() {
        let (grid, kernel, _) = setup(10);
        let mut rng = RngStream::new(44);
        let n = 100;
        let p = 8;
        let x = DMatrix::from_fn(n, p, |_, _| rng.next_normal());
        let zhat = DMatrix::zeros(n, 10);
        let y = DVector::from_fn(n, |i, _| {
            3.0 * x[(i, 0)] - 2.0 * x[(i, 3)] + 0.01 * rng.next_normal()
        });
        let fit = outcome_fit(
            &y, &x, &zhat, &grid, &kernel, 2, 1e-3, &OutcomeOptions::default(),
        )
        .unwrap();
        assert_eq!(fit.active_set, vec![0, 3]);
        assert!((fit.beta[0] - 3.0).abs() <= 0.01);
        assert!((fit.beta[3] + 2.0).abs() <= 0.01);
    }

    #[test]
    fn projector_is_idempotent_and_annihilates_controls() {
        let mut rng = RngStream::new(45);
        let x_a = DMatrix::from_fn(40, 3, |_, _| rng.next_normal());
        let m = projector(&x_a);
        assert!(((&m * &m) - &m).amax() <= 1e-10);
        assert!(((&m - m.transpose()).amax()) <= 1e-12);
        assert!((&m * &x_a).amax() <= 1e-10);
    }

    #[test]
    fn stationarity_at_the_closed_form() {
        let (_, _, ctx) = setup(12);
        let mut rng = RngStream::new(46);
        let n = 50;
        let x = DMatrix::from_fn(n, 4, |_, _| rng.next_normal());
        let zhat = DMatrix::from_fn(n, 12, |_, _| rng.next_normal());
        let y = DVector::from_fn(n, |_, _| rng.next_normal());
        let active = vec![1usize, 3];
        let lambda = 5e-3;
        let (alpha, beta_a) = fit_b_given_support(&y, &zhat, &active, &x, &ctx, lambda).unwrap();
        let oc = OutcomeContext::new(&y, &x, &zhat, &ctx).unwrap();
        let mut beta = DVector::zeros(4);
        beta[1] = beta_a[0];
        beta[3] = beta_a[1];
        let resid = &y - &x * &beta - &oc.g * &alpha;
        // ∂/∂β on the active block
        for &l in &active {
            let g = x.column(l).dot(&resid) / n as f64;
            assert!(g.abs() <= 1e-8 * (1.0 + y.norm()), "beta gradient {g}");
        }
        // ∂/∂α: −n⁻¹Gᵀresid + λΣα = 0
        let grad = -(oc.g.transpose() * &resid) / n as f64 + &ctx.sigma * &alpha * lambda;
        assert!(grad.norm() <= 1e-8 * (1.0 + y.norm()), "alpha gradient {}", grad.norm());
    }

    #[test]
    fn loss_at_fixed_point_beats_zero_state() {
        let (grid, kernel, _) = setup(10);
        for seed in 0..8u64 {
            let mut rng = RngStream::new(600 + seed);
            let n = 40;
            let x = DMatrix::from_fn(n, 6, |_, _| rng.next_normal());
            let zhat = DMatrix::from_fn(n, 10, |_, _| rng.next_normal());
            let y = DVector::from_fn(n, |i, _| x[(i, 1)] + rng.next_normal());
            let fit = outcome_fit(
                &y, &x, &zhat, &grid, &kernel, 3, 1e-3, &OutcomeOptions::default(),
            )
            .unwrap();
            assert!(fit.loss <= y.norm_squared() / (2.0 * n as f64) + 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn column_permutation_equivariance() {
        let (grid, kernel, _) = setup(10);
        let mut rng = RngStream::new(47);
        let n = 60;
        let p = 5;
        let x = DMatrix::from_fn(n, p, |_, _| rng.next_normal());
        let zhat = DMatrix::from_fn(n, 10, |_, _| rng.next_normal());
        let y = DVector::from_fn(n, |i, _| 2.0 * x[(i, 0)] - x[(i, 4)] + 0.05 * rng.next_normal());
        let fit = outcome_fit(
            &y, &x, &zhat, &grid, &kernel, 2, 1e-3, &OutcomeOptions::default(),
        )
        .unwrap();
        let perm = [4usize, 1, 2, 3, 0];
        let xp = DMatrix::from_fn(n, p, |i, l| x[(i, perm[l])]);
        let fitp = outcome_fit(
            &y, &xp, &zhat, &grid, &kernel, 2, 1e-3, &OutcomeOptions::default(),
        )
        .unwrap();
        for l in 0..p {
            assert!((fit.beta[perm[l]] - fitp.beta[l]).abs() <= 1e-9);
        }
        let mut mapped: Vec<usize> =
            fitp.active_set.iter().map(|&l| perm[l]).collect();
        mapped.sort_unstable();
        assert_eq!(mapped, fit.active_set);
    }

    #[test]
    fn huge_lambda_reduces_to_pure_sdar() {
        // with the functional part suppressed the fit must match an
        // SDAR-only reference (duals + top-J + OLS on the support)
        let (grid, kernel, _) = setup(10);
        let mut rng = RngStream::new(48);
        let n = 80;
        let p = 7;
        let x = DMatrix::from_fn(n, p, |_, _| rng.next_normal());
        let zhat = DMatrix::from_fn(n, 10, |_, _| rng.next_normal());
        let y = DVector::from_fn(n, |i, _| {
            4.0 * x[(i, 2)] + 2.5 * x[(i, 5)] + 0.1 * rng.next_normal()
        });
        let fit = outcome_fit(
            &y, &x, &zhat, &grid, &kernel, 2, 1e9, &OutcomeOptions::default(),
        )
        .unwrap();
        assert!(fit.b_on_grid.norm() <= 1e-5);

        // SDAR-only reference
        let mut beta = DVector::zeros(p);
        let mut active: Vec<usize> = vec![];
        for _ in 0..50 {
            let resid = &y - &x * &beta;
            let duals = x.transpose() * &resid / n as f64;
            let scores: Vec<f64> = (0..p).map(|l| (beta[l] + duals[l]).abs()).collect();
            let mut next = top_k_by_score(&scores, 2);
            next.sort_unstable();
            if next == active {
                break;
            }
            let mut x_a = DMatrix::zeros(n, 2);
            for (k, &l) in next.iter().enumerate() {
                x_a.set_column(k, &x.column(l));
            }
            let ols = controls_gram_inv(&x_a).unwrap() * x_a.transpose() * &y;
            beta = DVector::zeros(p);
            for (k, &l) in next.iter().enumerate() {
                beta[l] = ols[k];
            }
            active = next;
        }
        assert_eq!(fit.active_set, active);
        assert!((&fit.beta - &beta).amax() <= 1e-4);
    }

    #[test]
    fn sparsity_selection_behaviour() {
        let (grid, kernel, ctx) = setup(10);
        let _ = grid;
        let _ = kernel;
        let mut rng = RngStream::new(49);
        let n = 120;
        let p = 12;
        let x = DMatrix::from_fn(n, p, |_, _| rng.next_normal());
        let zhat = DMatrix::from_fn(n, 10, |_, _| rng.next_normal());

        // single-element grid returns that element
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] + rng.next_normal());
        let (j, _) = select_sparsity(
            &y, &x, &zhat, &ctx, &[4], 1e-3, &OutcomeOptions::default(),
        )
        .unwrap();
        assert_eq!(j, 4);

        // pure noise favors the smallest sparsity
        let noise = DVector::from_fn(n, |_, _| rng.next_normal());
        let (j, _) = select_sparsity(
            &noise, &x, &zhat, &ctx, &[2, 4, 6, 8], 1e-3, &OutcomeOptions::default(),
        )
        .unwrap();
        assert_eq!(j, 2);
    }

    #[test]
    fn baseline_with_identical_inputs_is_bitwise_equal() {
        let (grid, kernel, _) = setup(10);
        let mut rng = RngStream::new(50);
        let n = 40;
        let x = DMatrix::from_fn(n, 5, |_, _| rng.next_normal());
        let z = DMatrix::from_fn(n, 10, |_, _| rng.next_normal());
        let y = DVector::from_fn(n, |i, _| x[(i, 1)] + rng.next_normal());
        let a = outcome_fit(&y, &x, &z, &grid, &kernel, 2, 1e-3, &OutcomeOptions::default())
            .unwrap();
        let b = pflm_baseline_fit(&y, &x, &z, &grid, &kernel, 2, 1e-3, &OutcomeOptions::default())
            .unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.sigma2, b.sigma2);
    }

    #[test]
    fn input_validation() {
        let (grid, kernel, _) = setup(10);
        let x = DMatrix::zeros(20, 5);
        let zhat = DMatrix::zeros(20, 10);
        let y = DVector::zeros(20);
        let opts = OutcomeOptions::default();
        assert!(outcome_fit(&y, &x, &zhat, &grid, &kernel, 6, 1e-3, &opts).is_err()); // J_y > p
        assert!(outcome_fit(&y, &x, &zhat, &grid, &kernel, 2, 0.0, &opts).is_err());
        let bad = DVector::from_element(20, f64::NAN);
        assert!(outcome_fit(&bad, &x, &zhat, &grid, &kernel, 2, 1e-3, &opts).is_err());
    }
}
