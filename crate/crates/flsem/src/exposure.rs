//! Function-on-scalar exposure fitting with exact L0 sparsity.
//!
//! The exposure model `Z_i(t) = Σ_ℓ X_iℓ C_ℓ(t) + E_i(t)` is fit by
//! minimizing
//!
//! ```text
//! L(C) = ‖Z − X̌ vec(C)‖² / (2nm) + (λ_K/2) Σ_ℓ C_ℓᵀ Σ C_ℓ     s.t. at most J nonzero rows,
//! ```
//!
//! where each coefficient function is represented by its kernel sections at
//! the grid points, `C_ℓ(t) = Σ_j C_ℓj K(t, t_j)`, `Σ` is the pointwise Gram
//! matrix, and `X̌ = X ⊗ Σ`. The group support detection and root finding
//! iteration alternates (i) scoring every covariate by the discrete L2 norm
//! of the function values of `C_ℓ + d_ℓ`, where `d_ℓ` is the preconditioned
//! dual `P_ℓ⁻¹[X̌_ℓᵀ(Z − X̌C) − nmλ_K Σ C_ℓ]` with
//! `P_ℓ = X̌_ℓᵀX̌_ℓ + nmλ_K Σ`, (ii) keeping the J best, and (iii) solving the
//! ridge system exactly on the kept set. A stable active set is a fixed
//! point of the hard-thresholding characterization checked by
//! [`fixed_point_check`].
//!
//! The active-set solve exploits the Kronecker structure
//! `X̌_AᵀX̌_A = (X_AᵀX_A) ⊗ Σ²`: with eigendecompositions `X_AᵀX_A = UGUᵀ`
//! and `Σ = VDVᵀ`, the normal system diagonalizes and the per-iteration cost
//! is two small eigendecompositions plus matrix products — the `(pm)×(pm)`
//! system is never formed.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{numerical, validation, Result};
use crate::numerics::{gram_matrix, symmetric_eigen, Grid, KernelSpec};
use crate::screening::top_k_by_score;

/// Default generalized cross-validation ladder: 10 log-spaced values
/// spanning `[1e-6, 1e-1]`.
pub fn default_gcv_ladder() -> Vec<f64> {
    let (lo, hi, k) = (1e-6f64, 1e-1f64, 10);
    (0..k)
        .map(|i| {
            let t = i as f64 / (k - 1) as f64;
            10f64.powf(lo.log10() + t * (hi.log10() - lo.log10()))
        })
        .collect()
}

/// Smoothing-parameter choice for [`fgsdar_fit`].
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// Minimize GCV over the default ladder.
    Gcv,
    /// Minimize GCV over an explicit ladder.
    GcvLadder(Vec<f64>),
}

/// Precomputed Gram matrix and its spectral factorization for one
/// (kernel, grid) pair; shared across solves, GCV ladder points, and
/// Monte Carlo replicates on the same grid.
#[derive(Debug, Clone)]
pub struct GramContext {
    pub sigma: DMatrix<f64>,
    /// Orthonormal eigenvectors of `sigma` (columns), descending eigenvalues.
    v: DMatrix<f64>,
    /// Eigenvalues of `sigma`, descending, clipped at zero.
    d: Vec<f64>,
    pub delta: f64,
}

impl GramContext {
    pub fn new(kernel: &KernelSpec, grid: &Grid) -> Result<Self> {
        let sigma = gram_matrix(kernel, grid)?;
        Self::from_sigma(sigma, grid.delta())
    }

    pub fn from_sigma(sigma: DMatrix<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(validation("quadrature weight must be positive"));
        }
        let eig = symmetric_eigen(&sigma);
        let d = eig.clipped_values()?;
        Ok(GramContext { sigma, v: eig.vectors, d, delta })
    }

    pub fn m(&self) -> usize {
        self.d.len()
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.d
    }

    /// Tilde-convention square root of the Gram operator, `(ΔΣ)^{1/2}`.
    pub fn ktilde_sqrt(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut scaled = self.v.clone();
        for (k, &dv) in self.d.iter().enumerate() {
            let s = (self.delta * dv).sqrt();
            for r in 0..m {
                scaled[(r, k)] *= s;
            }
        }
        let root = &scaled * self.v.transpose();
        (&root + root.transpose()) * 0.5
    }
}

/// One exposure fit: active covariates, representer coefficient rows
/// (zero off the active set), and the objective value reached.
#[derive(Debug, Clone)]
pub struct ExposureFit {
    /// Active covariate indices, ascending.
    pub active_set: Vec<usize>,
    /// p×m representer coefficients; row ℓ reconstructs
    /// `Ĉ_ℓ(t) = Σ_j coef[ℓ,j] K(t, t_j)`.
    pub coef: DMatrix<f64>,
    pub lambda_k: f64,
    pub grid: Grid,
    pub kernel: KernelSpec,
    /// Number of active-set solves performed.
    pub iterations: usize,
    /// Value of the fitting objective at the returned state.
    pub loss: f64,
    pub converged: bool,
}

impl ExposureFit {
    /// Fitted coefficient functions evaluated on the grid (p×m).
    pub fn coef_on_grid(&self, ctx: &GramContext) -> DMatrix<f64> {
        &self.coef * &ctx.sigma
    }
}

/// Algorithm state: current coefficients, duals, and active set.
#[derive(Debug, Clone)]
pub struct FgsdarState {
    pub coef: DMatrix<f64>,
    pub dual: DMatrix<f64>,
    /// Ascending; empty before the first solve.
    pub active: Vec<usize>,
}

fn check_finite(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(validation(format!("{name} contains non-finite values")));
    }
    Ok(())
}

fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, idx.len());
    for (k, &l) in idx.iter().enumerate() {
        out.set_column(k, &x.column(l));
    }
    out
}

/// Exact ridge solve on a fixed active set: solves
/// `((X_AᵀX_A) ⊗ Σ² + nmλ_K (I ⊗ Σ)) vec(C_A) = (X_Aᵀ ⊗ Σ) vec(Z)`
/// and returns the J×m coefficient rows.
///
/// Directions where `Σ` has a zero eigenvalue carry no signal and no
/// penalty; the minimal-norm solution sets them to zero. With `λ_K = 0` the
/// system is singular unless both `X_A` and `Σ` have full rank.
pub fn ridge_solve_active(
    x_a: &DMatrix<f64>,
    z: &DMatrix<f64>,
    ctx: &GramContext,
    lambda_k: f64,
) -> Result<DMatrix<f64>> {
    let (n, j) = (x_a.nrows(), x_a.ncols());
    let m = ctx.m();
    if z.nrows() != n || z.ncols() != m {
        return Err(validation("ridge_solve_active: Z shape must be n×m"));
    }
    if !(lambda_k >= 0.0) {
        return Err(validation("lambda_k must be nonnegative"));
    }
    let nm_lambda = (n * m) as f64 * lambda_k;

    let xtx = x_a.transpose() * x_a;
    let eig = symmetric_eigen(&xtx);
    let g: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let u = eig.vectors;

    if lambda_k == 0.0 {
        let g_ok = g.last().copied().unwrap_or(0.0) > 1e-12 * g.first().copied().unwrap_or(0.0);
        let d_ok = ctx.d.last().copied().unwrap_or(0.0)
            > 1e-12 * ctx.d.first().copied().unwrap_or(0.0);
        if !g_ok || !d_ok {
            return Err(numerical(
                "singular system at lambda_k = 0 with rank-deficient X_A or Gram",
            ));
        }
    }

    // transformed right-hand side: R = Uᵀ (X_Aᵀ Z) V
    let r = u.transpose() * (x_a.transpose() * z) * &ctx.v;
    let mut w = DMatrix::zeros(j, m);
    for b in 0..m {
        let db = ctx.d[b];
        if db <= 0.0 {
            continue;
        }
        for a in 0..j {
            w[(a, b)] = r[(a, b)] / (g[a] * db + nm_lambda);
        }
    }
    Ok(&u * w * ctx.v.transpose())
}

/// Duals for every covariate at the given state:
/// `d_ℓ = P_ℓ⁻¹ [X̌_ℓᵀ(Z − X̌C) − nmλ_K Σ C_ℓ]`. At an exact active-set
/// solve the active rows vanish.
fn compute_duals(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    ctx: &GramContext,
    lambda_k: f64,
    coef: &DMatrix<f64>,
    fitted: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let m = ctx.m();
    let nm_lambda = (n * m) as f64 * lambda_k;

    let resid = z - fitted;
    // numerator (before the shared Σ factor, which cancels against P_ℓ):
    // columns are Eᵀx_ℓ − nmλ_K C_ℓ
    let mut num = resid.transpose() * x;
    if nm_lambda != 0.0 {
        num -= coef.transpose() * nm_lambda;
    }
    let num_t = ctx.v.transpose() * num; // m×p in the eigenbasis

    let col_sq: Vec<f64> = (0..p).map(|l| x.column(l).norm_squared()).collect();
    let mut dual_t = DMatrix::zeros(m, p);
    for b in 0..m {
        let db = ctx.d[b];
        if db <= 0.0 {
            continue;
        }
        for l in 0..p {
            let denom = col_sq[l] * db + nm_lambda;
            if denom > 0.0 {
                dual_t[(b, l)] = num_t[(b, l)] / denom;
            }
        }
    }
    (&ctx.v * dual_t).transpose()
}

/// Group selection scores: squared discrete L2 norm of the function values
/// of `C_ℓ + d_ℓ`, i.e. `Δ·‖Σ(C_ℓ + d_ℓ)‖²`.
fn group_scores(coef: &DMatrix<f64>, dual: &DMatrix<f64>, ctx: &GramContext) -> Vec<f64> {
    let vals = (coef + dual) * &ctx.sigma;
    (0..vals.nrows()).map(|l| ctx.delta * vals.row(l).norm_squared()).collect()
}

/// Objective value at a state (data term plus smoothness penalty).
fn eq_loss(
    z: &DMatrix<f64>,
    fitted: &DMatrix<f64>,
    coef_active: &DMatrix<f64>,
    ctx: &GramContext,
    lambda_k: f64,
) -> f64 {
    let nm = (z.nrows() * z.ncols()) as f64;
    let rss = (z - fitted).norm_squared();
    let smooth = (coef_active * &ctx.sigma).component_mul(coef_active).sum();
    rss / (2.0 * nm) + lambda_k / 2.0 * smooth
}

/// One support-detection / root-finding step: score groups at the current
/// state, keep the J best (ties to the smaller index), solve the ridge
/// system on the kept set, and refresh the duals (zero on the active set).
pub fn fgsdar_step(
    state: &FgsdarState,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    ctx: &GramContext,
    lambda_k: f64,
    j: usize,
) -> Result<FgsdarState> {
    let scores = group_scores(&state.coef, &state.dual, ctx);
    let mut active = top_k_by_score(&scores, j);
    active.sort_unstable();
    solve_on_support(&active, x, z, ctx, lambda_k)
}

/// Ridge solve on `active` plus dual refresh; returns the full state.
fn solve_on_support(
    active: &[usize],
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    ctx: &GramContext,
    lambda_k: f64,
) -> Result<FgsdarState> {
    let p = x.ncols();
    let x_a = columns(x, active);
    let coef_a = ridge_solve_active(&x_a, z, ctx, lambda_k)?;
    let mut coef = DMatrix::zeros(p, ctx.m());
    for (k, &l) in active.iter().enumerate() {
        coef.set_row(l, &coef_a.row(k));
    }
    let fitted = &x_a * (&coef_a * &ctx.sigma);
    let mut dual = compute_duals(x, z, ctx, lambda_k, &coef, &fitted);
    for &l in active {
        dual.fill_row(l, 0.0);
    }
    Ok(FgsdarState { coef, dual, active: active.to_vec() })
}

struct CoreFit {
    state: FgsdarState,
    loss: f64,
    iterations: usize,
    converged: bool,
}

fn fit_core(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    ctx: &GramContext,
    j: usize,
    lambda_k: f64,
    max_iter: usize,
) -> Result<CoreFit> {
    let p = x.ncols();
    let m = ctx.m();

    let zeros = DMatrix::zeros(p, m);
    let fitted0 = DMatrix::zeros(x.nrows(), m);
    let d0 = compute_duals(x, z, ctx, lambda_k, &zeros, &fitted0);
    let mut state = FgsdarState { coef: zeros, dual: d0, active: Vec::new() };

    let loss_of = |st: &FgsdarState| -> f64 {
        let x_a = columns(x, &st.active);
        let coef_a = {
            let mut c = DMatrix::zeros(st.active.len(), m);
            for (k, &l) in st.active.iter().enumerate() {
                c.set_row(k, &st.coef.row(l));
            }
            c
        };
        let fitted = &x_a * (&coef_a * &ctx.sigma);
        eq_loss(z, &fitted, &coef_a, ctx, lambda_k)
    };

    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    let mut best: Option<(f64, FgsdarState)> = None;
    let mut iterations = 0;

    for _ in 0..max_iter {
        let scores = group_scores(&state.coef, &state.dual, ctx);
        let mut next_active = top_k_by_score(&scores, j);
        next_active.sort_unstable();

        if next_active == state.active {
            // the current state is already the exact solve on this support
            let loss = loss_of(&state);
            return Ok(CoreFit { state, loss, iterations, converged: true });
        }
        if visited.contains(&next_active) {
            // cycle: return the visited state of minimal loss
            let (loss, st) = best.expect("cycle implies at least one visited state");
            return Ok(CoreFit { state: st, loss, iterations, converged: true });
        }

        state = solve_on_support(&next_active, x, z, ctx, lambda_k)?;
        iterations += 1;
        let loss = loss_of(&state);
        visited.insert(next_active);
        if best.as_ref().map_or(true, |(bl, _)| loss < *bl) {
            best = Some((loss, state.clone()));
        }
    }

    let (loss, st) = best.expect("max_iter >= 1 guarantees a visited state");
    Ok(CoreFit { state: st, loss, iterations, converged: false })
}

/// Hat-matrix trace of the active-set ridge smoother at `lambda_k`.
fn hat_trace(x_a: &DMatrix<f64>, ctx: &GramContext, lambda_k: f64) -> f64 {
    let n = x_a.nrows();
    let m = ctx.m();
    let nm_lambda = (n * m) as f64 * lambda_k;
    let eig = symmetric_eigen(&(x_a.transpose() * x_a));
    let mut df = 0.0;
    for ga in eig.values.iter().map(|v| v.max(0.0)) {
        for &db in &ctx.d {
            let num = ga * db * db;
            if num > 0.0 {
                df += num / (ga * db * db + nm_lambda * db);
            }
        }
    }
    df
}

/// Pick `λ_K` from a ladder by generalized cross-validation,
/// `GCV(λ) = (RSS/nm) / (1 − df/nm)²` with `df` the trace of the
/// active-set hat matrix of the fit at `λ`. Degenerate candidates
/// (`df ≥ nm`) are skipped. Returns the winning `λ` and its fit.
pub fn gcv_select(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    ctx: &GramContext,
    j: usize,
    ladder: &[f64],
    max_iter: usize,
) -> Result<(f64, ExposureFitParts)> {
    if ladder.is_empty() {
        return Err(validation("gcv ladder must be nonempty"));
    }
    if ladder.iter().any(|l| !(*l > 0.0)) {
        return Err(validation("gcv ladder values must be positive"));
    }
    let nm = (z.nrows() * z.ncols()) as f64;
    let mut best: Option<(f64, f64, CoreFit)> = None;
    for &lam in ladder {
        let core = fit_core(x, z, ctx, j, lam, max_iter)?;
        let x_a = columns(x, &core.state.active);
        let df = hat_trace(&x_a, ctx, lam);
        if df >= nm {
            continue;
        }
        let fitted = x_active_fitted(x, &core.state, ctx);
        let rss = (z - fitted).norm_squared();
        let gcv = (rss / nm) / (1.0 - df / nm).powi(2);
        if best.as_ref().map_or(true, |(bg, _, _)| gcv < *bg) {
            best = Some((gcv, lam, core));
        }
    }
    let (_, lam, core) =
        best.ok_or_else(|| numerical("every GCV candidate was degenerate (df >= nm)"))?;
    Ok((lam, ExposureFitParts { core }))
}

/// Opaque carrier so GCV winners can be converted without refitting.
pub struct ExposureFitParts {
    core: CoreFit,
}

fn x_active_fitted(x: &DMatrix<f64>, state: &FgsdarState, ctx: &GramContext) -> DMatrix<f64> {
    let x_a = columns(x, &state.active);
    let mut coef_a = DMatrix::zeros(state.active.len(), ctx.m());
    for (k, &l) in state.active.iter().enumerate() {
        coef_a.set_row(k, &state.coef.row(l));
    }
    &x_a * (&coef_a * &ctx.sigma)
}

/// Fit the exposure model: iterate support detection and exact ridge
/// root-finding from `C⁰ = 0` until the active set stabilizes, cycles
/// (min-loss visited state), or `max_iter` solves; `λ_K` by GCV on request.
pub fn fgsdar_fit(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    grid: &Grid,
    kernel: &KernelSpec,
    j: usize,
    lambda: &LambdaChoice,
    max_iter: usize,
) -> Result<ExposureFit> {
    let ctx = GramContext::new(kernel, grid)?;
    fgsdar_fit_with_ctx(x, z, grid, kernel, &ctx, j, lambda, max_iter)
}

/// As [`fgsdar_fit`] with a caller-provided [`GramContext`] (reused across
/// replicates and ladder points).
#[allow(clippy::too_many_arguments)]
pub fn fgsdar_fit_with_ctx(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    grid: &Grid,
    kernel: &KernelSpec,
    ctx: &GramContext,
    j: usize,
    lambda: &LambdaChoice,
    max_iter: usize,
) -> Result<ExposureFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if z.nrows() != n {
        return Err(validation("X and Z must have the same number of rows"));
    }
    if z.ncols() != grid.len() {
        return Err(validation("Z columns must match the grid size"));
    }
    if j == 0 || j > p {
        return Err(validation(format!("need 1 <= J <= p, got J = {j}, p = {p}")));
    }
    if n < j {
        return Err(validation(format!("need n >= J, got n = {n}, J = {j}")));
    }
    if max_iter == 0 {
        return Err(validation("max_iter must be positive"));
    }
    check_finite(x, "X")?;
    check_finite(z, "Z")?;

    let (lambda_k, core) = match lambda {
        LambdaChoice::Fixed(l) => {
            if !(*l >= 0.0) {
                return Err(validation("lambda_k must be nonnegative"));
            }
            (*l, fit_core(x, z, ctx, j, *l, max_iter)?)
        }
        LambdaChoice::Gcv => {
            let ladder = default_gcv_ladder();
            let (l, parts) = gcv_select(x, z, ctx, j, &ladder, max_iter)?;
            (l, parts.core)
        }
        LambdaChoice::GcvLadder(ladder) => {
            let (l, parts) = gcv_select(x, z, ctx, j, ladder, max_iter)?;
            (l, parts.core)
        }
    };

    Ok(ExposureFit {
        active_set: core.state.active,
        coef: core.state.coef,
        lambda_k,
        grid: grid.clone(),
        kernel: kernel.clone(),
        iterations: core.iterations,
        loss: core.loss,
        converged: core.converged,
    })
}

/// Fitted exposure curves `Ẑ = X · coef · Σ` evaluated on the fit's grid.
pub fn predict_zhat(fit: &ExposureFit, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != fit.coef.nrows() {
        return Err(validation(format!(
            "X has {} columns but the fit was built with p = {}",
            x.ncols(),
            fit.coef.nrows()
        )));
    }
    let ctx = GramContext::new(&fit.kernel, &fit.grid)?;
    Ok(x * &fit.coef * &ctx.sigma)
}

/// Verify the hard-thresholding fixed-point conditions at a fit: the duals
/// vanish on the active set and every active group's quadratic score
/// `(C_ℓ+d_ℓ)ᵀ (P_ℓ/nm) (C_ℓ+d_ℓ)` weakly dominates every inactive one.
/// When `lambda0` is given, the threshold `2λ₀` must additionally separate
/// the two score groups.
pub fn fixed_point_check(
    fit: &ExposureFit,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    lambda0: Option<f64>,
) -> Result<bool> {
    let ctx = GramContext::new(&fit.kernel, &fit.grid)?;
    let (n, p) = (x.nrows(), x.ncols());
    let m = ctx.m();
    if fit.coef.nrows() != p {
        return Err(validation("fit and X disagree on p"));
    }
    let fitted = x * &fit.coef * &ctx.sigma;
    let dual = compute_duals(x, z, &ctx, fit.lambda_k, &fit.coef, &fitted);

    let scale = 1.0 + fit.coef.amax();
    let active_mask: Vec<bool> = {
        let mut mask = vec![false; p];
        for &l in &fit.active_set {
            mask[l] = true;
        }
        mask
    };
    for &l in &fit.active_set {
        if dual.row(l).amax() > 1e-8 * scale {
            return Ok(false);
        }
    }

    // quadratic scores v_ℓᵀ (P_ℓ/nm) v_ℓ with v = C_ℓ + d_ℓ
    let nm = (n * m) as f64;
    let vmat = (&fit.coef + &dual) * ctx.v.clone(); // rows in the eigenbasis
    let mut q = vec![0.0; p];
    for l in 0..p {
        let colsq = x.column(l).norm_squared();
        let mut s2 = 0.0;
        let mut s1 = 0.0;
        for b in 0..m {
            let vb = vmat[(l, b)];
            let db = ctx.d[b];
            s2 += vb * vb * db * db;
            s1 += vb * vb * db;
        }
        q[l] = colsq / nm * s2 + fit.lambda_k * s1;
    }
    let min_active = fit
        .active_set
        .iter()
        .map(|&l| q[l])
        .fold(f64::INFINITY, f64::min);
    let max_inactive = (0..p)
        .filter(|l| !active_mask[*l])
        .map(|l| q[l])
        .fold(f64::NEG_INFINITY, f64::max);

    if max_inactive.is_finite() {
        let slack = 1e-10 * (1.0 + min_active.abs());
        if min_active + slack < max_inactive {
            return Ok(false);
        }
        if let Some(l0) = lambda0 {
            if !(min_active + slack >= 2.0 * l0 && 2.0 * l0 > max_inactive - slack) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
