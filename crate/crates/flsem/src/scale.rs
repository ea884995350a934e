//! Divide-and-conquer estimation for large samples and fine grids:
//! subjects are split into contiguous blocks, the functional domain is
//! covered by overlapping sliding windows, local exposure fits run per
//! (block, window), block averages are reconstructed per window, and
//! overlapped grid points take the arithmetic mean over covering windows.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{validation, Result};
use crate::exposure::{fgsdar_fit_with_ctx, GramContext, LambdaChoice};
use crate::numerics::{Grid, KernelSpec};
use crate::outcome::{outcome_fit_with_ctx, OutcomeFit, OutcomeOptions};

/// One sliding window: axis bounds and the grid indices it covers.
#[derive(Debug, Clone)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub indices: Vec<usize>,
}

/// Overlapping windows covering every grid point.
#[derive(Debug, Clone)]
pub struct WindowPlan {
    pub windows: Vec<Window>,
    pub width: f64,
    pub stride: f64,
}

impl WindowPlan {
    /// A single window spanning the whole domain.
    pub fn full_domain(grid: &Grid) -> Result<Self> {
        make_windows(grid, 1.0, 1.0)
    }
}

fn axis_starts(width: f64, stride: f64) -> Vec<f64> {
    let mut starts = Vec::new();
    let mut k = 0usize;
    loop {
        let s = k as f64 * stride;
        starts.push(s);
        if s + width >= 1.0 - 1e-12 {
            break;
        }
        k += 1;
    }
    starts
}

/// Build sliding windows `[k·stride, k·stride + width]` per axis (clipped to
/// the unit domain) until the domain is covered; on 2-D grids the plan is
/// the cross product of the per-axis windows. Every grid point lands in at
/// least one window because consecutive windows overlap (`stride ≤ width`).
pub fn make_windows(grid: &Grid, width: f64, stride: f64) -> Result<WindowPlan> {
    if !(width > 0.0 && width <= 1.0) {
        return Err(validation(format!("window width must be in (0, 1], got {width}")));
    }
    if !(stride > 0.0 && stride <= width) {
        return Err(validation(format!(
            "window stride must be in (0, width], got {stride} (width {width})"
        )));
    }
    let starts = axis_starts(width, stride);
    let dim = grid.dim();
    let tol = 1e-12;

    let mut windows = Vec::new();
    let mut combos: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::new();
        for c in &combos {
            for &s in &starts {
                let mut c2 = c.clone();
                c2.push(s);
                next.push(c2);
            }
        }
        combos = next;
    }
    for lo in combos {
        let hi: Vec<f64> = lo.iter().map(|s| (s + width).min(1.0)).collect();
        let indices: Vec<usize> = (0..grid.len())
            .filter(|&j| {
                grid.point(j)
                    .iter()
                    .zip(lo.iter().zip(&hi))
                    .all(|(c, (l, h))| *c >= l - tol && *c <= h + tol)
            })
            .collect();
        windows.push(Window { lo, hi, indices });
    }

    // coverage: by construction, but a plan without it is unusable
    let mut covered = vec![false; grid.len()];
    for w in &windows {
        for &j in &w.indices {
            covered[j] = true;
        }
    }
    if covered.iter().any(|c| !c) {
        return Err(validation("window plan leaves grid points uncovered"));
    }
    Ok(WindowPlan { windows, width, stride })
}

/// Contiguous subject blocks of equal size, remainder to the last block.
#[derive(Debug, Clone)]
pub struct PartitionPlan {
    pub blocks: Vec<std::ops::Range<usize>>,
}

pub fn make_partition(n: usize, n_blocks: usize) -> Result<PartitionPlan> {
    if n_blocks == 0 || n_blocks > n {
        return Err(validation(format!(
            "need 1 <= blocks <= n, got blocks = {n_blocks}, n = {n}"
        )));
    }
    let base = n / n_blocks;
    let mut blocks = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let start = b * base;
        let end = if b + 1 == n_blocks { n } else { start + base };
        blocks.push(start..end);
    }
    Ok(PartitionPlan { blocks })
}

/// Aggregated exposure surface from the distributed fit.
#[derive(Debug, Clone)]
pub struct DcExposureFit {
    /// Coefficient-function values on the full grid (p×m), averaged across
    /// blocks within windows and across covering windows at overlaps.
    pub coef_on_grid: DMatrix<f64>,
    /// Reconstructed exposure curves for every subject (n×m).
    pub zhat: DMatrix<f64>,
    /// Union of the per-(block, window) active sets.
    pub active_union: Vec<usize>,
}

fn rows(mat: &DMatrix<f64>, range: &std::ops::Range<usize>) -> DMatrix<f64> {
    mat.rows(range.start, range.end - range.start).clone_owned()
}

/// Distributed exposure fit: per (block, window) local fits on the
/// window's sub-grid, per-window block averages (zeros included for
/// unselected covariates), reconstruction `Ẑ_i = Σ_ℓ X_iℓ C̄_ℓ` on each
/// window, and uniform averaging where windows overlap.
#[allow(clippy::too_many_arguments)]
pub fn dc_exposure_fit(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    grid: &Grid,
    kernel: &KernelSpec,
    j: usize,
    lambda: &LambdaChoice,
    part: &PartitionPlan,
    plan: &WindowPlan,
    max_iter: usize,
) -> Result<DcExposureFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if z.nrows() != n || z.ncols() != grid.len() {
        return Err(validation("dc_exposure_fit: X/Z/grid shapes disagree"));
    }
    for r in &part.blocks {
        if r.end - r.start < j + 1 {
            return Err(validation(format!(
                "block {:?} has fewer than J + 1 = {} subjects",
                r,
                j + 1
            )));
        }
    }
    let n_blocks = part.blocks.len() as f64;

    struct WindowOut {
        indices: Vec<usize>,
        cbar_vals: DMatrix<f64>,
        zhat_local: DMatrix<f64>,
        active: Vec<usize>,
    }

    let per_window: Vec<WindowOut> = plan
        .windows
        .par_iter()
        .map(|w| -> Result<WindowOut> {
            let sub = grid.subgrid(&w.indices)?;
            let ctx = GramContext::new(kernel, &sub)?;
            let mk = w.indices.len();
            let mut cbar_vals = DMatrix::zeros(p, mk);
            let mut active: Vec<usize> = Vec::new();
            for block in &part.blocks {
                let xb = rows(x, block);
                let zb = {
                    let zfull = rows(z, block);
                    let mut out = DMatrix::zeros(block.end - block.start, mk);
                    for (c, &gj) in w.indices.iter().enumerate() {
                        out.set_column(c, &zfull.column(gj));
                    }
                    out
                };
                let fit =
                    fgsdar_fit_with_ctx(&xb, &zb, &sub, kernel, &ctx, j, lambda, max_iter)?;
                cbar_vals += fit.coef_on_grid(&ctx);
                for &l in &fit.active_set {
                    if !active.contains(&l) {
                        active.push(l);
                    }
                }
            }
            cbar_vals /= n_blocks;
            let zhat_local = x * &cbar_vals;
            Ok(WindowOut { indices: w.indices.clone(), cbar_vals, zhat_local, active })
        })
        .collect::<Result<Vec<_>>>()?;

    let m = grid.len();
    let mut coef_on_grid = DMatrix::zeros(p, m);
    let mut zhat = DMatrix::zeros(n, m);
    let mut cover = vec![0.0f64; m];
    let mut active_union: Vec<usize> = Vec::new();
    for wo in &per_window {
        for (c, &gj) in wo.indices.iter().enumerate() {
            cover[gj] += 1.0;
            for l in 0..p {
                coef_on_grid[(l, gj)] += wo.cbar_vals[(l, c)];
            }
            for i in 0..n {
                zhat[(i, gj)] += wo.zhat_local[(i, c)];
            }
        }
        for &l in &wo.active {
            if !active_union.contains(&l) {
                active_union.push(l);
            }
        }
    }
    for gj in 0..m {
        let c = cover[gj];
        for l in 0..p {
            coef_on_grid[(l, gj)] /= c;
        }
        for i in 0..n {
            zhat[(i, gj)] /= c;
        }
    }
    active_union.sort_unstable();
    Ok(DcExposureFit { coef_on_grid, zhat, active_union })
}

/// Distributed outcome fit: per-block fits with the shared grid, then
/// coefficient averages across blocks (zeros included); the active set is
/// the support of the averaged scalar coefficients, and the residual
/// variance is recomputed on the full sample at the averaged coefficients.
#[allow(clippy::too_many_arguments)]
pub fn dc_outcome_fit(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    zhat: &DMatrix<f64>,
    ctx: &GramContext,
    j_y: usize,
    lambda: f64,
    part: &PartitionPlan,
    opts: &OutcomeOptions,
) -> Result<OutcomeFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n || zhat.nrows() != n {
        return Err(validation("dc_outcome_fit: row counts disagree"));
    }
    for r in &part.blocks {
        if r.end - r.start < j_y + 1 {
            return Err(validation(format!(
                "block {:?} has fewer than J_y + 1 = {} subjects",
                r,
                j_y + 1
            )));
        }
    }
    let n_blocks = part.blocks.len() as f64;

    let fits: Vec<OutcomeFit> = part
        .blocks
        .par_iter()
        .map(|block| {
            let yb = DVector::from_fn(block.end - block.start, |i, _| y[block.start + i]);
            let xb = rows(x, block);
            let zb = rows(zhat, block);
            outcome_fit_with_ctx(&yb, &xb, &zb, ctx, j_y, lambda, opts)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut beta = DVector::zeros(p);
    let mut alpha = DVector::zeros(ctx.m());
    for f in &fits {
        beta += &f.beta;
        alpha += &f.alpha;
    }
    beta /= n_blocks;
    alpha /= n_blocks;

    let active_set: Vec<usize> = (0..p).filter(|&l| beta[l] != 0.0).collect();
    let g = (zhat * &ctx.sigma) * ctx.delta;
    let resid = y - x * &beta - &g * &alpha;
    let dof = n.saturating_sub(active_set.len()).max(1);
    let sigma2 = resid.norm_squared() / dof as f64;
    let smooth = {
        let at = ctx.eigenvectors().transpose() * &alpha;
        (0..ctx.m()).map(|b| at[b] * at[b] * ctx.eigenvalues()[b]).sum::<f64>()
    };
    let loss = resid.norm_squared() / (2.0 * n as f64) + lambda / 2.0 * smooth;
    let b_on_grid = &ctx.sigma * &alpha;

    Ok(OutcomeFit {
        beta,
        active_set,
        alpha,
        b_on_grid,
        lambda,
        sigma2,
        loss,
        iterations: fits.iter().map(|f| f.iterations).max().unwrap_or(0),
        converged: fits.iter().all(|f| f.converged),
    })
}
