//! Identifiability checking under possibly invalid instruments.
//!
//! Given the reduced-form vector `Γ*` and instrument loadings `c_{ℓk}`, the
//! decomposition `Γ* = β + Σ_k b_k c_k` admits a unique `(β, {b_k})` exactly
//! when every full-rank instrument subset of size `L − U + 1` that solves its
//! restricted system produces the same `b` (the subspace-restriction
//! condition). The checker enumerates all such subsets and votes; the
//! closed-form budget `U ≤ (L − R + 1)/2` is a sufficient condition.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{validation, FlsemError, Result};

/// Enumeration guard: refuse problems with more candidate subsets than this.
const MAX_SUBSETS: u128 = 1_000_000;

/// An identifiability problem instance.
///
/// `gamma` has length `L` (one entry per relevant instrument), `cmat` is the
/// `L × R` loading matrix whose row `ℓ` is `(c_{ℓ1}, …, c_{ℓR})`, and `u` is
/// the invalidity budget: at most `u − 1` instruments may be invalid.
#[derive(Debug, Clone)]
pub struct IvProblem {
    pub gamma: DVector<f64>,
    pub cmat: DMatrix<f64>,
    pub u: usize,
    pub rank_tol: f64,
}

impl IvProblem {
    pub fn new(gamma: DVector<f64>, cmat: DMatrix<f64>, u: usize) -> Result<Self> {
        Self::with_tolerance(gamma, cmat, u, 1e-8)
    }

    pub fn with_tolerance(
        gamma: DVector<f64>,
        cmat: DMatrix<f64>,
        u: usize,
        rank_tol: f64,
    ) -> Result<Self> {
        let l = gamma.len();
        let r = cmat.ncols();
        if cmat.nrows() != l {
            return Err(validation("loading matrix rows must match gamma length"));
        }
        if r < 1 {
            return Err(validation("at least one leading coefficient required (R >= 1)"));
        }
        if u < 1 {
            return Err(validation("invalidity budget U must be at least 1"));
        }
        // subsets of size L − U + 1 must be solvable for R coefficients
        if l + 1 < u + r {
            return Err(validation(format!(
                "subset size L - U + 1 = {} is below R = {r}",
                l as i64 - u as i64 + 1
            )));
        }
        if !(rank_tol > 0.0) {
            return Err(validation("rank_tol must be positive"));
        }
        Ok(IvProblem { gamma, cmat, u, rank_tol })
    }

    fn subset_size(&self) -> usize {
        self.gamma.len() - self.u + 1
    }
}

/// One exactly-consistent full-rank subset and its solved coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistentSubset {
    /// 0-based instrument indices.
    pub indices: Vec<usize>,
    pub b: Vec<f64>,
}

/// Outcome of the identifiability check.
#[derive(Debug, Clone, Serialize)]
pub struct IvReport {
    pub identifiable: bool,
    /// Common leading coefficients, present when identifiable.
    pub b: Option<Vec<f64>>,
    /// Direct effects `β = Γ* − C·b`, present when identifiable.
    pub beta: Option<Vec<f64>>,
    pub consistent_subsets: Vec<ConsistentSubset>,
    pub reason: String,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Lexicographic k-subset enumeration of `0..n`.
struct Combinations {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, current: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let k = self.current.len();
        if k == 0 {
            self.done = true;
            return Some(out);
        }
        // advance to the next lexicographic combination
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.current[i] != i + self.n - k {
                self.current[i] += 1;
                for j in (i + 1)..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Solve `cmat_S · b = gamma_S` for one subset; `Some(b)` when the system is
/// full rank R and exactly consistent within the tolerance.
fn solve_subset(prob: &IvProblem, subset: &[usize]) -> Option<Vec<f64>> {
    let s = subset.len();
    let r = prob.cmat.ncols();
    let mut a = DMatrix::zeros(s, r);
    let mut g = DVector::zeros(s);
    for (row, &l) in subset.iter().enumerate() {
        for k in 0..r {
            a[(row, k)] = prob.cmat[(l, k)];
        }
        g[row] = prob.gamma[l];
    }
    let svd = nalgebra::SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin >= prob.rank_tol * smax) || smax == 0.0 {
        return None; // rank-deficient: no unique b on this subset
    }
    let b = svd.solve(&g, 0.0).ok()?;
    let resid = (&a * &b - &g).norm();
    if resid <= prob.rank_tol * (1.0 + g.norm()) {
        Some(b.iter().copied().collect())
    } else {
        None
    }
}

/// Enumerate all instrument subsets of size `L − U + 1`, record every
/// exactly-consistent full-rank one, and decide identifiability by
/// componentwise agreement of the recorded solutions.
pub fn check_identifiability(prob: &IvProblem) -> Result<IvReport> {
    let l = prob.gamma.len();
    let size = prob.subset_size();
    let count = binomial(l, size);
    if count > MAX_SUBSETS {
        return Err(FlsemError::Guard(format!(
            "subset enumeration C({l},{size}) = {count} exceeds the {MAX_SUBSETS} limit"
        )));
    }

    let mut consistent = Vec::new();
    for subset in Combinations::new(l, size) {
        if let Some(b) = solve_subset(prob, &subset) {
            consistent.push(ConsistentSubset { indices: subset, b });
        }
    }

    if consistent.is_empty() {
        return Ok(IvReport {
            identifiable: false,
            b: None,
            beta: None,
            consistent_subsets: consistent,
            reason: "no consistent full-rank subset".to_string(),
        });
    }

    let b0 = consistent[0].b.clone();
    let agree = consistent.iter().all(|c| {
        c.b.iter().zip(&b0).all(|(a, b)| (a - b).abs() <= prob.rank_tol)
    });
    if !agree {
        return Ok(IvReport {
            identifiable: false,
            b: None,
            beta: None,
            consistent_subsets: consistent,
            reason: "consistent subsets disagree on the leading coefficients".to_string(),
        });
    }

    let b_vec = DVector::from_vec(b0.clone());
    let mut beta = &prob.gamma - &prob.cmat * &b_vec;
    let snap = prob.rank_tol * (1.0 + prob.gamma.norm());
    for v in beta.iter_mut() {
        if v.abs() <= snap {
            *v = 0.0;
        }
    }
    Ok(IvReport {
        identifiable: true,
        b: Some(b0),
        beta: Some(beta.iter().copied().collect()),
        consistent_subsets: consistent,
        reason: format!("all qualifying subsets agree on b within {}", prob.rank_tol),
    })
}

/// Closed-form invalidity budget: identification is guaranteed whenever the
/// number of invalid instruments is at most `⌊(L − R + 1)/2⌋`.
pub fn corollary_max_invalid(l: usize, r: usize) -> Result<usize> {
    if r < 1 {
        return Err(validation("R must be at least 1"));
    }
    if l < r {
        return Err(validation(format!("need L >= R, got L = {l}, R = {r}")));
    }
    Ok((l - r + 1) / 2)
}
