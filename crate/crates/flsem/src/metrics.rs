//! Evaluation quantities for the simulation tables: selection errors,
//! coefficient and prediction mean squared errors, and Monte Carlo
//! aggregation.

use nalgebra::{DMatrix, DVector};

/// Selection errors against a reference support:
/// `FZ = |true \ est|` (false zeros), `FN = |est \ true|` (false nonzeros).
pub fn selection_errors(true_set: &[usize], est_set: &[usize]) -> (usize, usize) {
    let fz = true_set.iter().filter(|l| !est_set.contains(l)).count();
    let fn_ = est_set.iter().filter(|l| !true_set.contains(l)).count();
    (fz, fn_)
}

/// `‖β̂ − β*‖₂²`.
pub fn mse_beta(beta_hat: &DVector<f64>, beta_star: &DVector<f64>) -> f64 {
    (beta_hat - beta_star).norm_squared()
}

/// Discrete squared L2 distance between two functions on the grid,
/// `Δ·Σ_j (B̂(t_j) − B*(t_j))²`.
pub fn mse_b(b_hat: &[f64], b_star: &[f64], delta: f64) -> f64 {
    b_hat
        .iter()
        .zip(b_star)
        .map(|(a, b)| (a - b) * (a - b) * delta)
        .sum()
}

/// Mean squared prediction error of fitted exposure curves on a test set,
/// averaged over subjects: `n⁻¹ Σ_i Δ·Σ_j (Ẑ_ij − Z_ij)²`.
pub fn pmse_z(zhat: &DMatrix<f64>, z: &DMatrix<f64>, delta: f64) -> f64 {
    let n = z.nrows() as f64;
    (zhat - z).norm_squared() * delta / n
}

/// Mean squared prediction error for scalar predictions.
pub fn pmse_y(y_hat: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (y_hat - y).norm_squared() / y.len() as f64
}

/// Monte Carlo mean and empirical standard deviation per metric column.
/// A single replicate has no dispersion estimate: `sd` is reported as 0 and
/// `sd_defined` is false.
#[derive(Debug, Clone)]
pub struct McSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub reps: usize,
    pub sd_defined: bool,
}

/// Aggregate replicate rows (one `Vec` of metric values per replicate).
/// Invariant to replicate ordering.
pub fn mc_aggregate(rows: &[Vec<f64>]) -> McSummary {
    assert!(!rows.is_empty(), "mc_aggregate needs at least one replicate");
    let cols = rows[0].len();
    assert!(rows.iter().all(|r| r.len() == cols), "ragged replicate rows");
    let reps = rows.len();
    let mut mean = vec![0.0; cols];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= reps as f64;
    }
    let sd_defined = reps > 1;
    let mut sd = vec![0.0; cols];
    if sd_defined {
        for r in rows {
            for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut sd {
            *s = (*s / (reps - 1) as f64).sqrt();
        }
    }
    McSummary { mean, sd, reps, sd_defined }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{basis_phi, generate, SimConfig};
    use crate::numerics::Grid;

    #[test]
    fn selection_error_cases() {
        assert_eq!(selection_errors(&[0, 2], &[0, 2]), (0, 0));
        assert_eq!(selection_errors(&[0, 2], &[0, 1]), (1, 1));
        assert_eq!(selection_errors(&[], &[1]), (0, 1));
    }

    #[test]
    fn mse_beta_cases() {
        let star = DVector::from_vec(vec![7.0, 0.0, 0.0, 0.0, 0.0, 5.5, 4.0, 3.5, 5.0, 4.5]);
        assert_eq!(mse_beta(&star, &star), 0.0);
        // sum of squares of the active coefficients
        let zero = DVector::zeros(10);
        assert!((mse_beta(&zero, &star) - 152.75).abs() <= 1e-12);
        let mut bumped = star.clone();
        bumped[3] += 1.0;
        assert!((mse_beta(&bumped, &star) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn mse_b_zero_estimate_matches_parseval() {
        // ‖B*‖² for the 1-D design is 16·Σ_{k=1..10} k⁻⁴ by orthonormality
        let cfg = SimConfig::example1(5, 10, 0.3, 0.0, 3);
        let ds = generate(&cfg).unwrap();
        let t = ds.truth.unwrap();
        let zero = vec![0.0; t.b_on_grid.len()];
        let got = mse_b(&zero, &t.b_on_grid, ds.grid.delta());
        let parseval: f64 = (1..=10u32).map(|k| 16.0 / (k as f64).powi(4)).sum();
        assert!((got - parseval).abs() <= 1e-2, "{got} vs {parseval}");
        assert!((parseval - 17.3126).abs() < 1e-3);
        assert_eq!(mse_b(&t.b_on_grid, &t.b_on_grid, ds.grid.delta()), 0.0);
    }

    #[test]
    fn mse_b_stable_under_grid_refinement() {
        let eval = |m: usize| {
            let grid = Grid::uniform_1d(m).unwrap();
            let b: Vec<f64> = grid
                .points()
                .map(|t| (1..=10).map(|k| basis_phi(k, t[0]) / k as f64).sum())
                .collect();
            let zero = vec![0.0; m];
            mse_b(&zero, &b, grid.delta())
        };
        let coarse = eval(100);
        let fine = eval(400);
        assert!((coarse - fine).abs() <= 0.01 * fine, "{coarse} vs {fine}");
    }

    #[test]
    fn pmse_zero_for_perfect_prediction() {
        let z = DMatrix::from_fn(6, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(pmse_z(&z, &z, 0.25), 0.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(pmse_y(&y, &y), 0.0);
    }

    #[test]
    fn mc_aggregate_cases() {
        let single = mc_aggregate(&[vec![3.0, 4.0]]);
        assert_eq!(single.mean, vec![3.0, 4.0]);
        assert_eq!(single.sd, vec![0.0, 0.0]);
        assert!(!single.sd_defined);

        let constant = mc_aggregate(&[vec![2.0], vec![2.0], vec![2.0]]);
        assert_eq!(constant.sd, vec![0.0]);

        let two_point = mc_aggregate(&[vec![0.0], vec![2.0]]);
        assert_eq!(two_point.mean, vec![1.0]);
        assert!((two_point.sd[0] - 2.0f64.sqrt()).abs() <= 1e-15);

        // ordering invariance
        let a = mc_aggregate(&[vec![1.0], vec![5.0], vec![3.0]]);
        let b = mc_aggregate(&[vec![5.0], vec![3.0], vec![1.0]]);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.sd, b.sd);
    }
}
