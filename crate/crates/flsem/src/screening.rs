//! First-stage dimension reduction for the `p ≫ n` regime: marginal
//! correlation (SIS) ranking against the outcome, distance-correlation
//! ranking against the functional exposure, and the union of survivors.

use nalgebra::{DMatrix, DVector};

use crate::error::{validation, Result};

/// Per-channel subject cap; above this many subjects the distance matrices
/// are built on an evenly strided subsample.
const DCOR_SUBJECT_CAP: usize = 5000;

/// Default channel size `⌊n / ln n⌋`, the usual SIS calibration.
pub fn default_screen_size(n: usize) -> usize {
    if n < 3 {
        return 1;
    }
    ((n as f64) / (n as f64).ln()).floor().max(1.0) as usize
}

/// Indices of the `k` columns of `x` with the largest `|corr(y, x_ℓ)|`,
/// descending, ties broken by smaller index. Columns are standardized
/// internally; a constant column (or constant `y`) scores 0.
pub fn sis_rank(y: &DVector<f64>, x: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(validation("sis_rank: y length must match rows of x"));
    }
    if k > p {
        return Err(validation(format!("sis_rank: k = {k} exceeds p = {p}")));
    }
    let ym = y.sum() / n as f64;
    let yc: DVector<f64> = y.map(|v| v - ym);
    let ysd = yc.norm();
    let mut scores = Vec::with_capacity(p);
    for l in 0..p {
        let col = x.column(l);
        let cm = col.sum() / n as f64;
        let mut dot = 0.0;
        let mut ss = 0.0;
        for i in 0..n {
            let c = col[i] - cm;
            dot += c * yc[i];
            ss += c * c;
        }
        let denom = ss.sqrt() * ysd;
        scores.push(if denom > 0.0 { (dot / denom).abs() } else { 0.0 });
    }
    Ok(top_k_by_score(&scores, k))
}

/// `k` best indices by score, descending, ties by smaller index.
pub(crate) fn top_k_by_score(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

fn strided_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

/// Double-centered pairwise-distance matrix of the rows of `v`.
fn centered_distances(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    let grand = d.sum() / (n * n) as f64;
    let row_means: Vec<f64> = (0..n).map(|i| d.row(i).sum() / n as f64).collect();
    for i in 0..n {
        for j in 0..n {
            d[(i, j)] += grand - row_means[i] - row_means[j];
        }
    }
    d
}

fn dcov2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s / (n * n) as f64
}

fn dcor_from_centered(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let vu = dcov2(a, a);
    let vv = dcov2(b, b);
    if vu <= 0.0 || vv <= 0.0 {
        return 0.0;
    }
    let c = dcov2(a, b).max(0.0);
    (c / (vu * vv).sqrt()).sqrt().clamp(0.0, 1.0)
}

/// Empirical distance correlation between a scalar sample `u` and a
/// (possibly multivariate) sample `v` with one row per subject. Returns a
/// value in `[0,1]`; degenerate (zero-variance) inputs score 0.
pub fn dcor(u: &DVector<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let n = u.len();
    if v.nrows() != n {
        return Err(validation("dcor: row counts must agree"));
    }
    if n < 4 {
        return Err(validation("dcor needs n >= 4"));
    }
    let keep = strided_indices(n, DCOR_SUBJECT_CAP);
    let u_rows: Vec<Vec<f64>> = keep.iter().map(|&i| vec![u[i]]).collect();
    let v_rows: Vec<Vec<f64>> =
        keep.iter().map(|&i| v.row(i).iter().copied().collect()).collect();
    let a = centered_distances(&u_rows);
    let b = centered_distances(&v_rows);
    Ok(dcor_from_centered(&a, &b))
}

/// Top-`k` columns of `x` ranked by distance correlation with the full
/// grid-value rows of `z`; ties by smaller index.
pub fn dcor_screen_functional(z: &DMatrix<f64>, x: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    let (n, p) = (x.nrows(), x.ncols());
    if z.nrows() != n {
        return Err(validation("dcor_screen_functional: row counts must agree"));
    }
    if k > p {
        return Err(validation(format!("dcor_screen_functional: k = {k} exceeds p = {p}")));
    }
    if n < 4 {
        return Err(validation("dcor_screen_functional needs n >= 4"));
    }
    let keep = strided_indices(n, DCOR_SUBJECT_CAP);
    let z_rows: Vec<Vec<f64>> =
        keep.iter().map(|&i| z.row(i).iter().copied().collect()).collect();
    // the Z distance matrix is shared across all columns
    let b = centered_distances(&z_rows);
    let scores: Vec<f64> = (0..p)
        .map(|l| {
            let u_rows: Vec<Vec<f64>> = keep.iter().map(|&i| vec![x[(i, l)]]).collect();
            let a = centered_distances(&u_rows);
            dcor_from_centered(&a, &b)
        })
        .collect();
    Ok(top_k_by_score(&scores, k))
}

/// Union of the two screening channels, ascending and deduplicated.
pub fn union_screen(idx_y: &[usize], idx_z: &[usize]) -> Vec<usize> {
    let mut all: Vec<usize> = idx_y.iter().chain(idx_z).copied().collect();
    all.sort_unstable();
    all.dedup();
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use proptest::prelude::*;

    #[test]
    fn sis_finds_dominant_column() {
        let mut rng = RngStream::new(1);
        let n = 200;
        let x = DMatrix::from_fn(n, 4, |_, _| rng.next_normal());
        let y = DVector::from_fn(n, |i, _| 5.0 * x[(i, 0)] + 0.01 * rng.next_normal());
        assert_eq!(sis_rank(&y, &x, 1).unwrap(), vec![0]);
    }

    #[test]
    fn sis_with_k_equal_p_is_permutation() {
        let mut rng = RngStream::new(2);
        let x = DMatrix::from_fn(50, 6, |_, _| rng.next_normal());
        let y = DVector::from_fn(50, |_, _| rng.next_normal());
        let mut got = sis_rank(&y, &x, 6).unwrap();
        got.sort_unstable();
        assert_eq!(got, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn sis_constant_y_returns_index_order() {
        let mut rng = RngStream::new(3);
        let x = DMatrix::from_fn(30, 5, |_, _| rng.next_normal());
        let y = DVector::from_element(30, 2.5);
        assert_eq!(sis_rank(&y, &x, 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn sis_constant_column_scores_zero() {
        let mut rng = RngStream::new(4);
        let n = 100;
        let mut x = DMatrix::from_fn(n, 3, |_, _| rng.next_normal());
        for i in 0..n {
            x[(i, 1)] = 7.0;
        }
        let y = x.column(2).clone_owned();
        let ranked = sis_rank(&y, &x, 3).unwrap();
        assert_eq!(ranked[0], 2);
        assert_eq!(*ranked.last().unwrap(), 1);
    }

    #[test]
    fn dcor_of_self_and_affine_image_is_one() {
        let mut rng = RngStream::new(5);
        let u = DVector::from_fn(60, |_, _| rng.next_normal());
        let as_mat = DMatrix::from_fn(60, 1, |i, _| u[i]);
        assert!((dcor(&u, &as_mat).unwrap() - 1.0).abs() < 1e-10);
        let affine = DMatrix::from_fn(60, 1, |i, _| 2.0 * u[i] + 3.0);
        assert!((dcor(&u, &affine).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dcor_small_under_independence() {
        let mut rng = RngStream::new(6);
        let n = 1000;
        let u = DVector::from_fn(n, |_, _| rng.next_normal());
        let v = DMatrix::from_fn(n, 1, |_, _| rng.next_normal());
        let d = dcor(&u, &v).unwrap();
        assert!(d < 0.1, "independent dcor = {d}");
    }

    #[test]
    fn dcor_zero_variance_is_zero() {
        let u = DVector::from_element(10, 1.0);
        let v = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64);
        assert_eq!(dcor(&u, &v).unwrap(), 0.0);
        assert!(dcor(&u, &DMatrix::zeros(5, 2)).is_err()); // row mismatch
    }

    #[test]
    fn dcor_screen_finds_generating_column() {
        let mut rng = RngStream::new(7);
        let n = 120;
        let m = 15;
        let x = DMatrix::from_fn(n, 5, |_, _| rng.next_normal());
        let c: Vec<f64> = (0..m).map(|j| 1.0 + (j as f64) / m as f64).collect();
        let z = DMatrix::from_fn(n, m, |i, j| x[(i, 0)] * c[j]);
        assert_eq!(dcor_screen_functional(&z, &x, 1).unwrap(), vec![0]);
    }

    #[test]
    fn dcor_screen_zero_z_returns_index_order() {
        let mut rng = RngStream::new(8);
        let x = DMatrix::from_fn(40, 4, |_, _| rng.next_normal());
        let z = DMatrix::zeros(40, 10);
        assert_eq!(dcor_screen_functional(&z, &x, 2).unwrap(), vec![0, 1]);
        let mut all = dcor_screen_functional(&z, &x, 4).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn union_examples() {
        assert_eq!(union_screen(&[0, 2], &[2, 4]), vec![0, 2, 4]);
        assert_eq!(union_screen(&[], &[1]), vec![1]);
        let ks: Vec<usize> = (0..5).collect();
        assert_eq!(union_screen(&ks, &ks), ks);
    }

    #[test]
    fn default_screen_size_matches_formula() {
        assert_eq!(default_screen_size(200), 37);
        assert_eq!(default_screen_size(11400), 1220);
    }

    proptest! {
        #[test]
        fn sis_invariant_to_affine_rescaling(seed in 0u64..500) {
            let mut rng = RngStream::new(seed);
            let n = 40;
            let x = DMatrix::from_fn(n, 6, |_, _| rng.next_normal());
            let y = DVector::from_fn(n, |i, _| x[(i, 1)] - 0.5 * x[(i, 4)] + rng.next_normal());
            let base = sis_rank(&y, &x, 6).unwrap();

            let y2 = y.map(|v| -3.0 * v + 10.0);
            let mut x2 = x.clone();
            for l in 0..6 {
                let scale = 0.1 + l as f64;
                for i in 0..n {
                    x2[(i, l)] = x[(i, l)] * scale - 2.0;
                }
            }
            prop_assert_eq!(base, sis_rank(&y2, &x2, 6).unwrap());
        }

        #[test]
        fn union_commutative_associative_idempotent(
            a in proptest::collection::vec(0usize..30, 0..10),
            b in proptest::collection::vec(0usize..30, 0..10),
            c in proptest::collection::vec(0usize..30, 0..10),
        ) {
            prop_assert_eq!(union_screen(&a, &b), union_screen(&b, &a));
            prop_assert_eq!(
                union_screen(&union_screen(&a, &b), &c),
                union_screen(&a, &union_screen(&b, &c))
            );
            let u = union_screen(&a, &a);
            prop_assert_eq!(union_screen(&u, &a), u.clone());
        }

        #[test]
        fn dcor_in_unit_interval_and_symmetric_1d(seed in 0u64..60) {
            let mut rng = RngStream::new(seed);
            let n = 30;
            let u = DVector::from_fn(n, |_, _| rng.next_normal());
            let w = DVector::from_fn(n, |i, _| 0.5 * u[i] + rng.next_normal());
            let w_mat = DMatrix::from_fn(n, 1, |i, _| w[i]);
            let u_mat = DMatrix::from_fn(n, 1, |i, _| u[i]);
            let duv = dcor(&u, &w_mat).unwrap();
            let dvu = dcor(&w, &u_mat).unwrap();
            prop_assert!((0.0..=1.0).contains(&duv));
            prop_assert!((duv - dvu).abs() < 1e-10);
        }
    }
}
