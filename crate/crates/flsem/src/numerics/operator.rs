//! Discretized integral operators in the tilde convention and symmetric
//! eigendecomposition helpers.

use nalgebra::DMatrix;

use crate::error::{numerical, validation, Result};

/// Symmetric eigendecomposition with eigenvalues sorted descending and
/// matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomp {
    /// Eigenvalues clipped at zero: negatives within `−1e-10·max` become 0.
    /// More negative values indicate a genuinely non-PSD input.
    pub fn clipped_values(&self) -> Result<Vec<f64>> {
        let max = self.values.first().copied().unwrap_or(0.0).max(0.0);
        let mut out = Vec::with_capacity(self.values.len());
        for &v in &self.values {
            if v < -1e-6 * max.max(1e-300) {
                return Err(numerical(format!(
                    "matrix is not positive semidefinite (eigenvalue {v}, max {max})"
                )));
            }
            out.push(v.max(0.0));
        }
        Ok(out)
    }
}

/// Eigendecomposition of a symmetric matrix, descending eigenvalue order.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> EigenDecomp {
    let se = nalgebra::SymmetricEigen::new(a.clone());
    let m = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m, m);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &se.eigenvectors.column(old));
    }
    EigenDecomp { values, vectors }
}

/// A discretized integral operator: `Ã = Δ · (A(t_j, t_k))_{jk}`.
///
/// Composition of two operators on the same grid is the plain matrix product
/// of their tilde matrices, operator trace is matrix trace, and operator
/// eigenvalues are matrix eigenvalues.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    tilde: DMatrix<f64>,
}

impl OperatorMatrix {
    /// Wrap a tilde matrix, checking symmetry to `1e-10` relative.
    pub fn new(tilde: DMatrix<f64>) -> Result<Self> {
        if !tilde.is_square() {
            return Err(validation("operator matrix must be square"));
        }
        let scale = tilde.amax().max(1.0);
        for j in 0..tilde.nrows() {
            for k in (j + 1)..tilde.ncols() {
                if (tilde[(j, k)] - tilde[(k, j)]).abs() > 1e-10 * scale {
                    return Err(validation(format!(
                        "operator matrix not symmetric at ({j},{k})"
                    )));
                }
            }
        }
        Ok(OperatorMatrix { tilde })
    }

    /// Build from a pointwise kernel matrix and quadrature weight `Δ`.
    pub fn from_pointwise(pointwise: &DMatrix<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(validation("quadrature weight must be positive"));
        }
        OperatorMatrix::new(pointwise * delta)
    }

    pub fn tilde(&self) -> &DMatrix<f64> {
        &self.tilde
    }

    pub fn dim(&self) -> usize {
        self.tilde.nrows()
    }

    /// Operator trace (= matrix trace in the tilde convention).
    pub fn trace(&self) -> f64 {
        self.tilde.trace()
    }

    /// Trace of the squared operator, computed as the squared Frobenius norm
    /// of the symmetric tilde matrix (no eigendecomposition needed).
    pub fn trace_sq(&self) -> f64 {
        let f = self.tilde.norm();
        f * f
    }

    /// Operator composition: plain matrix product of tilde matrices.
    pub fn compose(&self, other: &OperatorMatrix) -> DMatrix<f64> {
        &self.tilde * &other.tilde
    }

    pub fn eigen(&self) -> EigenDecomp {
        symmetric_eigen(&self.tilde)
    }
}

/// Symmetric PSD square root in the tilde convention: the returned operator
/// satisfies `result · result = A` as a matrix product.
///
/// Eigenvalues in `[−1e-10·max, 0)` are clipped to zero; anything below
/// `−1e-6·max` is reported as a non-PSD input.
pub fn operator_sqrt(a: &OperatorMatrix) -> Result<OperatorMatrix> {
    let eig = a.eigen();
    let vals = eig.clipped_values()?;
    let m = a.dim();
    let mut scaled = eig.vectors.clone();
    for (k, &v) in vals.iter().enumerate() {
        let s = v.sqrt();
        for r in 0..m {
            scaled[(r, k)] *= s;
        }
    }
    let root = &scaled * eig.vectors.transpose();
    // symmetrize away float asymmetry from the two-sided product
    let root = (&root + root.transpose()) * 0.5;
    OperatorMatrix::new(root)
}
