//! Reproducing kernels and Gram matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{validation, Result};

/// A reproducing-kernel choice. 1-D families act on `[0,1]`; `Product2d`
/// lifts a 1-D family to `[0,1]²` as the product across coordinates, which
/// is positive semidefinite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// Brownian-motion covariance `K(s,t) = min(s,t)`.
    Brownian,
    /// Ornstein–Uhlenbeck covariance `K(s,t) = exp(−|s−t|)`.
    OrnsteinUhlenbeck,
    /// Gaussian kernel `K(s,t) = exp(−(s−t)²/(2h²))`.
    Gaussian { bandwidth: f64 },
    /// Separable 2-D kernel `K((s1,s2),(t1,t2)) = k(s1,t1)·k(s2,t2)`.
    Product2d(Box<KernelSpec>),
}

impl KernelSpec {
    /// Grid dimensionality this kernel expects.
    pub fn dim(&self) -> usize {
        match self {
            KernelSpec::Product2d(_) => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { bandwidth } => {
                if !(*bandwidth > 0.0) {
                    return Err(validation(format!(
                        "gaussian kernel needs bandwidth > 0, got {bandwidth}"
                    )));
                }
                Ok(())
            }
            KernelSpec::Product2d(inner) => {
                if inner.dim() != 1 {
                    return Err(validation("product_2d must wrap a 1-D kernel family"));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    fn eval1(&self, s: f64, t: f64) -> f64 {
        match self {
            KernelSpec::Brownian => s.min(t),
            KernelSpec::OrnsteinUhlenbeck => (-(s - t).abs()).exp(),
            KernelSpec::Gaussian { bandwidth } => {
                let d = s - t;
                (-d * d / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Product2d(_) => unreachable!("product kernel evaluated as 1-D"),
        }
    }

    /// Pointwise kernel evaluation at locations of matching dimension.
    pub fn eval(&self, s: &[f64], t: &[f64]) -> f64 {
        match self {
            KernelSpec::Product2d(inner) => {
                inner.eval1(s[0], t[0]) * inner.eval1(s[1], t[1])
            }
            k => k.eval1(s[0], t[0]),
        }
    }

    /// Parse the config form `brownian|ou|gaussian|product:<inner>`.
    pub fn parse(name: &str, bandwidth: Option<f64>) -> Result<Self> {
        let spec = match name.trim() {
            "brownian" => KernelSpec::Brownian,
            "ou" | "ornstein_uhlenbeck" => KernelSpec::OrnsteinUhlenbeck,
            "gaussian" => KernelSpec::Gaussian {
                bandwidth: bandwidth
                    .ok_or_else(|| validation("gaussian kernel requires bandwidth=<real>"))?,
            },
            other => {
                if let Some(inner) = other.strip_prefix("product:") {
                    KernelSpec::Product2d(Box::new(KernelSpec::parse(inner, bandwidth)?))
                } else {
                    return Err(validation(format!("unknown kernel '{other}'")));
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Default kernel family by grid dimension: Ornstein–Uhlenbeck on `[0,1]`,
/// its product form on `[0,1]²`.
pub fn default_kernel(dim: usize) -> KernelSpec {
    if dim == 2 {
        KernelSpec::Product2d(Box::new(KernelSpec::OrnsteinUhlenbeck))
    } else {
        KernelSpec::OrnsteinUhlenbeck
    }
}

/// Pointwise Gram matrix `Σ` with `Σ_{jk} = K(t_j, t_k)` over grid locations.
///
/// Fails on dimension mismatch between kernel family and grid (e.g. a 2-D
/// product kernel on a 1-D grid).
pub fn gram_matrix(kernel: &KernelSpec, grid: &Grid) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if kernel.dim() != grid.dim() {
        return Err(validation(format!(
            "kernel dimension {} does not match grid dimension {}",
            kernel.dim(),
            grid.dim()
        )));
    }
    let m = grid.len();
    let mut sigma = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let v = kernel.eval(grid.point(j), grid.point(k));
            sigma[(j, k)] = v;
            sigma[(k, j)] = v;
        }
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::symmetric_eigen;

    #[test]
    fn brownian_gram_on_two_points() {
        let grid = Grid::from_coords(1, vec![0.5, 1.0], 0.5).unwrap();
        let s = gram_matrix(&KernelSpec::Brownian, &grid).unwrap();
        assert_eq!(s[(0, 0)], 0.5);
        assert_eq!(s[(0, 1)], 0.5);
        assert_eq!(s[(1, 0)], 0.5);
        assert_eq!(s[(1, 1)], 1.0);
    }

    #[test]
    fn ou_gram_on_unit_endpoints() {
        let grid = Grid::from_coords(1, vec![0.0, 1.0], 0.5).unwrap();
        let s = gram_matrix(&KernelSpec::OrnsteinUhlenbeck, &grid).unwrap();
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(1, 1)], 1.0);
        assert!((s[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn diagonal_equals_kernel_at_point() {
        let grid = Grid::uniform_1d(7).unwrap();
        for kernel in [
            KernelSpec::Brownian,
            KernelSpec::OrnsteinUhlenbeck,
            KernelSpec::Gaussian { bandwidth: 0.2 },
        ] {
            let s = gram_matrix(&kernel, &grid).unwrap();
            for j in 0..grid.len() {
                let p = grid.point(j);
                assert_eq!(s[(j, j)], kernel.eval(p, p));
            }
        }
    }

    #[test]
    fn gram_symmetric_and_near_psd() {
        let g1 = Grid::uniform_1d(25).unwrap();
        let g2 = Grid::uniform_2d(5, 6).unwrap();
        let cases: Vec<(KernelSpec, &Grid)> = vec![
            (KernelSpec::Brownian, &g1),
            (KernelSpec::OrnsteinUhlenbeck, &g1),
            (KernelSpec::Gaussian { bandwidth: 0.2 }, &g1),
            (KernelSpec::Product2d(Box::new(KernelSpec::Gaussian { bandwidth: 0.2 })), &g2),
            (KernelSpec::Product2d(Box::new(KernelSpec::Brownian)), &g2),
        ];
        for (kernel, grid) in cases {
            let s = gram_matrix(&kernel, grid).unwrap();
            assert_eq!(s, s.transpose());
            let eig = symmetric_eigen(&s);
            let max = eig.values[0];
            let min = *eig.values.last().unwrap();
            assert!(min >= -1e-10 * max.max(1.0), "kernel {kernel:?}: min eig {min}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g1 = Grid::uniform_1d(5).unwrap();
        let g2 = Grid::uniform_2d(3, 3).unwrap();
        let prod = KernelSpec::Product2d(Box::new(KernelSpec::Brownian));
        assert!(gram_matrix(&prod, &g1).is_err());
        assert!(gram_matrix(&KernelSpec::Brownian, &g2).is_err());
    }

    #[test]
    fn parse_config_forms() {
        assert_eq!(KernelSpec::parse("brownian", None).unwrap(), KernelSpec::Brownian);
        assert_eq!(KernelSpec::parse("ou", None).unwrap(), KernelSpec::OrnsteinUhlenbeck);
        assert_eq!(
            KernelSpec::parse("gaussian", Some(0.3)).unwrap(),
            KernelSpec::Gaussian { bandwidth: 0.3 }
        );
        assert_eq!(
            KernelSpec::parse("product:gaussian", Some(0.2)).unwrap(),
            KernelSpec::Product2d(Box::new(KernelSpec::Gaussian { bandwidth: 0.2 }))
        );
        assert!(KernelSpec::parse("gaussian", None).is_err());
        assert!(KernelSpec::parse("gaussian", Some(-1.0)).is_err());
        assert!(KernelSpec::parse("spline", None).is_err());
        assert!(KernelSpec::parse("product:product:brownian", None).is_err());
    }
}
