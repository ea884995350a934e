//! Observation grids over the functional domain.

use crate::error::{validation, Result};

/// A finite grid of locations in the functional domain, together with the
/// rectangle-rule quadrature weight `Δ = |T|/m`.
///
/// Uniform grids are built from cell midpoints `t_j = (j − 1/2)/m`, so each
/// point owns a cell of measure exactly `Δ`. 1-D points must be strictly
/// increasing; 2-D grids are flattened row-major (first coordinate slowest)
/// and must be strictly lexicographically increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    /// Row-major coordinates, `m * dim` values.
    coords: Vec<f64>,
    delta: f64,
}

impl Grid {
    /// Uniform 1-D grid of `m` cell midpoints on `[0,1]`, `Δ = 1/m`.
    pub fn uniform_1d(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(validation(format!("grid needs m >= 2, got {m}")));
        }
        let coords = (0..m).map(|j| (j as f64 + 0.5) / m as f64).collect();
        Ok(Grid { dim: 1, coords, delta: 1.0 / m as f64 })
    }

    /// Uniform 2-D grid of `m1 × m2` cell midpoints on `[0,1]²`, flattened
    /// row-major (first coordinate slowest), `Δ = 1/(m1·m2)`.
    pub fn uniform_2d(m1: usize, m2: usize) -> Result<Self> {
        if m1 < 2 || m2 < 2 {
            return Err(validation(format!("2-D grid needs m1,m2 >= 2, got ({m1},{m2})")));
        }
        let mut coords = Vec::with_capacity(2 * m1 * m2);
        for i in 0..m1 {
            let t1 = (i as f64 + 0.5) / m1 as f64;
            for j in 0..m2 {
                let t2 = (j as f64 + 0.5) / m2 as f64;
                coords.push(t1);
                coords.push(t2);
            }
        }
        Ok(Grid { dim: 2, coords, delta: 1.0 / (m1 * m2) as f64 })
    }

    /// Grid from explicit coordinates with an explicit quadrature weight.
    pub fn from_coords(dim: usize, coords: Vec<f64>, delta: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(validation(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(validation("grid coordinate count not a multiple of dimension"));
        }
        let m = coords.len() / dim;
        if m < 2 {
            return Err(validation(format!("grid needs m >= 2, got {m}")));
        }
        if !(delta > 0.0) {
            return Err(validation(format!("grid delta must be positive, got {delta}")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(validation("grid coordinates must be finite"));
        }
        let grid = Grid { dim, coords, delta };
        for j in 1..m {
            if grid.point(j - 1) >= grid.point(j) {
                return Err(validation(format!(
                    "grid points must be strictly {} increasing (violated at row {j})",
                    if dim == 1 { "" } else { "lexicographically" }
                )));
            }
        }
        Ok(grid)
    }

    /// Sub-grid restricted to `indices` (strictly ascending), keeping the
    /// parent's per-cell quadrature weight.
    pub fn subgrid(&self, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(validation("subgrid needs at least 2 points"));
        }
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        let mut prev = None;
        for &j in indices {
            if j >= self.len() {
                return Err(validation(format!("subgrid index {j} out of range")));
            }
            if let Some(p) = prev {
                if j <= p {
                    return Err(validation("subgrid indices must be strictly ascending"));
                }
            }
            prev = Some(j);
            coords.extend_from_slice(self.point(j));
        }
        Ok(Grid { dim: self.dim, coords, delta: self.delta })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Quadrature weight `Δ`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Coordinates of point `j` as a slice of length `dim`.
    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}
