//! Plain headerless CSV readers/writers for the pipeline's file formats:
//! matrices are one subject per row, vectors one value per line, grids one
//! location per row (1 or 2 columns). Floats are written in Rust's default
//! shortest round-trip form, so rereading reproduces values bit-exactly.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{validation, FlsemError, Result};
use crate::numerics::Grid;

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| {
        validation(format!("{}:{}: cannot parse '{}' as a number", path.display(), line, tok))
    })
}

/// Read a rectangular numeric CSV (no header) into a matrix.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(FlsemError::Io)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| parse_f64(tok, path, i + 1))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(validation(format!(
                    "{}:{}: ragged row ({} values, expected {})",
                    path.display(),
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(validation(format!("{}: empty matrix file", path.display())));
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Read a one-value-per-line vector.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let mat = read_matrix(path)?;
    if mat.ncols() != 1 {
        return Err(validation(format!(
            "{}: expected one value per line, found {} columns",
            path.display(),
            mat.ncols()
        )));
    }
    Ok(mat.column(0).clone_owned())
}

pub fn write_matrix(path: &Path, mat: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", mat[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(FlsemError::Io)
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut out = String::new();
    for x in v.iter() {
        out.push_str(&format!("{x}\n"));
    }
    std::fs::write(path, out).map_err(FlsemError::Io)
}

pub fn write_indices(path: &Path, idx: &[usize]) -> Result<()> {
    let mut out = String::new();
    for i in idx {
        out.push_str(&format!("{i}\n"));
    }
    std::fs::write(path, out).map_err(FlsemError::Io)
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(FlsemError::Io)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(line.trim().parse::<usize>().map_err(|_| {
            validation(format!("{}:{}: cannot parse index '{}'", path.display(), i + 1, line))
        })?);
    }
    Ok(out)
}

/// Write grid locations, one per row (1 or 2 columns).
pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    let mut out = String::new();
    for pt in grid.points() {
        let cells: Vec<String> = pt.iter().map(|c| format!("{c}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(FlsemError::Io)
}

/// Read a grid file (uniform spacing assumed; the quadrature weight is
/// inferred from the spacing: cell length in 1-D, cell area in 2-D).
pub fn read_grid(path: &Path) -> Result<Grid> {
    let mat = read_matrix(path)?;
    let dim = mat.ncols();
    match dim {
        1 => {
            let m = mat.nrows();
            if m < 2 {
                return Err(validation("grid needs at least 2 points"));
            }
            let mut gaps = Vec::with_capacity(m - 1);
            for i in 1..m {
                gaps.push(mat[(i, 0)] - mat[(i - 1, 0)]);
            }
            let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
            if gaps.iter().any(|g| (g - mean_gap).abs() > 1e-8 * mean_gap.abs().max(1e-8)) {
                return Err(validation(format!(
                    "{}: non-uniform 1-D grid spacing",
                    path.display()
                )));
            }
            let coords: Vec<f64> = mat.column(0).iter().copied().collect();
            Grid::from_coords(1, coords, mean_gap)
        }
        2 => {
            let mut t1: Vec<f64> = mat.column(0).iter().copied().collect();
            let mut t2: Vec<f64> = mat.column(1).iter().copied().collect();
            t1.sort_by(|a, b| a.partial_cmp(b).unwrap());
            t1.dedup();
            t2.sort_by(|a, b| a.partial_cmp(b).unwrap());
            t2.dedup();
            if t1.len() < 2 || t2.len() < 2 {
                return Err(validation("2-D grid needs at least 2 distinct values per axis"));
            }
            let h1 = (t1[t1.len() - 1] - t1[0]) / (t1.len() - 1) as f64;
            let h2 = (t2[t2.len() - 1] - t2[0]) / (t2.len() - 1) as f64;
            let coords: Vec<f64> = (0..mat.nrows())
                .flat_map(|i| [mat[(i, 0)], mat[(i, 1)]])
                .collect();
            Grid::from_coords(2, coords, h1 * h2)
        }
        other => Err(validation(format!("grid files must have 1 or 2 columns, found {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mat = DMatrix::from_fn(5, 3, |i, j| {
            ((i * 3 + j) as f64).sin() * 1e3 + 1.0 / 3.0
        });
        write_matrix(&path, &mat).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(mat, back);
    }

    #[test]
    fn vector_and_index_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let vp = dir.path().join("v.csv");
        let v = DVector::from_vec(vec![1.5, -2.25, 1e-17]);
        write_vector(&vp, &v).unwrap();
        assert_eq!(read_vector(&vp).unwrap(), v);

        let ip = dir.path().join("idx.csv");
        write_indices(&ip, &[0, 4, 17]).unwrap();
        assert_eq!(read_indices(&ip).unwrap(), vec![0, 4, 17]);
    }

    #[test]
    fn grid_roundtrip_preserves_delta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let grid = Grid::uniform_1d(50).unwrap();
        write_grid(&path, &grid).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back.len(), 50);
        assert!((back.delta() - grid.delta()).abs() <= 1e-15);

        let grid2 = Grid::uniform_2d(4, 6).unwrap();
        write_grid(&path, &grid2).unwrap();
        let back2 = read_grid(&path).unwrap();
        assert_eq!(back2.dim(), 2);
        assert!((back2.delta() - grid2.delta()).abs() <= 1e-15);
    }

    #[test]
    fn malformed_files_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix(&path), Err(FlsemError::Validation(_))));
        std::fs::write(&path, "1,x\n").unwrap();
        assert!(matches!(read_matrix(&path), Err(FlsemError::Validation(_))));
        std::fs::write(&path, "").unwrap();
        assert!(read_matrix(&path).is_err());
        assert!(matches!(
            read_matrix(Path::new("/nonexistent/file.csv")),
            Err(FlsemError::Io(_))
        ));
    }
}
