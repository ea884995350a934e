//! File-based pipeline: read a data directory (`X.csv`, `Z.csv`, `Y.csv`,
//! `grid.csv`), run screen → fit-exposure → predict-zhat → fit-outcome →
//! test, and write each stage's outputs plus a manifest carrying the seed,
//! the config echo, a config hash, and a digest of every produced file.
//! Identical invocations produce bit-identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::datagen::FunctionalDataset;
use crate::error::{validation, FlsemError, Result};
use crate::exposure::{fgsdar_fit_with_ctx, GramContext};
use crate::inference::{nullity_test, TestResult};
use crate::io;
use crate::outcome::{
    default_outcome_lambda, outcome_fit_with_ctx, select_sparsity, OutcomeFit, OutcomeOptions,
};
use crate::pipeline::config::{JyChoice, PipelineConfig, ScreenMode};
use crate::scale::{dc_exposure_fit, dc_outcome_fit, make_partition, make_windows, WindowPlan};
use crate::screening::{default_screen_size, dcor_screen_functional, sis_rank, union_screen};

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub outputs: Vec<FileRecord>,
}

/// Reproducibility record written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn file_record(path: &Path, out_dir: &Path) -> Result<FileRecord> {
    let bytes = std::fs::read(path).map_err(FlsemError::Io)?;
    let rel = path.strip_prefix(out_dir).unwrap_or(path);
    Ok(FileRecord { path: rel.display().to_string(), sha256: sha256_hex(&bytes) })
}

fn config_hash(echo: &BTreeMap<String, String>) -> String {
    let canonical: String =
        echo.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    sha256_hex(canonical.as_bytes())
}

#[derive(Serialize)]
struct ExposureSummary {
    j: usize,
    lambda_k: f64,
    loss: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    active: Vec<usize>,
    dc_blocks: usize,
    windows: usize,
}

#[derive(Serialize)]
struct OutcomeSummary {
    jy: usize,
    lambda: f64,
    sigma2: f64,
    loss: f64,
    iterations: usize,
    converged: bool,
    active: Vec<usize>,
}

#[derive(Serialize)]
struct TestReport {
    #[serde(flatten)]
    result: TestResult,
    level: f64,
    reject: bool,
}

/// Write a simulated dataset in the pipeline's file layout
/// (plus `truth.json` when ground truth is attached).
pub fn write_dataset(ds: &FunctionalDataset, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(FlsemError::Io)?;
    let mut written = Vec::new();
    let x_path = out_dir.join("X.csv");
    io::write_matrix(&x_path, &ds.x)?;
    written.push(x_path);
    let z_path = out_dir.join("Z.csv");
    io::write_matrix(&z_path, &ds.z)?;
    written.push(z_path);
    let y_path = out_dir.join("Y.csv");
    io::write_vector(&y_path, &ds.y)?;
    written.push(y_path);
    let g_path = out_dir.join("grid.csv");
    io::write_grid(&g_path, &ds.grid)?;
    written.push(g_path);
    if let Some(truth) = &ds.truth {
        let t_path = out_dir.join("truth.json");
        let json = serde_json::to_string_pretty(truth)
            .map_err(|e| validation(format!("truth serialization: {e}")))?;
        std::fs::write(&t_path, json + "\n").map_err(FlsemError::Io)?;
        written.push(t_path);
    }
    Ok(written)
}

/// Load a dataset directory written by `write_dataset` (truth optional).
pub fn read_dataset(dir: &Path) -> Result<FunctionalDataset> {
    let x = io::read_matrix(&dir.join("X.csv"))?;
    let z = io::read_matrix(&dir.join("Z.csv"))?;
    let y = io::read_vector(&dir.join("Y.csv"))?;
    let grid = io::read_grid(&dir.join("grid.csv"))?;
    if z.ncols() != grid.len() {
        return Err(validation(format!(
            "Z has {} columns but the grid has {} points",
            z.ncols(),
            grid.len()
        )));
    }
    if x.nrows() != z.nrows() || y.len() != x.nrows() {
        return Err(validation("X, Z, Y row counts disagree"));
    }
    let truth = match std::fs::read_to_string(dir.join("truth.json")) {
        Ok(text) => Some(
            serde_json::from_str(&text)
                .map_err(|e| validation(format!("truth.json: {e}")))?,
        ),
        Err(_) => None,
    };
    Ok(FunctionalDataset { x, z, y, grid, truth })
}

fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), idx.len());
    for (c, &l) in idx.iter().enumerate() {
        out.set_column(c, &x.column(l));
    }
    out
}

fn scatter_rows(rows: &DMatrix<f64>, kept: &[usize], p: usize) -> DMatrix<f64> {
    let mut full = DMatrix::zeros(p, rows.ncols());
    for (r, &orig) in kept.iter().enumerate() {
        full.set_row(orig, &rows.row(r));
    }
    full
}

/// Run the full pipeline on a data directory; returns the manifest (which
/// is also written to `out_dir/manifest.json`).
pub fn run_pipeline(
    data_dir: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<Manifest> {
    let ds = read_dataset(data_dir)?;
    let (n, p) = (ds.x.nrows(), ds.x.ncols());
    let kernel = cfg.kernel_for_dim(ds.grid.dim())?;
    let ctx = GramContext::new(&kernel, &ds.grid)?;
    std::fs::create_dir_all(out_dir).map_err(FlsemError::Io)?;
    let mut stages: Vec<StageRecord> = Vec::new();
    let record = |paths: &[PathBuf], name: &str, stages: &mut Vec<StageRecord>| -> Result<()> {
        let mut outputs = Vec::new();
        for p in paths {
            outputs.push(file_record(p, out_dir)?);
        }
        stages.push(StageRecord { name: name.to_string(), outputs });
        Ok(())
    };

    // stage 1: screening
    let do_screen = match cfg.screen {
        ScreenMode::On => true,
        ScreenMode::Off => false,
        ScreenMode::Auto => p > n,
    };
    let kept: Vec<usize> = if do_screen {
        let k_y = cfg.k_y.unwrap_or_else(|| default_screen_size(n)).min(p);
        let k_z = cfg.k_z.unwrap_or_else(|| default_screen_size(n)).min(p);
        let idx_y = sis_rank(&ds.y, &ds.x, k_y)?;
        let idx_z = dcor_screen_functional(&ds.z, &ds.x, k_z)?;
        union_screen(&idx_y, &idx_z)
    } else {
        (0..p).collect()
    };
    let screen_path = out_dir.join("screen.csv");
    io::write_indices(&screen_path, &kept)?;
    record(&[screen_path], "screen", &mut stages)?;

    // subject split (exposure on the first half, outcome/test on the second)
    if cfg.split && n < 4 {
        return Err(validation("split requires at least 4 subjects"));
    }
    let (exp_rows, out_rows) = if cfg.split { (0..n / 2, n / 2..n) } else { (0..n, 0..n) };
    let x_kept = columns(&ds.x, &kept);
    let x_exp = x_kept.rows(exp_rows.start, exp_rows.end - exp_rows.start).clone_owned();
    let z_exp = ds.z.rows(exp_rows.start, exp_rows.end - exp_rows.start).clone_owned();

    // stage 2: exposure fit (direct or divide-and-conquer)
    let j = cfg.j.min(kept.len());
    let use_dc = cfg.dc_blocks > 1 || cfg.window_width.is_some();
    let (coef_out, coef_on_grid_kept, active_kept, summary) = if use_dc {
        let plan = match cfg.window_width {
            Some(w) => make_windows(&ds.grid, w, cfg.window_stride.unwrap_or(w))?,
            None => WindowPlan::full_domain(&ds.grid)?,
        };
        let part = make_partition(x_exp.nrows(), cfg.dc_blocks)?;
        let dc = dc_exposure_fit(
            &x_exp, &z_exp, &ds.grid, &kernel, j, &cfg.lambda_k, &part, &plan, 50,
        )?;
        let lambda_k = match cfg.lambda_k {
            crate::exposure::LambdaChoice::Fixed(l) => l,
            _ => f64::NAN,
        };
        let summary = ExposureSummary {
            j,
            lambda_k,
            loss: None,
            iterations: None,
            converged: None,
            active: dc.active_union.iter().map(|&l| kept[l]).collect(),
            dc_blocks: cfg.dc_blocks,
            windows: plan.windows.len(),
        };
        (dc.coef_on_grid.clone(), dc.coef_on_grid, dc.active_union, summary)
    } else {
        let fit = fgsdar_fit_with_ctx(
            &x_exp, &z_exp, &ds.grid, &kernel, &ctx, j, &cfg.lambda_k, 50,
        )?;
        let summary = ExposureSummary {
            j,
            lambda_k: fit.lambda_k,
            loss: Some(fit.loss),
            iterations: Some(fit.iterations),
            converged: Some(fit.converged),
            active: fit.active_set.iter().map(|&l| kept[l]).collect(),
            dc_blocks: 1,
            windows: 1,
        };
        let vals = fit.coef_on_grid(&ctx);
        (fit.coef.clone(), vals, fit.active_set.clone(), summary)
    };

    let coef_path = out_dir.join("coef.csv");
    io::write_matrix(&coef_path, &scatter_rows(&coef_out, &kept, p))?;
    let active_path = out_dir.join("active.csv");
    io::write_indices(&active_path, &summary.active)?;
    let efit_path = out_dir.join("fit_exposure.json");
    std::fs::write(
        &efit_path,
        serde_json::to_string_pretty(&summary)
            .map_err(|e| validation(format!("summary serialization: {e}")))?
            + "\n",
    )
    .map_err(FlsemError::Io)?;
    record(&[coef_path, active_path, efit_path], "fit-exposure", &mut stages)?;

    // stage 3: fitted curves for every subject
    let zhat_all = &x_kept * &coef_on_grid_kept; // values-on-grid route
    let zhat_path = out_dir.join("zhat.csv");
    io::write_matrix(&zhat_path, &zhat_all)?;
    record(&[zhat_path], "predict-zhat", &mut stages)?;
    let _ = active_kept;

    // stage 4: outcome fit
    let x_out = x_kept.rows(out_rows.start, out_rows.end - out_rows.start).clone_owned();
    let y_out =
        DVector::from_fn(out_rows.end - out_rows.start, |i, _| ds.y[out_rows.start + i]);
    let zhat_out = zhat_all.rows(out_rows.start, out_rows.end - out_rows.start).clone_owned();
    let lambda = cfg.lambda.unwrap_or_else(|| default_outcome_lambda(&ctx));
    let opts = OutcomeOptions::default();
    let ofit: OutcomeFit = if cfg.dc_blocks > 1 {
        let part = make_partition(x_out.nrows(), cfg.dc_blocks)?;
        let jy = match &cfg.jy {
            JyChoice::Fixed(j) => *j,
            JyChoice::Hbic(grid) => *grid.last().unwrap(),
        };
        dc_outcome_fit(&y_out, &x_out, &zhat_out, &ctx, jy, lambda, &part, &opts)?
    } else {
        match &cfg.jy {
            JyChoice::Fixed(jy) => {
                outcome_fit_with_ctx(&y_out, &x_out, &zhat_out, &ctx, *jy, lambda, &opts)?
            }
            JyChoice::Hbic(grid) => {
                select_sparsity(&y_out, &x_out, &zhat_out, &ctx, grid, lambda, &opts)?.1
            }
        }
    };
    let beta_full = {
        let mut full = DVector::zeros(p);
        for (k, &orig) in kept.iter().enumerate() {
            full[orig] = ofit.beta[k];
        }
        full
    };
    let beta_path = out_dir.join("beta.csv");
    io::write_vector(&beta_path, &beta_full)?;
    let bgrid_path = out_dir.join("b_on_grid.csv");
    io::write_vector(&bgrid_path, &ofit.b_on_grid)?;
    let osum = OutcomeSummary {
        jy: ofit.active_set.len(),
        lambda: ofit.lambda,
        sigma2: ofit.sigma2,
        loss: ofit.loss,
        iterations: ofit.iterations,
        converged: ofit.converged,
        active: ofit.active_set.iter().map(|&l| kept[l]).collect(),
    };
    let ofit_path = out_dir.join("fit_outcome.json");
    std::fs::write(
        &ofit_path,
        serde_json::to_string_pretty(&osum)
            .map_err(|e| validation(format!("summary serialization: {e}")))?
            + "\n",
    )
    .map_err(FlsemError::Io)?;
    record(&[beta_path, bgrid_path, ofit_path], "fit-outcome", &mut stages)?;

    // stage 5: nullity test
    let result = nullity_test(&y_out, &x_out, &zhat_out, &ctx, &ofit, cfg.sigma_source)?;
    let report = TestReport {
        reject: result.p_value <= cfg.level,
        level: cfg.level,
        result,
    };
    let test_path = out_dir.join("test.json");
    std::fs::write(
        &test_path,
        serde_json::to_string_pretty(&report)
            .map_err(|e| validation(format!("report serialization: {e}")))?
            + "\n",
    )
    .map_err(FlsemError::Io)?;
    record(&[test_path], "test", &mut stages)?;

    let manifest = Manifest {
        seed: cfg.seed,
        config: cfg.echo.clone(),
        config_hash: config_hash(&cfg.echo),
        stages,
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| validation(format!("manifest serialization: {e}")))?
            + "\n",
    )
    .map_err(FlsemError::Io)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, SimConfig};

    #[test]
    fn pipeline_writes_five_stages_and_replays_bit_identically() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let sim = SimConfig::example1(60, 10, 0.3, 0.5, 99);
        let mut small = sim.clone();
        small.m = 30;
        let ds = generate(&small).unwrap();
        write_dataset(&ds, &data_dir).unwrap();

        let cfg = PipelineConfig::parse("j=6\nlambda_k=0.001\njy_grid=4:6\nseed=99\n").unwrap();
        let out1 = dir.path().join("run1");
        let out2 = dir.path().join("run2");
        let m1 = run_pipeline(&data_dir, &cfg, &out1).unwrap();
        let m2 = run_pipeline(&data_dir, &cfg, &out2).unwrap();

        assert_eq!(m1.stages.len(), 5);
        let names: Vec<&str> = m1.stages.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["screen", "fit-exposure", "predict-zhat", "fit-outcome", "test"]);

        // bit-identical outputs across reruns
        for (a, b) in m1.stages.iter().zip(&m2.stages) {
            for (fa, fb) in a.outputs.iter().zip(&b.outputs) {
                assert_eq!(fa.sha256, fb.sha256, "{} differs", fa.path);
            }
        }
        assert_eq!(m1.config_hash, m2.config_hash);
        assert!(out1.join("manifest.json").exists());
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let sim = SimConfig::example2(10, 10, 0.2, 0.3, 5, false);
        let ds = generate(&sim).unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.z, ds.z);
        assert_eq!(back.y, ds.y);
        assert_eq!(back.grid.len(), ds.grid.len());
        assert!(back.truth.is_some());
    }
}
