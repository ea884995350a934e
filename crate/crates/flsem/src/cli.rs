//! Command-line surface. Every subcommand is a thin wrapper over the
//! library: `simulate`, `screen`, `fit-exposure`, `fit-outcome`, `fit`
//! (full pipeline), `test`, `check-iv`, and `benchmark`.
//!
//! File conventions: matrices are headerless CSV with one subject per row,
//! vectors one value per line, grids one location per row (1 or 2 columns);
//! reports are JSON. Indices in files are 0-based. Exit codes: 0 success,
//! 2 validation error, 3 numerical failure, 4 guard exceeded.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::datagen::{generate, Design, SimConfig};
use crate::error::{validation, FlsemError, Result};
use crate::exposure::{
    fgsdar_fit_with_ctx, fixed_point_check, GramContext, LambdaChoice,
};
use crate::inference::{nullity_test, SigmaSource};
use crate::io;
use crate::ivcheck::{check_identifiability, IvProblem};
use crate::numerics::{default_kernel, KernelSpec};
use crate::outcome::{
    default_outcome_lambda, outcome_fit_with_ctx, select_sparsity, OutcomeOptions,
};
use crate::pipeline::{
    example1_study, example2_study, power_study, run_pipeline, write_dataset,
    write_table_csv, BenchParams, JyChoice, PipelineConfig, StudyTable,
};
use crate::scale::{dc_exposure_fit, make_partition, make_windows, WindowPlan};
use crate::screening::{default_screen_size, dcor_screen_functional, sis_rank, union_screen};

#[derive(Parser)]
#[command(
    name = "flsem",
    about = "Two-stage causal estimation with an endogenous functional exposure",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Kernel family: brownian | ou | gaussian | product:<inner>
    #[arg(long)]
    kernel: Option<String>,
    /// Gaussian bandwidth (required with a gaussian family)
    #[arg(long, default_value_t = 0.2)]
    bandwidth: f64,
}

impl KernelArgs {
    fn resolve(&self, dim: usize) -> Result<KernelSpec> {
        match &self.kernel {
            Some(name) => KernelSpec::parse(name, Some(self.bandwidth)),
            None => Ok(default_kernel(dim)),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset into a directory
    Simulate {
        /// example1_1d | example2_2d | example4_power
        #[arg(long, default_value = "example1_1d")]
        design: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        p: usize,
        #[arg(long, default_value_t = 0.3)]
        rho1: f64,
        #[arg(long, default_value_t = 0.5)]
        rho2: f64,
        /// Signal scale for the power design
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        /// 1-D grid size
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// 2-D grid sizes (reduced desk scale by default)
        #[arg(long, default_value_t = 20)]
        m1: usize,
        #[arg(long, default_value_t = 30)]
        m2: usize,
        /// Use the full 100×150 grid for the 2-D design
        #[arg(long)]
        full_grid: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Marginal screening: SIS on (Y, X) and distance correlation on (Z, X)
    Screen {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        z: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Outcome-channel size (default ⌊n/ln n⌋)
        #[arg(long)]
        k_y: Option<usize>,
        /// Exposure-channel size (default ⌊n/ln n⌋)
        #[arg(long)]
        k_z: Option<usize>,
        /// Output file for surviving indices (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the sparse function-on-scalar exposure model
    FitExposure {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        z: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Group sparsity level
        #[arg(long)]
        j: usize,
        /// Smoothing parameter: a number or "gcv"
        #[arg(long, default_value = "gcv")]
        lambda_k: String,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Subject blocks for divide-and-conquer (1 = off)
        #[arg(long, default_value_t = 1)]
        dc_blocks: usize,
        /// Sliding-window width over the domain (enables windowing)
        #[arg(long)]
        window_width: Option<f64>,
        /// Sliding-window stride (defaults to the width)
        #[arg(long)]
        window_stride: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the sparse partial functional outcome model
    FitOutcome {
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        zhat: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Control sparsity: a number or "hbic"
        #[arg(long, default_value = "hbic")]
        jy: String,
        /// Ridge level for the functional term (default 1e-3·tr(Σ)/m)
        #[arg(long)]
        lambda: Option<f64>,
        /// Fit on the observed exposure instead (endogeneity-ignoring baseline)
        #[arg(long)]
        baseline_z: Option<PathBuf>,
        /// Use only the second half of the subjects (pairs with an exposure
        /// fit on the first half)
        #[arg(long)]
        split: bool,
        #[arg(long, default_value_t = 1)]
        dc_blocks: usize,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline (screen → exposure → Ẑ → outcome → test)
    Fit {
        /// Data directory with X.csv, Z.csv, Y.csv, grid.csv
        #[arg(long)]
        data: PathBuf,
        /// key=value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nullity test for the functional coefficient
    Test {
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        zhat: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Use the observed exposure in place of the fitted one
        #[arg(long)]
        observed_z: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        #[arg(long, default_value = "hbic")]
        jy: String,
        #[arg(long)]
        lambda: Option<f64>,
        /// Residual-variance source: full | null
        #[arg(long, default_value = "full")]
        sigma: String,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Output file for the JSON report (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identifiability check under possibly invalid instruments
    CheckIv {
        /// Reduced-form vector, one value per line
        #[arg(long)]
        gamma: PathBuf,
        /// L×R loading matrix
        #[arg(long)]
        loadings: PathBuf,
        /// Invalidity budget (strictly more than the number of invalid rows)
        #[arg(long)]
        u: usize,
        #[arg(long, default_value_t = 1e-8)]
        rank_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo table reproduction
    Benchmark {
        /// 1 = outcome metrics (1-D), 2 = exposure metrics (1-D),
        /// 3 = outcome metrics (2-D reduced grid), 4 = test rejection curve
        #[arg(long)]
        table: u32,
        #[arg(long, default_value_t = 0.3)]
        rho1: f64,
        #[arg(long, default_value_t = 0.7)]
        rho2: f64,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 20)]
        p: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Exposure sparsity level
        #[arg(long, default_value_t = 5)]
        j: usize,
        /// Worker threads (falls back to FLSEM_THREADS, then all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// Fit exposure and outcome stages on disjoint halves
        #[arg(long)]
        split: bool,
        /// Signal grid for table 4, comma-separated
        #[arg(long, default_value = "0,0.04,0.08,0.12,0.16,0.2")]
        b_grid: String,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// Output CSV file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_lambda_choice(s: &str) -> Result<LambdaChoice> {
    if s == "gcv" {
        Ok(LambdaChoice::Gcv)
    } else {
        let v: f64 = s
            .parse()
            .map_err(|_| validation(format!("lambda-k: expected a number or 'gcv', got '{s}'")))?;
        Ok(LambdaChoice::Fixed(v))
    }
}

fn parse_jy_choice(s: &str) -> Result<JyChoice> {
    if s == "hbic" {
        Ok(JyChoice::default())
    } else {
        let v: usize = s
            .parse()
            .map_err(|_| validation(format!("jy: expected a number or 'hbic', got '{s}'")))?;
        Ok(JyChoice::Fixed(v))
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(FlsemError::Io)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn threads_or_env(threads: Option<usize>) -> usize {
    threads.or_else(|| std::env::var("FLSEM_THREADS").ok()?.parse().ok()).unwrap_or(0)
}

fn run_command(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            design,
            n,
            p,
            rho1,
            rho2,
            b,
            m,
            m1,
            m2,
            full_grid,
            seed,
            out,
        } => {
            let design = Design::parse(&design)?;
            let mut cfg = match design {
                Design::Example1OneDim => SimConfig::example1(n, p, rho1, rho2, seed),
                Design::Example4Power => SimConfig::example4(n, p, rho1, rho2, b, seed),
                Design::Example2TwoDim => SimConfig::example2(n, p, rho1, rho2, seed, full_grid),
            };
            match design {
                Design::Example2TwoDim => {
                    if !full_grid {
                        cfg.m1 = m1;
                        cfg.m2 = m2;
                    }
                }
                _ => cfg.m = m,
            }
            let ds = generate(&cfg)?;
            let files = write_dataset(&ds, &out)?;
            eprintln!("wrote {} files to {}", files.len(), out.display());
            Ok(())
        }

        Command::Screen { x, z, y, k_y, k_z, out } => {
            let x = io::read_matrix(&x)?;
            let z = io::read_matrix(&z)?;
            let y = io::read_vector(&y)?;
            let n = x.nrows();
            let k_y = k_y.unwrap_or_else(|| default_screen_size(n)).min(x.ncols());
            let k_z = k_z.unwrap_or_else(|| default_screen_size(n)).min(x.ncols());
            let survivors =
                union_screen(&sis_rank(&y, &x, k_y)?, &dcor_screen_functional(&z, &x, k_z)?);
            let text: String = survivors.iter().map(|i| format!("{i}\n")).collect();
            emit(&out, &text)
        }

        Command::FitExposure {
            x,
            z,
            grid,
            j,
            lambda_k,
            kernel,
            dc_blocks,
            window_width,
            window_stride,
            out,
        } => {
            let x = io::read_matrix(&x)?;
            let z = io::read_matrix(&z)?;
            let grid = io::read_grid(&grid)?;
            let kernel = kernel.resolve(grid.dim())?;
            let lambda = parse_lambda_choice(&lambda_k)?;
            std::fs::create_dir_all(&out).map_err(FlsemError::Io)?;
            let ctx = GramContext::new(&kernel, &grid)?;

            if dc_blocks > 1 || window_width.is_some() {
                let plan = match window_width {
                    Some(w) => make_windows(&grid, w, window_stride.unwrap_or(w))?,
                    None => WindowPlan::full_domain(&grid)?,
                };
                let part = make_partition(x.nrows(), dc_blocks)?;
                let dc = dc_exposure_fit(&x, &z, &grid, &kernel, j, &lambda, &part, &plan, 50)?;
                io::write_matrix(&out.join("coef.csv"), &dc.coef_on_grid)?;
                io::write_indices(&out.join("active.csv"), &dc.active_union)?;
                io::write_matrix(&out.join("zhat.csv"), &dc.zhat)?;
                let summary = serde_json::json!({
                    "j": j,
                    "dc_blocks": dc_blocks,
                    "windows": plan.windows.len(),
                    "active": dc.active_union,
                    "coef_csv_holds": "coefficient-function values on the grid",
                });
                std::fs::write(
                    out.join("fit.json"),
                    serde_json::to_string_pretty(&summary).unwrap() + "\n",
                )
                .map_err(FlsemError::Io)?;
            } else {
                let fit = fgsdar_fit_with_ctx(&x, &z, &grid, &kernel, &ctx, j, &lambda, 50)?;
                io::write_matrix(&out.join("coef.csv"), &fit.coef)?;
                io::write_indices(&out.join("active.csv"), &fit.active_set)?;
                let zhat = &x * &fit.coef * &ctx.sigma;
                io::write_matrix(&out.join("zhat.csv"), &zhat)?;
                let stable = fixed_point_check(&fit, &x, &z, None)?;
                let summary = serde_json::json!({
                    "j": j,
                    "lambda_k": fit.lambda_k,
                    "loss": fit.loss,
                    "iterations": fit.iterations,
                    "converged": fit.converged,
                    "fixed_point": stable,
                    "active": fit.active_set,
                });
                std::fs::write(
                    out.join("fit.json"),
                    serde_json::to_string_pretty(&summary).unwrap() + "\n",
                )
                .map_err(FlsemError::Io)?;
            }
            Ok(())
        }

        Command::FitOutcome {
            y,
            x,
            zhat,
            grid,
            jy,
            lambda,
            baseline_z,
            split,
            dc_blocks,
            kernel,
            out,
        } => {
            let y = io::read_vector(&y)?;
            let x = io::read_matrix(&x)?;
            let design_curves = match &baseline_z {
                Some(path) => io::read_matrix(path)?,
                None => io::read_matrix(&zhat)?,
            };
            let grid = io::read_grid(&grid)?;
            let kernel = kernel.resolve(grid.dim())?;
            let ctx = GramContext::new(&kernel, &grid)?;
            let jy = parse_jy_choice(&jy)?;
            let lambda = lambda.unwrap_or_else(|| default_outcome_lambda(&ctx));
            std::fs::create_dir_all(&out).map_err(FlsemError::Io)?;

            let n = y.len();
            let rows = if split { n / 2..n } else { 0..n };
            let y_fit = DVector::from_fn(rows.end - rows.start, |i, _| y[rows.start + i]);
            let x_fit = x.rows(rows.start, rows.end - rows.start).clone_owned();
            let c_fit = design_curves.rows(rows.start, rows.end - rows.start).clone_owned();

            let opts = OutcomeOptions::default();
            let fit = if dc_blocks > 1 {
                let part = make_partition(y_fit.len(), dc_blocks)?;
                let j_fixed = match &jy {
                    JyChoice::Fixed(j) => *j,
                    JyChoice::Hbic(grid) => *grid.last().unwrap(),
                };
                crate::scale::dc_outcome_fit(
                    &y_fit, &x_fit, &c_fit, &ctx, j_fixed, lambda, &part, &opts,
                )?
            } else {
                match &jy {
                    JyChoice::Fixed(j) => {
                        outcome_fit_with_ctx(&y_fit, &x_fit, &c_fit, &ctx, *j, lambda, &opts)?
                    }
                    JyChoice::Hbic(grid_j) => {
                        select_sparsity(&y_fit, &x_fit, &c_fit, &ctx, grid_j, lambda, &opts)?.1
                    }
                }
            };

            io::write_vector(&out.join("beta.csv"), &fit.beta)?;
            io::write_vector(&out.join("b_on_grid.csv"), &fit.b_on_grid)?;
            let summary = serde_json::json!({
                "active": fit.active_set,
                "lambda": fit.lambda,
                "sigma2": fit.sigma2,
                "loss": fit.loss,
                "iterations": fit.iterations,
                "converged": fit.converged,
                "baseline": baseline_z.is_some(),
                "split": split,
            });
            std::fs::write(
                out.join("fit.json"),
                serde_json::to_string_pretty(&summary).unwrap() + "\n",
            )
            .map_err(FlsemError::Io)?;
            Ok(())
        }

        Command::Fit { data, config, out } => {
            let cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(FlsemError::Io)?;
                    PipelineConfig::parse(&text)?
                }
                None => PipelineConfig::default(),
            };
            let manifest = run_pipeline(&data, &cfg, &out)?;
            eprintln!(
                "pipeline complete: {} stages, config hash {}",
                manifest.stages.len(),
                &manifest.config_hash[..12]
            );
            Ok(())
        }

        Command::Test {
            y,
            x,
            zhat,
            grid,
            observed_z,
            level,
            jy,
            lambda,
            sigma,
            kernel,
            out,
        } => {
            if !(level > 0.0 && level < 1.0) {
                return Err(validation("level must be in (0,1)"));
            }
            let y = io::read_vector(&y)?;
            let x = io::read_matrix(&x)?;
            let curves = match &observed_z {
                Some(path) => io::read_matrix(path)?,
                None => io::read_matrix(&zhat)?,
            };
            let grid = io::read_grid(&grid)?;
            let kernel = kernel.resolve(grid.dim())?;
            let ctx = GramContext::new(&kernel, &grid)?;
            let jy = parse_jy_choice(&jy)?;
            let lambda = lambda.unwrap_or_else(|| default_outcome_lambda(&ctx));
            let sigma_source = match sigma.as_str() {
                "full" => SigmaSource::FullFit,
                "null" => SigmaSource::NullFit,
                other => return Err(validation(format!("sigma: expected full/null, got '{other}'"))),
            };
            let opts = OutcomeOptions::default();
            let fit = match &jy {
                JyChoice::Fixed(j) => {
                    outcome_fit_with_ctx(&y, &x, &curves, &ctx, *j, lambda, &opts)?
                }
                JyChoice::Hbic(grid_j) => {
                    select_sparsity(&y, &x, &curves, &ctx, grid_j, lambda, &opts)?.1
                }
            };
            let result = nullity_test(&y, &x, &curves, &ctx, &fit, sigma_source)?;
            let report = serde_json::json!({
                "s_n": result.s_n,
                "zeta": result.zeta,
                "kappa": result.kappa,
                "sigma2": result.sigma2,
                "p_value": result.p_value,
                "tr_rn": result.tr_rn,
                "tr_rn2": result.tr_rn2,
                "level": level,
                "reject": result.p_value <= level,
                "observed_z": observed_z.is_some(),
            });
            emit(&out, &(serde_json::to_string_pretty(&report).unwrap() + "\n"))
        }

        Command::CheckIv { gamma, loadings, u, rank_tol, out } => {
            let gamma = io::read_vector(&gamma)?;
            let cmat = io::read_matrix(&loadings)?;
            let prob = IvProblem::with_tolerance(gamma, cmat, u, rank_tol)?;
            let report = check_identifiability(&prob)?;
            emit(&out, &(serde_json::to_string_pretty(&report).unwrap() + "\n"))
        }

        Command::Benchmark {
            table,
            rho1,
            rho2,
            reps,
            n,
            p,
            seed,
            j,
            threads,
            split,
            b_grid,
            level,
            out,
        } => {
            let mut params = BenchParams::default();
            params.rho1 = rho1;
            params.rho2 = rho2;
            params.reps = reps;
            params.p = p;
            params.seed = seed;
            params.j = j;
            params.split = split;
            params.threads = threads_or_env(threads);
            let csv = match table {
                1 => {
                    params.n = n.unwrap_or(200);
                    let cell = example1_study(&params)?;
                    write_table_csv(&StudyTable::table1(&[cell]))
                }
                2 => {
                    params.n = n.unwrap_or(200);
                    let cell = example1_study(&params)?;
                    write_table_csv(&StudyTable::table2(&[cell]))
                }
                3 => {
                    params.n = n.unwrap_or(400);
                    let cell = example2_study(&params)?;
                    write_table_csv(&StudyTable::table1(&[cell]))
                }
                4 => {
                    params.n = n.unwrap_or(200);
                    let bs: Result<Vec<f64>> = b_grid
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<f64>().map_err(|_| {
                                validation(format!("b-grid: cannot parse '{s}'"))
                            })
                        })
                        .collect();
                    let points = power_study(&params, &bs?, level, SigmaSource::FullFit)?;
                    write_table_csv(&StudyTable::table4(&points))
                }
                other => {
                    return Err(validation(format!(
                        "unknown table {other} (expected 1, 2, 3, or 4)"
                    )))
                }
            };
            emit(&out, &csv)
        }
    }
}

/// Parse arguments, dispatch, and map errors onto exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
