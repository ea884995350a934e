//! `key=value` pipeline configuration.
//!
//! Unknown keys are rejected; a duplicated key takes its last value and
//! prints a warning. Numeric validation happens at parse time (e.g. `rho2`
//! values that break the joint noise covariance are refused here, not deep
//! inside a replicate).

use std::collections::BTreeMap;

use crate::datagen::{Design, SimConfig};
use crate::error::{validation, Result};
use crate::exposure::LambdaChoice;
use crate::inference::SigmaSource;
use crate::numerics::KernelSpec;

/// How the outcome sparsity level is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JyChoice {
    Fixed(usize),
    /// Minimize the high-dimensional BIC over this grid.
    Hbic(Vec<usize>),
}

impl Default for JyChoice {
    fn default() -> Self {
        JyChoice::Hbic((4..=10).collect())
    }
}

/// Whether the screening stage runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScreenMode {
    /// Screen exactly when `p > n`.
    #[default]
    Auto,
    On,
    Off,
}

/// Parsed pipeline configuration with defaults filled in.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    // simulation design (used by `simulate` and `benchmark`)
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub b: f64,
    pub m: usize,
    pub m1: usize,
    pub m2: usize,
    pub full_grid: bool,
    pub seed: u64,
    // fitting
    pub kernel_name: Option<String>,
    pub bandwidth: f64,
    pub j: usize,
    pub lambda_k: LambdaChoice,
    pub jy: JyChoice,
    pub lambda: Option<f64>,
    pub split: bool,
    pub screen: ScreenMode,
    pub k_y: Option<usize>,
    pub k_z: Option<usize>,
    pub dc_blocks: usize,
    pub window_width: Option<f64>,
    pub window_stride: Option<f64>,
    pub level: f64,
    pub sigma_source: SigmaSource,
    /// Raw key/value echo for the manifest.
    pub echo: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            design: Design::Example1OneDim,
            n: 200,
            p: 20,
            rho1: 0.3,
            rho2: 0.5,
            b: 0.0,
            m: 100,
            m1: 20,
            m2: 30,
            full_grid: false,
            seed: 1,
            kernel_name: None,
            bandwidth: 0.2,
            j: 10,
            lambda_k: LambdaChoice::Gcv,
            jy: JyChoice::default(),
            lambda: None,
            split: false,
            screen: ScreenMode::Auto,
            k_y: None,
            k_z: None,
            dc_blocks: 1,
            window_width: None,
            window_stride: None,
            level: 0.05,
            sigma_source: SigmaSource::FullFit,
            echo: BTreeMap::new(),
        }
    }
}

fn parse_bool(v: &str, key: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(validation(format!("{key}: expected true/false, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| validation(format!("{key}: cannot parse '{v}'")))
}

/// Parse a sparsity grid `a:b` (inclusive) or a comma list `a,b,c`.
fn parse_j_grid(v: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = v.split_once(':') {
        let lo: usize = parse_num(a.trim(), "jy_grid")?;
        let hi: usize = parse_num(b.trim(), "jy_grid")?;
        if lo == 0 || hi < lo {
            return Err(validation(format!("jy_grid: bad range '{v}'")));
        }
        Ok((lo..=hi).collect())
    } else {
        v.split(',').map(|t| parse_num(t.trim(), "jy_grid")).collect()
    }
}

impl PipelineConfig {
    /// Parse configuration text (`key=value` lines, `#` comments).
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                validation(format!("config line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if let Some(old) = seen.insert(key.clone(), value.clone()) {
                eprintln!(
                    "warning: duplicate config key '{key}' (was '{old}', using '{value}')"
                );
            }
        }
        for (key, value) in &seen {
            cfg.apply(key, value)?;
        }
        cfg.echo = seen;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "design" => self.design = Design::parse(v)?,
            "n" => self.n = parse_num(v, key)?,
            "p" => self.p = parse_num(v, key)?,
            "rho1" => self.rho1 = parse_num(v, key)?,
            "rho2" => self.rho2 = parse_num(v, key)?,
            "b" => self.b = parse_num(v, key)?,
            "m" => self.m = parse_num(v, key)?,
            "m1" => self.m1 = parse_num(v, key)?,
            "m2" => self.m2 = parse_num(v, key)?,
            "full_grid" => self.full_grid = parse_bool(v, key)?,
            "seed" => self.seed = parse_num(v, key)?,
            "kernel" => self.kernel_name = Some(v.to_string()),
            "bandwidth" => self.bandwidth = parse_num(v, key)?,
            "j" => self.j = parse_num(v, key)?,
            "lambda_k" => {
                self.lambda_k = if v == "gcv" {
                    LambdaChoice::Gcv
                } else {
                    LambdaChoice::Fixed(parse_num(v, key)?)
                }
            }
            "jy" => {
                self.jy = if v == "hbic" {
                    JyChoice::default()
                } else {
                    JyChoice::Fixed(parse_num(v, key)?)
                }
            }
            "jy_grid" => self.jy = JyChoice::Hbic(parse_j_grid(v)?),
            "lambda" => self.lambda = Some(parse_num(v, key)?),
            "split" => self.split = parse_bool(v, key)?,
            "screen" => {
                self.screen = match v {
                    "auto" => ScreenMode::Auto,
                    "on" => ScreenMode::On,
                    "off" => ScreenMode::Off,
                    _ => return Err(validation(format!("screen: expected auto/on/off, got '{v}'"))),
                }
            }
            "k_y" => self.k_y = Some(parse_num(v, key)?),
            "k_z" => self.k_z = Some(parse_num(v, key)?),
            "dc_blocks" => self.dc_blocks = parse_num(v, key)?,
            "window_width" => self.window_width = Some(parse_num(v, key)?),
            "window_stride" => self.window_stride = Some(parse_num(v, key)?),
            "level" => self.level = parse_num(v, key)?,
            "test_sigma" => {
                self.sigma_source = match v {
                    "full" => SigmaSource::FullFit,
                    "null" => SigmaSource::NullFit,
                    _ => return Err(validation(format!("test_sigma: expected full/null, got '{v}'"))),
                }
            }
            other => return Err(validation(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config().validate()?;
        if self.j == 0 {
            return Err(validation("j must be positive"));
        }
        if let LambdaChoice::Fixed(l) = self.lambda_k {
            if !(l >= 0.0) {
                return Err(validation("lambda_k must be nonnegative"));
            }
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(validation("lambda must be positive"));
            }
        }
        if let JyChoice::Hbic(grid) = &self.jy {
            if grid.is_empty() {
                return Err(validation("jy grid must be nonempty"));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(validation("level must be in (0,1)"));
        }
        if self.dc_blocks == 0 {
            return Err(validation("dc_blocks must be at least 1"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(validation("bandwidth must be positive"));
        }
        Ok(())
    }

    /// Simulation design implied by the config.
    pub fn sim_config(&self) -> SimConfig {
        let mut sim = match self.design {
            Design::Example1OneDim => {
                SimConfig::example1(self.n, self.p, self.rho1, self.rho2, self.seed)
            }
            Design::Example4Power => {
                SimConfig::example4(self.n, self.p, self.rho1, self.rho2, self.b, self.seed)
            }
            Design::Example2TwoDim => SimConfig::example2(
                self.n,
                self.p,
                self.rho1,
                self.rho2,
                self.seed,
                self.full_grid,
            ),
        };
        match self.design {
            Design::Example2TwoDim => {
                if !self.full_grid {
                    sim.m1 = self.m1;
                    sim.m2 = self.m2;
                }
            }
            _ => sim.m = self.m,
        }
        sim
    }

    /// Kernel to use on a grid of the given dimension: the configured
    /// family, or the default Gaussian (product form in 2-D).
    pub fn kernel_for_dim(&self, dim: usize) -> Result<KernelSpec> {
        match &self.kernel_name {
            Some(name) => KernelSpec::parse(name, Some(self.bandwidth)),
            None => Ok(crate::numerics::default_kernel(dim)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = PipelineConfig::parse("").unwrap();
        assert_eq!(cfg.n, 200);
        assert_eq!(cfg.j, 10);
        assert_eq!(cfg.lambda_k, LambdaChoice::Gcv);
        assert_eq!(cfg.jy, JyChoice::Hbic((4..=10).collect()));
        assert_eq!(cfg.level, 0.05);
    }

    #[test]
    fn rho2_psd_violation_rejected() {
        assert!(PipelineConfig::parse("rho2=2.0").is_err());
        assert!(PipelineConfig::parse("rho2=0.7").is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::parse("frobnicate=1").is_err());
    }

    #[test]
    fn duplicate_key_last_wins() {
        let cfg = PipelineConfig::parse("n=100\nn=150\n").unwrap();
        assert_eq!(cfg.n, 150);
    }

    #[test]
    fn comments_and_grids() {
        let cfg = PipelineConfig::parse("# comment\njy_grid=4:6\nlambda_k=0.001\n").unwrap();
        assert_eq!(cfg.jy, JyChoice::Hbic(vec![4, 5, 6]));
        assert_eq!(cfg.lambda_k, LambdaChoice::Fixed(1e-3));
        let cfg = PipelineConfig::parse("jy_grid=3,5,9").unwrap();
        assert_eq!(cfg.jy, JyChoice::Hbic(vec![3, 5, 9]));
    }

    #[test]
    fn kernel_defaults_by_dimension() {
        let cfg = PipelineConfig::parse("").unwrap();
        assert_eq!(cfg.kernel_for_dim(1).unwrap(), KernelSpec::OrnsteinUhlenbeck);
        assert_eq!(
            cfg.kernel_for_dim(2).unwrap(),
            KernelSpec::Product2d(Box::new(KernelSpec::OrnsteinUhlenbeck))
        );
        let cfg = PipelineConfig::parse("kernel=gaussian\nbandwidth=0.2").unwrap();
        assert_eq!(
            cfg.kernel_for_dim(1).unwrap(),
            KernelSpec::Gaussian { bandwidth: 0.2 }
        );
        let cfg = PipelineConfig::parse("kernel=brownian").unwrap();
        assert_eq!(cfg.kernel_for_dim(1).unwrap(), KernelSpec::Brownian);
    }
}
