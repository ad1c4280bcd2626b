//! Run configuration: `key = value` files overlaid by command-line flags.

use std::path::PathBuf;

use spfem::occupancy::{DistributionKind, DistributionParams};
use spfem::oracle::Example;
use spfem::scf::ScfConfig;

pub const KEYS: &[&str] = &[
    "example",
    "distribution",
    "f0",
    "mu",
    "N0",
    "m",
    "meshes",
    "tol",
    "max_iter",
    "damping",
    "l_max",
    "seed",
    "deterministic",
    "out",
    "threads",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub example: u32,
    pub distribution: DistributionKind,
    pub f0: f64,
    pub mu: f64,
    pub n0: f64,
    pub m: usize,
    pub meshes: Vec<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub l_max: usize,
    pub seed: u64,
    pub deterministic: bool,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scf = ScfConfig::default();
        Self {
            example: 1,
            distribution: DistributionKind::Boltzmann,
            f0: 1.0,
            mu: 0.1,
            n0: 100.0,
            m: 8,
            meshes: vec![4, 8, 16],
            tol: scf.tol_rel,
            max_iter: scf.max_iter,
            damping: scf.damping,
            l_max: scf.l_max,
            seed: scf.seed,
            deterministic: false,
            out: None,
            threads: None,
        }
    }
}

/// A configuration problem, always naming the offending key.
#[derive(Debug, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| err(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(err(key, format!("expected a boolean, found `{other}`"))),
    }
}

pub fn parse_meshes(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(|s| parse_num::<usize>(key, s))
        .collect()
}

pub fn parse_distribution(key: &str, value: &str) -> Result<DistributionKind, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "boltzmann" => Ok(DistributionKind::Boltzmann),
        "fermi-dirac" | "fermidirac" | "fermi_dirac" => Ok(DistributionKind::FermiDirac),
        other => Err(err(key, format!("unknown distribution `{other}`"))),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "example" => self.example = parse_num(key, value)?,
            "distribution" => self.distribution = parse_distribution(key, value)?,
            "f0" => self.f0 = parse_num(key, value)?,
            "mu" => self.mu = parse_num(key, value)?,
            "N0" | "n0" => self.n0 = parse_num(key, value)?,
            "m" => self.m = parse_num(key, value)?,
            "meshes" => self.meshes = parse_meshes(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "max_iter" => self.max_iter = parse_num(key, value)?,
            "damping" => self.damping = parse_num(key, value)?,
            "l_max" => self.l_max = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "threads" => self.threads = Some(parse_num(key, value)?),
            _ => return Err(err(key, format!("unknown key (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(&format!("line {}", n + 1), "expected `key = value`"))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        Example::from_id(self.example).map_err(|_| err("example", "must be 1 or 2"))?;
        for (key, v) in [("f0", self.f0), ("mu", self.mu), ("N0", self.n0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err(key, format!("must be positive, got {v}")));
            }
        }
        if self.m == 0 {
            return Err(err("m", "must be at least 1"));
        }
        if self.meshes.is_empty() || self.meshes.contains(&0) {
            return Err(err("meshes", "must be a nonempty list of positive sizes"));
        }
        if self.meshes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("meshes", "must be strictly increasing"));
        }
        if !(self.tol > 0.0) {
            return Err(err("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(err("max_iter", "must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(err("damping", "must lie in (0, 1]"));
        }
        if self.l_max == 0 {
            return Err(err("l_max", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(err("threads", "must be at least 1"));
        }
        Ok(())
    }

    pub fn example(&self) -> Example {
        Example::from_id(self.example).expect("validated")
    }

    pub fn params(&self) -> DistributionParams {
        DistributionParams::new(self.distribution, self.f0, self.mu, self.n0).expect("validated")
    }

    pub fn scf(&self) -> ScfConfig {
        ScfConfig {
            tol_rel: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
            l_max: self.l_max,
            seed: self.seed,
            ..ScfConfig::default()
        }
    }
}
