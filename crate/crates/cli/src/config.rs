use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use screenlab::conditions::Mode;
use screenlab::dist::{CurveSamples, FamilySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Square(usize),
    Pair([usize; 2]),
}

impl Resolution {
    pub fn pair(&self) -> (usize, usize) {
        match self {
            Resolution::Square(n) => (*n, *n),
            Resolution::Pair([a, b]) => (*a, *b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_k")]
    pub k_target: usize,
    /// Largest relative LP gain over the simple price still consistent with
    /// a certificate (discretization error).
    #[serde(default = "default_gap_tolerance")]
    pub gap_tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { enabled: false, k_target: default_k(), gap_tolerance: default_gap_tolerance() }
    }
}

fn default_k() -> usize {
    231
}

fn default_gap_tolerance() -> f64 {
    0.02
}

fn default_resolution() -> Resolution {
    Resolution::Square(129)
}

fn default_mode() -> Mode {
    Mode::UnitDemand
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub distribution: FamilySpec,
    #[serde(default = "default_resolution")]
    pub resolution: Resolution,
    #[serde(default)]
    pub cost: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    /// `C(t1)` samples for unit demand, `theta(s)` samples for additive.
    pub curve: CurveSamples,
    /// Uniform price (unit demand) or bundle price (additive).
    pub point: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl RunConfig {
    /// Reads a config; raw-grid paths are taken relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        if let FamilySpec::RawGrid { path: p } = &mut cfg.distribution {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
            if !p.is_file() {
                bail!("raw grid file {} does not exist", p.display());
            }
        }
        cfg.distribution.validate()?;
        let (a, b) = cfg.resolution.pair();
        if a < 8 || b < 8 {
            bail!("resolution must be at least 8 in each direction");
        }
        if !cfg.cost.is_finite() {
            bail!("cost must be finite");
        }
        Ok(cfg)
    }
}

impl CounterexampleConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: CounterexampleConfig = read_json(path)?;
        if cfg.mode == Mode::UnitDemandIroned {
            bail!("counterexamples exist for unit_demand and additive modes only");
        }
        Ok(cfg)
    }
}
