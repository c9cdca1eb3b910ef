//! JSON run configuration.
//!
//! Unknown keys are rejected everywhere. Relative data paths resolve
//! against the directory of the config file. `BOWLEY_OUT` and `BOWLEY_SEED`
//! override the output directory and the solver seed; command-line flags
//! override both.

use std::path::{Path, PathBuf};

use bowley_core::dataio::{self, DEFAULT_ROWS};
use bowley_core::game::{GameConfig, ScenarioSet};
use bowley_core::oracle::linspace;
use bowley_core::vpbgd::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files;

pub const OUT_ENV: &str = "BOWLEY_OUT";
pub const SEED_ENV: &str = "BOWLEY_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub data: DataSource,
    pub game: GameConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

/// Where the scenarios come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A `scenarios.csv` file.
    Scenarios { path: PathBuf },
    /// Loss-only scenarios given inline.
    Losses { losses: Vec<f64>, probs: Vec<f64> },
    /// County yields and weather grids, detrended and pooled.
    Records {
        yields: PathBuf,
        weather: PathBuf,
        #[serde(default = "default_rows")]
        rows: usize,
        #[serde(default = "default_price")]
        price: f64,
    },
    Synthetic {
        seed: u64,
        n: usize,
        basis_risk: f64,
        #[serde(default = "default_rows")]
        rows: usize,
    },
}

fn default_rows() -> usize {
    DEFAULT_ROWS
}

fn default_price() -> f64 {
    1.0
}

impl DataSource {
    pub fn load(&self, base: &Path) -> Result<ScenarioSet> {
        let at = |p: &Path| base.join(p);
        Ok(match self {
            DataSource::Scenarios { path } => files::read_scenarios(&at(path))?,
            DataSource::Losses { losses, probs } => ScenarioSet::from_losses(losses, probs)?,
            DataSource::Records {
                yields,
                weather,
                rows,
                price,
            } => {
                let y = files::read_yields(&at(yields))?;
                let w = files::read_weather(&at(weather), *rows)?;
                dataio::assemble(&y, &w, *rows, *price)?
            }
            DataSource::Synthetic {
                seed,
                n,
                basis_risk,
                rows,
            } => dataio::synth_generate(*seed, *n, *basis_risk, *rows)?,
        })
    }
}

/// Evenly spaced grid `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.points)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && self.points >= 1) {
            return Err(Error::Config(format!(
                "oracle.{name}: need finite lo <= hi and points >= 1"
            )));
        }
        Ok(())
    }
}

/// How the oracle models the farmer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FollowerSpec {
    /// Best stop-loss contract over `0` and the distinct losses.
    StopLoss,
    /// Best layer contract; the exact best response among layered payoffs.
    Layers,
    /// Every payoff vector on a per-scenario grid of spacing `step`.
    Enumerate { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub thetas: Grid,
    pub rhos: Grid,
    /// Values tried at each loss level for knot curves.
    pub curve_values: Vec<f64>,
    pub follower: FollowerSpec,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            thetas: Grid {
                lo: 0.0,
                hi: 4.0,
                points: 401,
            },
            rhos: Grid {
                lo: 1.0,
                hi: 6.0,
                points: 51,
            },
            curve_values: linspace(0.0, 2.0, 9),
            follower: FollowerSpec::Layers,
        }
    }
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        self.thetas.validate("thetas")?;
        self.rhos.validate("rhos")?;
        if self.curve_values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(
                "oracle.curve_values: entries must be finite and >= 0".into(),
            ));
        }
        if let FollowerSpec::Enumerate { step } = self.follower {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::Config("oracle.follower.step must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Farmer risk-aversion sweep: one solve per `lambda` with the farmer's
/// tail level kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            lambdas: vec![0.1, 0.5, 0.9],
        }
    }
}

/// Command-line and environment overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Overrides {
    /// Fills unset fields from `BOWLEY_OUT` / `BOWLEY_SEED`.
    pub fn with_env(mut self) -> Result<Self> {
        if self.out.is_none() {
            self.out = std::env::var_os(OUT_ENV).map(PathBuf::from);
        }
        if self.seed.is_none() {
            if let Ok(v) = std::env::var(SEED_ENV) {
                let seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}: not a u64: {v:?}")))?;
                self.seed = Some(seed);
            }
        }
        Ok(self)
    }
}

/// A parsed config with its base directory and resolved output directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Loaded {
    pub fn scenarios(&self) -> Result<ScenarioSet> {
        self.config.data.load(&self.base)
    }
}

pub fn parse(path: &Path, text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    config.game.validate()?;
    config.solver.validate()?;
    config.oracle.validate()?;
    if config.sweep.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::Config("sweep.lambdas: entries must lie in [0, 1]".into()));
    }
    Ok(config)
}

/// Reads, validates and applies overrides; flags beat the environment,
/// which beats the file. Without any output setting, results go next to
/// the config.
pub fn load(path: &Path, overrides: &Overrides) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = parse(path, &text)?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    if let Some(seed) = overrides.seed {
        config.solver.seed = seed;
    }
    let out = match (&overrides.out, &config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.clone(),
    };
    Ok(Loaded { config, base, out })
}
